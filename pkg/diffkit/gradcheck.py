from typing import Callable, Optional

import numpy as np

from .tensor import Tape, Tensor


def finite_diff_check(
    f: Callable[[Tensor], Tensor],
    x: Tensor,
    h: float = 1e-5,
    floor: float = 1e-3,
    max_entries: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> float:
    """
    Сравнивает градиент ленты с центральными конечными разностями.

    Возвращает максимальную относительную ошибку
    |g_tape - g_fd| / max(|g_tape|, |g_fd|, floor) по проверенным компонентам.
    x должен быть листовым тензором с requires_grad=True; f может замыкать
    любые другие тензоры. При max_entries проверяется случайная выборка
    компонент (для крупных параметров).
    """
    if not x.requires_grad:
        raise ValueError("finite_diff_check: x должен иметь requires_grad=True")

    with Tape() as tape:
        out = f(x)
    tape.backward(out, np.ones_like(out.data))
    analytic = tape.grad(x)
    if analytic is None:
        analytic = np.zeros_like(x.data)

    flat = x.data.reshape(-1)
    indices = np.arange(flat.size)
    if max_entries is not None and flat.size > max_entries:
        rng = rng if rng is not None else np.random.default_rng(0)
        indices = np.sort(rng.choice(flat.size, size=max_entries, replace=False))

    worst = 0.0
    analytic_flat = analytic.reshape(-1)
    for i in indices:
        original = flat[i]
        flat[i] = original + h
        plus = float(f(x).data.sum())
        flat[i] = original - h
        minus = float(f(x).data.sum())
        flat[i] = original
        numeric = (plus - minus) / (2.0 * h)
        a = float(analytic_flat[i])
        denom = max(abs(a), abs(numeric), floor)
        worst = max(worst, abs(a - numeric) / denom)
    return worst
