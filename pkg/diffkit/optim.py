import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from utils.errors import DimensionError, NumericError
from .tensor import Tensor

logger = logging.getLogger(__name__)


@dataclass
class AdamState:
    """Буферы первого и второго моментов AdamW и номер шага."""
    m: List[np.ndarray] = field(default_factory=list)
    v: List[np.ndarray] = field(default_factory=list)
    step: int = 0

    @classmethod
    def for_params(cls, params: Sequence[Tensor]) -> "AdamState":
        return cls(
            m=[np.zeros_like(p.data) for p in params],
            v=[np.zeros_like(p.data) for p in params],
        )


def adam_step(
    params: Sequence[Tensor],
    grads: Sequence[np.ndarray],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    weight_decay: float = 0.0,
    lr_scales: Optional[Sequence[float]] = None,
) -> Sequence[Tensor]:
    """
    Один шаг AdamW с развязанным weight decay. Параметры обновляются на месте.

    lr_scales задает множитель скорости обучения для каждого параметра
    (группы параметров с разным lr).
    """
    if not (len(params) == len(grads) == len(state.m) == len(state.v)):
        raise DimensionError(
            f"adam_step: число параметров {len(params)}, градиентов {len(grads)}, "
            f"моментов {len(state.m)}/{len(state.v)} не совпадает"
        )
    next_step = state.step + 1
    for i, g in enumerate(grads):
        if g.shape != params[i].shape:
            raise DimensionError(f"adam_step: градиент {g.shape} не совпадает с параметром {params[i].shape}")
        if not np.all(np.isfinite(g)):
            name = params[i].name or f"#{i}"
            raise NumericError(f"Нечисловой градиент параметра {name}", step=next_step, component="grad")

    state.step = next_step
    bias1 = 1.0 - beta1 ** state.step
    bias2 = 1.0 - beta2 ** state.step
    for i, (p, g) in enumerate(zip(params, grads)):
        step_lr = lr * (lr_scales[i] if lr_scales is not None else 1.0)
        if weight_decay:
            p.data -= step_lr * weight_decay * p.data
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g * g
        m_hat = state.m[i] / bias1
        v_hat = state.v[i] / bias2
        p.data -= step_lr * m_hat / (np.sqrt(v_hat) + eps)
    return params
