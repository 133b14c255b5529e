"""
Дифференцируемые операции над Tensor. Каждая операция вычисляет результат
в numpy и регистрирует правило обратного прохода в активной ленте.
"""
import math
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from utils.errors import DimensionError, DomainError
from .tensor import Tensor, as_tensor, make_result

Axis = Union[int, Tuple[int, ...], None]

_GELU_C = math.sqrt(2.0 / math.pi)


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Сворачивает градиент по осям, размноженным при broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for i, extent in enumerate(shape):
        if extent == 1 and grad.shape[i] != 1:
            grad = grad.sum(axis=i, keepdims=True)
    return grad


def _check_broadcast(op: str, a: Tensor, b: Tensor) -> Tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: несовместимые формы {a.shape} и {b.shape}") from None


# --- поэлементные операции ---

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("add", a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return make_result("add", a.data + b.data, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("sub", a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return make_result("sub", a.data - b.data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("mul", a, b)

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return make_result("mul", a.data * b.data, (a, b), backward)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast("div", a, b)
    out = a.data / b.data

    def backward(g):
        return (
            _unbroadcast(g / b.data, a.shape),
            _unbroadcast(-g * out / b.data, b.shape),
        )

    return make_result("div", out, (a, b), backward)


def neg(x) -> Tensor:
    x = as_tensor(x)
    return make_result("neg", -x.data, (x,), lambda g: (-g,))


def exp(x) -> Tensor:
    x = as_tensor(x)
    out = np.exp(x.data)
    return make_result("exp", out, (x,), lambda g: (g * out,))


def log(x) -> Tensor:
    x = as_tensor(x)
    if np.any(x.data <= 0):
        raise DomainError(f"log: аргумент содержит неположительные значения (min={x.data.min():.3g})")
    return make_result("log", np.log(x.data), (x,), lambda g: (g / x.data,))


def relu(x) -> Tensor:
    x = as_tensor(x)
    active = x.data > 0
    return make_result("relu", np.where(active, x.data, 0.0), (x,), lambda g: (g * active,))


def gelu(x) -> Tensor:
    """GELU в tanh-аппроксимации."""
    x = as_tensor(x)
    v = x.data
    inner = _GELU_C * (v + 0.044715 * v ** 3)
    t = np.tanh(inner)
    out = 0.5 * v * (1.0 + t)

    def backward(g):
        d_inner = _GELU_C * (1.0 + 3 * 0.044715 * v ** 2)
        return (g * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t ** 2) * d_inner),)

    return make_result("gelu", out, (x,), backward)


def square(x) -> Tensor:
    x = as_tensor(x)
    return make_result("square", x.data ** 2, (x,), lambda g: (2.0 * g * x.data,))


# --- редукции и изменение формы ---

def _norm_axis(axis: Axis, ndim: int) -> Tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def sum(x, axis: Axis = None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    axes = _norm_axis(axis, x.ndim)
    out = x.data.sum(axis=axes, keepdims=keepdims)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, x.shape).copy(),)

    return make_result("sum", out, (x,), backward)


def mean(x, axis: Axis = None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    axes = _norm_axis(axis, x.ndim)
    count = int(np.prod([x.shape[a] for a in axes])) if axes else 1
    out = x.data.mean(axis=axes, keepdims=keepdims) if axes else x.data.copy()

    def backward(g):
        if not keepdims and axes:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g / count, x.shape).copy(),)

    return make_result("mean", out, (x,), backward)


def reshape(x, shape: Sequence[int]) -> Tensor:
    x = as_tensor(x)
    original = x.shape
    try:
        out = x.data.reshape(tuple(shape))
    except ValueError:
        raise DimensionError(f"reshape: нельзя привести {original} к {tuple(shape)}") from None
    return make_result("reshape", out, (x,), lambda g: (g.reshape(original),))


def transpose(x, axes: Optional[Sequence[int]] = None) -> Tensor:
    x = as_tensor(x)
    if not axes:
        axes = tuple(reversed(range(x.ndim)))
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return make_result("transpose", np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inverse),))


def swap_last(x) -> Tensor:
    x = as_tensor(x)
    axes = list(range(x.ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return transpose(x, axes)


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    tensors = tuple(as_tensor(t) for t in tensors)
    if not tensors:
        raise DimensionError("concat: пустой список тензоров")
    ndim = tensors[0].ndim
    axis = axis % ndim
    for t in tensors:
        if t.ndim != ndim or any(
            t.shape[i] != tensors[0].shape[i] for i in range(ndim) if i != axis
        ):
            raise DimensionError(
                f"concat: формы {[t.shape for t in tensors]} не совпадают вне оси {axis}"
            )
    out = np.concatenate([t.data for t in tensors], axis=axis)
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return make_result("concat", out, tensors, backward)


def gather(x, indices, axis: int = 0) -> Tensor:
    """Выборка элементов по целочисленным индексам вдоль оси (np.take)."""
    x = as_tensor(x)
    idx = np.asarray(indices, dtype=np.int64)
    axis = axis % x.ndim
    if idx.size and (idx.min() < -x.shape[axis] or idx.max() >= x.shape[axis]):
        raise DimensionError(f"gather: индекс вне диапазона оси {axis} размера {x.shape[axis]}")
    out = np.take(x.data, idx, axis=axis)

    def backward(g):
        grad = np.zeros_like(x.data)
        moved = np.moveaxis(grad, axis, 0)
        g_moved = np.moveaxis(g, list(range(axis, axis + idx.ndim)), list(range(idx.ndim)))
        np.add.at(moved, idx, g_moved)
        return (grad,)

    return make_result("gather", out, (x,), backward)


# --- линейная алгебра и нормировки ---

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: несовместимые формы {a.shape} и {b.shape}")
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise DimensionError(f"matmul: пакетные оси {a.shape} и {b.shape} несовместимы") from None
    out = np.matmul(a.data, b.data)

    def backward(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return make_result("matmul", out, (a, b), backward)


def softmax(x, axis: int = -1, mask: Optional[np.ndarray] = None) -> Tensor:
    """
    Softmax со стабилизацией вычитанием максимума.

    mask (bool, broadcast к форме x): False исключает элемент; строка, где
    исключено все, дает нули.
    """
    x = as_tensor(x)
    z = x.data
    if mask is not None:
        mask = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)
        z = np.where(mask, z, -np.inf)
    m = np.max(z, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    e = np.exp(z - m)
    s = e.sum(axis=axis, keepdims=True)
    out = e / np.where(s == 0, 1.0, s)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return make_result("softmax", out, (x,), backward)


def log_softmax(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    m = np.max(x.data, axis=axis, keepdims=True)
    shifted = x.data - m
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse
    probs = np.exp(out)

    def backward(g):
        return (g - probs * g.sum(axis=axis, keepdims=True),)

    return make_result("log_softmax", out, (x,), backward)


def layer_norm(x, gamma, beta, eps: float = 1e-5) -> Tensor:
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    dim = x.shape[-1]
    if gamma.shape != (dim,) or beta.shape != (dim,):
        raise DimensionError(
            f"layer_norm: gamma {gamma.shape} / beta {beta.shape} не совпадают с последней осью {dim}"
        )
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered ** 2).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std
    out = xhat * gamma.data + beta.data

    def backward(g):
        lead = tuple(range(g.ndim - 1))
        dxhat = g * gamma.data
        dx = inv_std / dim * (
            dim * dxhat
            - dxhat.sum(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True)
        )
        return dx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return make_result("layer_norm", out, (x, gamma, beta), backward)


def l2_norm(x, axis: int = -1, keepdims: bool = False) -> Tensor:
    """Евклидова норма вдоль оси; в нуле градиент принимается равным нулю."""
    x = as_tensor(x)
    norm = np.sqrt((x.data ** 2).sum(axis=axis, keepdims=True))
    out = norm if keepdims else np.squeeze(norm, axis=axis)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        safe = np.where(norm == 0, 1.0, norm)
        return (np.where(norm == 0, 0.0, g * x.data / safe),)

    return make_result("l2_norm", out, (x,), backward)


def normalize(x, axis: int = -1) -> Tensor:
    """x / ||x||; нулевой вектор отображается в нулевой с нулевым градиентом."""
    x = as_tensor(x)
    norm = np.sqrt((x.data ** 2).sum(axis=axis, keepdims=True))
    zero = norm == 0
    safe = np.where(zero, 1.0, norm)
    out = np.where(zero, 0.0, x.data / safe)

    def backward(g):
        proj = (g * out).sum(axis=axis, keepdims=True)
        return (np.where(zero, 0.0, (g - out * proj) / safe),)

    return make_result("normalize", out, (x,), backward)


def cross_entropy(logits, target: int) -> Tensor:
    """Кросс-энтропия softmax по одномерному вектору логитов."""
    logits = as_tensor(logits)
    if logits.ndim != 1:
        raise DimensionError(f"cross_entropy: ожидался вектор логитов, получено {logits.shape}")
    if not 0 <= target < logits.shape[0]:
        raise DimensionError(f"cross_entropy: целевой индекс {target} вне [0, {logits.shape[0]})")
    return neg(gather(log_softmax(logits, axis=0), [target], axis=0).reshape(()))


def maximum_count(mask: np.ndarray, axis: Axis = None, keepdims: bool = False) -> np.ndarray:
    """Число истинных элементов маски, не меньше единицы (делитель для средних)."""
    return np.maximum(np.asarray(mask, dtype=np.float64).sum(axis=axis, keepdims=keepdims), 1.0)


__all__ = [
    "add", "sub", "mul", "div", "neg", "exp", "log", "relu", "gelu", "square",
    "sum", "mean", "reshape", "transpose", "swap_last", "concat", "gather",
    "matmul", "softmax", "log_softmax", "layer_norm", "l2_norm", "normalize",
    "cross_entropy", "maximum_count",
]
