import logging
import threading
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from utils.errors import DimensionError

logger = logging.getLogger(__name__)

_local = threading.local()

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Tensor:
    """
    Плотный массив float64 с опциональным участием в ленте градиентов.

    Градиенты хранятся не в самом тензоре, а в ленте (Tape), которая его
    записала. Поэтому один и тот же параметр можно одновременно использовать
    в нескольких независимых лентах (по одной на поток).
    """

    __slots__ = ("data", "requires_grad", "node_id", "name")

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.node_id: Optional[int] = None
        self.name = name

    @classmethod
    def wrap(cls, data: np.ndarray, requires_grad: bool = False) -> "Tensor":
        """Оборачивает уже вычисленный массив без копирования."""
        out = cls.__new__(cls)
        out.data = np.asarray(data, dtype=np.float64)
        out.requires_grad = requires_grad
        out.node_id = None
        out.name = None
        return out

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise DimensionError(f"item() требует тензор из одного элемента, получено {self.shape}")
        return float(self.data.reshape(-1)[0])

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # Операторы делегируют в diffkit.ops, импорт отложен из-за цикличности модулей.
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    def __radd__(self, other):
        from . import ops
        return ops.add(other, self)

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    def __rmul__(self, other):
        from . import ops
        return ops.mul(other, self)

    def __truediv__(self, other):
        from . import ops
        return ops.div(self, other)

    def __neg__(self):
        from . import ops
        return ops.neg(self)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def reshape(self, *shape):
        from . import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def transpose(self, *axes):
        from . import ops
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return ops.transpose(self, axes)

    def sum(self, axis=None, keepdims: bool = False):
        from . import ops
        return ops.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        from . import ops
        return ops.mean(self, axis=axis, keepdims=keepdims)


def as_tensor(value) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


@dataclass
class TapeRecord:
    op: str
    inputs: Tuple[Tensor, ...]
    output: Tensor
    backward: BackwardFn


class Tape:
    """
    Динамическая лента операций (define-by-run).

    Операции, выполненные внутри `with Tape() as tape:`, записываются
    в порядке вычисления; обратный проход обходит записи строго в обратном
    порядке и суммирует градиенты тензоров с несколькими потребителями.
    """

    def __init__(self):
        self.records: List[TapeRecord] = []
        self._grads: Dict[int, np.ndarray] = {}
        self._owners: Dict[int, Tensor] = {}

    def __enter__(self) -> "Tape":
        stack = getattr(_local, "stack", None)
        if stack is None:
            stack = _local.stack = []
        stack.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _local.stack.pop()
        return False

    def record(self, op: str, inputs: Tuple[Tensor, ...], output: Tensor, backward: BackwardFn) -> None:
        output.node_id = len(self.records)
        self.records.append(TapeRecord(op, inputs, output, backward))

    def _accumulate(self, tensor: Tensor, grad: np.ndarray) -> None:
        key = id(tensor)
        if grad.shape != tensor.shape:
            raise DimensionError(
                f"Градиент формы {grad.shape} не совпадает с тензором формы {tensor.shape}"
            )
        if key in self._grads:
            self._grads[key] = self._grads[key] + grad
        else:
            self._grads[key] = np.array(grad, dtype=np.float64)
            self._owners[key] = tensor

    def backward(self, loss: Tensor, grad: Optional[np.ndarray] = None) -> None:
        if grad is None:
            if loss.data.size != 1:
                raise DimensionError(f"backward без градиента требует скаляр, получено {loss.shape}")
            grad = np.ones_like(loss.data)
        self._accumulate(loss, np.asarray(grad, dtype=np.float64))

        for rec in reversed(self.records):
            out_grad = self._grads.get(id(rec.output))
            if out_grad is None:
                continue
            in_grads = rec.backward(out_grad)
            for tensor, g in zip(rec.inputs, in_grads):
                if g is None or not tensor.requires_grad:
                    continue
                self._accumulate(tensor, g)

    def grad(self, tensor: Tensor) -> Optional[np.ndarray]:
        return self._grads.get(id(tensor))

    def grads(self, tensors: Sequence[Tensor]) -> List[np.ndarray]:
        """Градиенты для списка тензоров; отсутствующие заменяются нулями."""
        return [
            self._grads[id(t)] if id(t) in self._grads else np.zeros_like(t.data)
            for t in tensors
        ]


def current_tape() -> Optional[Tape]:
    stack = getattr(_local, "stack", None)
    if not stack:
        return None
    return stack[-1]


def make_result(op: str, data: np.ndarray, inputs: Tuple[Tensor, ...], backward: BackwardFn) -> Tensor:
    """Создает выходной тензор операции и записывает его в активную ленту."""
    requires = any(t.requires_grad for t in inputs)
    out = Tensor.wrap(data, requires_grad=requires)
    if requires:
        tape = current_tape()
        if tape is not None:
            tape.record(op, inputs, out, backward)
    return out
