from typing import Iterator, List, Optional, Tuple

import numpy as np

from . import ops
from .tensor import Tensor


class Module:
    """
    Контейнер обучаемых параметров. Параметры и вложенные модули находятся
    обходом атрибутов в порядке их объявления, поэтому имена параметров
    стабильны между запусками (это важно для чекпойнтов).
    """

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Tensor]]:
        for name, value in vars(self).items():
            full = f"{prefix}{name}"
            if isinstance(value, Tensor):
                if value.requires_grad:
                    yield full, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{full}.")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{full}.{i}.")

    def parameters(self) -> List[Tensor]:
        return [p for _, p in self.named_parameters()]

    def parameter_count(self) -> int:
        return int(sum(p.data.size for p in self.parameters()))

    def zero_(self) -> "Module":
        """Обнуляет все параметры (используется в тестах тождественности)."""
        for p in self.parameters():
            p.data[...] = 0.0
        return self


def parameter(data: np.ndarray) -> Tensor:
    return Tensor(data, requires_grad=True)


class Linear(Module):
    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator, bias: bool = True):
        scale = 1.0 / np.sqrt(in_features)
        self.weight = parameter(rng.normal(0.0, scale, size=(in_features, out_features)))
        self.bias: Optional[Tensor] = parameter(np.zeros(out_features)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        out = ops.matmul(x, self.weight)
        if self.bias is not None:
            out = ops.add(out, self.bias)
        return out


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5):
        self.gamma = parameter(np.ones(dim))
        self.beta = parameter(np.zeros(dim))
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return ops.layer_norm(x, self.gamma, self.beta, self.eps)


class Embedding(Module):
    def __init__(self, count: int, dim: int, rng: np.random.Generator, scale: float = 0.1):
        self.weight = parameter(rng.normal(0.0, scale, size=(count, dim)))

    def __call__(self, ids) -> Tensor:
        return ops.gather(self.weight, ids, axis=0)
