"""
Разделенное внимание структурного модуля: внутри вида (по патчам) и между
видами (по одному индексу патча). Pre-LayerNorm, многоголовое
scaled-dot-product внимание, остаточная связь.
"""
import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from diffkit import LayerNorm, Linear, Module, Tensor, ops
from utils.errors import ConfigError

logger = logging.getLogger(__name__)


@dataclass
class AttentionStats:
    """Счетчик работы над матрицами оценок: сумма S*S по всем вызовам на один пакет и голову."""
    score_entries: int = 0

    def add(self, groups: int, slots: int) -> None:
        if slots > 1:
            self.score_entries += groups * slots * slots


class AttentionParams(Module):
    def __init__(self, dim: int, num_heads: int, rng: np.random.Generator):
        if dim % num_heads:
            raise ConfigError("se.heads", f"dim={dim} не делится на число голов {num_heads}")
        self.norm = LayerNorm(dim)
        self.query = Linear(dim, dim, rng, bias=False)
        self.key = Linear(dim, dim, rng, bias=False)
        self.value = Linear(dim, dim, rng, bias=False)
        self.out = Linear(dim, dim, rng, bias=False)
        self.num_heads = num_heads

    @property
    def head_dim(self) -> int:
        return self.query.weight.shape[1] // self.num_heads


class FeedForward(Module):
    def __init__(self, dim: int, hidden: int, rng: np.random.Generator):
        self.norm = LayerNorm(dim)
        self.fc1 = Linear(dim, hidden, rng)
        self.fc2 = Linear(hidden, dim, rng)

    def __call__(self, x: Tensor) -> Tensor:
        return ops.add(x, self.fc2(ops.gelu(self.fc1(self.norm(x)))))


class SEBlock(Module):
    def __init__(self, dim: int, num_heads: int, rng: np.random.Generator, ffn_ratio: int = 2):
        self.intra = AttentionParams(dim, num_heads, rng)
        self.inter = AttentionParams(dim, num_heads, rng)
        self.ffn = FeedForward(dim, dim * ffn_ratio, rng)


def attend(
    x: Tensor,
    valid: Optional[np.ndarray],
    params: AttentionParams,
    stats: Optional[AttentionStats] = None,
    return_weights: bool = False,
):
    """
    Самовнимание по предпоследней оси x (..., S, dim) с остаточной связью.

    Невалидные слоты исключаются из softmax как ключи; если все слоты
    группы невалидны, выход группы равен входу.
    """
    *lead, slots, dim = x.shape
    heads = params.num_heads
    hd = dim // heads
    lead = tuple(lead)

    y = params.norm(x)

    def split(t: Tensor) -> Tensor:
        t = ops.reshape(t, lead + (slots, heads, hd))
        n = len(lead)
        return ops.transpose(t, tuple(range(n)) + (n + 1, n, n + 2))

    q = split(params.query(y))
    k = split(params.key(y))
    v = split(params.value(y))

    scores = ops.mul(ops.matmul(q, ops.swap_last(k)), 1.0 / np.sqrt(hd))
    mask = None
    if valid is not None:
        mask = np.asarray(valid, dtype=bool)[..., None, None, :]
    weights = ops.softmax(scores, axis=-1, mask=mask)
    if stats is not None:
        stats.add(int(np.prod(lead[1:])) if len(lead) > 1 else 1, slots)

    mixed = ops.matmul(weights, v)
    n = len(lead)
    mixed = ops.transpose(mixed, tuple(range(n)) + (n + 1, n, n + 2))
    mixed = ops.reshape(mixed, lead + (slots, dim))
    out = ops.add(x, params.out(mixed))
    if return_weights:
        return out, weights
    return out


def intra_view_attention(
    f: Tensor, valid: Optional[np.ndarray], params: AttentionParams, stats: Optional[AttentionStats] = None
) -> Tensor:
    """Внимание по N патчам внутри каждого вида: f (B, V, N, dim)."""
    return attend(f, valid, params, stats)


def inter_view_attention(
    f: Tensor, valid: Optional[np.ndarray], params: AttentionParams, stats: Optional[AttentionStats] = None
) -> Tensor:
    """Внимание по V видам для каждого индекса патча: f (B, V, N, dim)."""
    swapped = ops.transpose(f, (0, 2, 1, 3))
    swapped_valid = None if valid is None else np.swapaxes(valid, 1, 2)
    out = attend(swapped, swapped_valid, params, stats)
    return ops.transpose(out, (0, 2, 1, 3))


def joint_attention(
    f: Tensor, valid: Optional[np.ndarray], params: AttentionParams, stats: Optional[AttentionStats] = None
) -> Tensor:
    """Совместное внимание по всем V*N токенам (эталон для сравнения стоимости)."""
    b, v, n, d = f.shape
    flat = ops.reshape(f, (b, v * n, d))
    flat_valid = None if valid is None else valid.reshape(b, v * n)
    out = attend(flat, flat_valid, params, stats)
    return ops.reshape(out, (b, v, n, d))


def se_block(
    f: Tensor, valid: Optional[np.ndarray], block: SEBlock, stats: Optional[AttentionStats] = None
) -> Tensor:
    """Внутривидовое внимание, затем межвидовое, затем остаточный FFN."""
    x = intra_view_attention(f, valid, block.intra, stats)
    x = inter_view_attention(x, valid, block.inter, stats)
    x = block.ffn(x)
    if valid is not None:
        x = ops.mul(x, np.asarray(valid, dtype=np.float64)[..., None])
    return x


def se_stack(
    f: Tensor, valid: Optional[np.ndarray], blocks: Sequence[SEBlock], stats: Optional[AttentionStats] = None
) -> Tensor:
    for block in blocks:
        f = se_block(f, valid, block, stats)
    return f


def flops_estimate(views: int, patches: int, dim: int, mode: str = "divided") -> int:
    """
    Число умножений-сложений этапов оценки (QK^T) и смешивания (AV).

    joint:   2 * dim * (V*N)^2
    divided: 2 * dim * (V*N^2 + N*V^2); этап по оси длины 1 не требует оценок.
    """
    if views < 1 or patches < 1 or dim < 1:
        raise ValueError(f"Размеры должны быть положительны: V={views}, N={patches}, dim={dim}")
    if mode == "joint":
        groups = (views * patches) ** 2
    elif mode == "divided":
        intra = views * patches ** 2 if patches > 1 else 0
        inter = patches * views ** 2 if views > 1 else 0
        groups = intra + inter
        if groups == 0:
            groups = 1
    else:
        raise ValueError(f"Неизвестный режим внимания: {mode}")
    return 2 * dim * groups
