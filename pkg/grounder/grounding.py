"""
Выбор целевого объекта: пулинг признаков объекта по правилу покрытия,
InfoNCE между состоянием токена <ground> и признаками объектов, языковая
потеря по категории и взвешенная сумма потерь.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from diffkit import Tensor, ops
from utils.boxes import Aabb, ObjectProposal, coverage_grid
from utils.errors import ConfigError, DimensionError, NumericError
from .posenc import PatchGrid, PosEncConfig, sinusoidal_encode_3d

logger = logging.getLogger(__name__)

ANSWER_TEMPLATE = "The {category} is located at <ground> in the global coordinates"


@dataclass(frozen=True)
class LossWeights:
    lambda_g: float = 1.0
    lambda_r: float = 0.3
    lambda_l: float = 1.0

    def __post_init__(self):
        for key in ("lambda_g", "lambda_r", "lambda_l"):
            if getattr(self, key) < 0:
                raise ConfigError(f"loss.{key}", "вес потери должен быть >= 0")

    def scaled(self, factor: float) -> "LossWeights":
        return LossWeights(self.lambda_g * factor, self.lambda_r * factor, self.lambda_l * factor)


@dataclass(eq=False)
class GroundingOutput:
    ground_state: Tensor
    object_features: Tensor
    similarities: Tensor
    category_logits: Tensor
    predicted_id: int
    proposal_ids: List[int] = field(default_factory=list)
    fallback_ids: List[int] = field(default_factory=list)

    @property
    def predicted_category(self) -> int:
        return int(np.argmax(self.category_logits.data))


@dataclass(frozen=True, eq=False)
class PoolingWeights:
    """Веса усреднения патчей для каждого предложения: (P, V*N), строки суммируются в 1."""
    weights: np.ndarray
    fallback: np.ndarray


def _coverage_fractions(grid: PatchGrid, box: Aabb, batch_index: int = 0) -> np.ndarray:
    if grid.pixel_points is None or grid.pixel_valid is None or grid.patch_size <= 0:
        raise DimensionError("Сетка не содержит точек пикселей для расчета покрытия")
    fractions = []
    for v in range(grid.views):
        frac, _ = coverage_grid(grid.pixel_points[batch_index, v], grid.pixel_valid[batch_index, v], grid.patch_size, box)
        fractions.append(frac.reshape(-1))
    return np.stack(fractions) * grid.valid[batch_index]


def pooling_weights(grid: PatchGrid, boxes: Sequence[Aabb], batch_index: int = 0) -> PoolingWeights:
    """
    Для каждого бокса - равные веса патчей с покрытием строго больше 0.5.
    Если таких нет, берется патч с наибольшим покрытием, а при нулевом
    покрытии везде - валидный патч, чья средняя мировая точка ближе к центру бокса.
    """
    n_slots = grid.views * grid.num_patches
    weights = np.zeros((len(boxes), n_slots))
    fallback = np.zeros(len(boxes), dtype=bool)
    valid = grid.valid[batch_index].reshape(-1)
    coords = grid.world_coords[batch_index].reshape(-1, 3)
    for i, box in enumerate(boxes):
        frac = _coverage_fractions(grid, box, batch_index).reshape(-1)
        eligible = (frac > 0.5) & valid
        if eligible.any():
            weights[i, eligible] = 1.0 / eligible.sum()
            continue
        fallback[i] = True
        if frac.max() > 0:
            best = int(np.argmax(frac))
        else:
            dist = np.linalg.norm(coords - box.center, axis=-1)
            dist = np.where(valid, dist, np.inf)
            best = int(np.argmin(dist))
        weights[i, best] = 1.0
    return PoolingWeights(weights=weights, fallback=fallback)


def pool_object_features(
    grid: PatchGrid,
    boxes: Sequence[Aabb],
    config: PosEncConfig,
    weights: Optional[PoolingWeights] = None,
    batch_index: int = 0,
    add_center_code: bool = True,
) -> Tuple[Tensor, np.ndarray]:
    """
    Признаки всех предложений (P, dim) и флаги запасного пути пулинга.
    add_center_code=False отключает код центра бокса (абляция без позиционного кодирования).
    """
    if weights is None:
        weights = pooling_weights(grid, boxes, batch_index)
        for i in np.flatnonzero(weights.fallback):
            logger.warning(f"Предложение #{i}: нет патчей с покрытием > 50%, использован запасной патч")
    flat = ops.reshape(
        ops.gather(grid.features, [batch_index], axis=0), (grid.views * grid.num_patches, grid.dim)
    )
    pooled = ops.matmul(Tensor(weights.weights), flat)
    feats = pooled
    if add_center_code:
        centers = np.stack([box.center for box in boxes])
        feats = ops.add(pooled, sinusoidal_encode_3d(centers, config))
    return feats, weights.fallback


def pool_object_feature(grid: PatchGrid, box: Aabb, config: PosEncConfig) -> Tuple[Tensor, bool]:
    """Признак одного объекта (dim,) и флаг запасного пути."""
    feats, fallback = pool_object_features(grid, [box], config)
    return ops.reshape(feats, (grid.dim,)), bool(fallback[0])


def cosine_similarities(h: Tensor, object_features: Tensor) -> Tensor:
    """Косинусные сходства (P,); пары с нулевой нормой дают 0."""
    if np.linalg.norm(h.data) == 0 or np.any(np.linalg.norm(object_features.data, axis=-1) == 0):
        logger.warning("Вектор нулевой нормы в косинусном сходстве, сходство принято равным 0")
    hn = ops.reshape(ops.normalize(h, axis=-1), (h.shape[-1], 1))
    fn = ops.normalize(object_features, axis=-1)
    return ops.reshape(ops.matmul(fn, hn), (object_features.shape[0],))


def infonce_from_similarities(similarities: Tensor, target: int, tau: float = 0.07) -> Tensor:
    """Кросс-энтропия softmax(sim / tau) против целевого индекса."""
    if similarities.ndim != 1 or similarities.shape[0] < 1:
        raise DimensionError(f"infonce: нужен непустой вектор сходств, получено {similarities.shape}")
    if tau <= 0:
        raise ConfigError("loss.tau", "температура должна быть положительной")
    return ops.cross_entropy(ops.mul(similarities, 1.0 / tau), target)


def infonce_ground(h: Tensor, object_features: Tensor, target: int, tau: float = 0.07) -> Tensor:
    """InfoNCE: позитив - целевое предложение, негативы - остальные предложения сцены."""
    if not 0 <= target < object_features.shape[0]:
        raise DimensionError(f"infonce: цель {target} вне [0, {object_features.shape[0]})")
    return infonce_from_similarities(cosine_similarities(h, object_features), target, tau)


def language_loss(category_logits: Tensor, gt_category: int) -> Tensor:
    return ops.cross_entropy(category_logits, gt_category)


def render_answer(category_name: str) -> str:
    return ANSWER_TEMPLATE.format(category=category_name)


def total_loss(
    l_ground: Tensor,
    l_recon: Optional[Tensor],
    l_lang: Optional[Tensor],
    weights: LossWeights,
    step: Optional[int] = None,
) -> Tensor:
    """
    L = lambda_g L_ground + lambda_r L_recon + lambda_l L_lang.
    Отсутствующая компонента (None) не входит в сумму.
    """
    components = [("L_ground", l_ground, weights.lambda_g)]
    if l_recon is not None:
        components.append(("L_recon", l_recon, weights.lambda_r))
    if l_lang is not None:
        components.append(("L_lang", l_lang, weights.lambda_l))
    total = None
    for name, value, weight in components:
        if not math.isfinite(value.item()):
            raise NumericError(f"Нечисловое значение потери {name}", step=step, component=name)
        term = ops.mul(value, weight)
        total = term if total is None else ops.add(total, term)
    return total


def predict_target(similarities, proposal_ids: Optional[Sequence[int]] = None) -> int:
    """argmax сходства; при равенстве - наименьший id предложения."""
    sims = np.asarray(similarities.data if isinstance(similarities, Tensor) else similarities, dtype=np.float64)
    if sims.size == 0:
        raise DimensionError("predict_target: нет предложений")
    ids = np.arange(sims.size) if proposal_ids is None else np.asarray(proposal_ids)
    best = sims.max()
    return int(ids[sims == best].min())
