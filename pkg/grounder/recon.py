"""
Ветвь пространственного руководства: декодер карт точек и потери с весами
уверенности. Используется только при обучении.
"""
import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from diffkit import Linear, Module, Tensor, ops
from utils.camera import CameraFrame, patch_mean_world
from utils.errors import ConfigError, DegenerateSceneError, DimensionError
from .se_attention import SEBlock, se_stack

logger = logging.getLogger(__name__)

REG_SIGNS = ("reward", "paper")


@dataclass(frozen=True)
class ReconConfig:
    alpha: float = 0.2
    reg_sign: str = "reward"
    decoder_blocks: int = 1

    def __post_init__(self):
        if self.alpha < 0:
            raise ConfigError("recon.alpha", f"должно быть >= 0, получено {self.alpha}")
        if self.reg_sign not in REG_SIGNS:
            raise ConfigError("recon.reg_sign", f"ожидалось одно из {REG_SIGNS}, получено {self.reg_sign!r}")
        if self.decoder_blocks < 0:
            raise ConfigError("recon.decoder_blocks", "должно быть >= 0")


@dataclass(eq=False)
class PointMapPrediction:
    local_points: Tensor
    global_points: Tensor
    local_conf: Tensor
    global_conf: Tensor


class ReconBranch(Module):
    """Проекционный слой P и декодер D: X_L, X_G = D(P(features))."""

    def __init__(self, dim: int, num_heads: int, config: ReconConfig, rng: np.random.Generator):
        self.projection = Linear(dim, dim, rng)
        self.blocks = [SEBlock(dim, num_heads, rng) for _ in range(config.decoder_blocks)]
        self.local_head = Linear(dim, 4, rng)
        self.global_head = Linear(dim, 4, rng)


def _split_head(out: Tensor) -> Tuple[Tensor, Tensor]:
    points = ops.gather(out, [0, 1, 2], axis=-1)
    conf = ops.reshape(ops.gather(out, [3], axis=-1), out.shape[:-1])
    return points, conf


def recon_decoder(features: Tensor, valid: Optional[np.ndarray], branch: ReconBranch) -> PointMapPrediction:
    x = branch.projection(features)
    x = se_stack(x, valid, branch.blocks)
    local_points, local_conf = _split_head(branch.local_head(x))
    global_points, global_conf = _split_head(branch.global_head(x))
    return PointMapPrediction(local_points, global_points, local_conf, global_conf)


def _norm_axes(points_ndim: int, per_view: bool) -> Tuple[int, ...]:
    # points: (..., V, N, 3); нормировка по N для локальных карт и по (V, N) для глобальных
    return (points_ndim - 2,) if per_view else (points_ndim - 3, points_ndim - 2)


def regr_loss(pred: Tensor, gt: np.ndarray, mask: np.ndarray, per_view: bool = False) -> Tensor:
    """
    l = || X_hat / z_hat - X / z ||_2 для каждой точки, где z - средняя норма
    по валидным точкам своей карты. Невалидные точки дают 0.

    В локальном режиме вид без валидных точек пропускается (дает нули);
    пустая глобальная карта - ошибка.
    """
    gt = np.asarray(gt, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if pred.shape != gt.shape or mask.shape != gt.shape[:-1]:
        raise DimensionError(f"regr_loss: формы {pred.shape}, {gt.shape}, маска {mask.shape}")
    if not mask.any():
        raise DegenerateSceneError("regr_loss: нет валидных точек")
    axes = _norm_axes(gt.ndim, per_view)
    weights = mask.astype(np.float64)
    counts = weights.sum(axis=axes, keepdims=True)
    empty = counts == 0
    if empty.any():
        if not per_view:
            raise DegenerateSceneError("regr_loss: нет валидных точек в глобальной карте")
        logger.debug(f"regr_loss: пропущено видов без валидных точек: {int(empty.sum())}")
    counts = np.where(empty, 1.0, counts)

    z = (np.linalg.norm(gt, axis=-1) * weights).sum(axis=axes, keepdims=True) / counts
    pred_norms = ops.l2_norm(pred, axis=-1)
    z_hat = ops.div(ops.sum(ops.mul(pred_norms, weights), axis=axes, keepdims=True), counts)
    if np.any(z[~empty] == 0) or np.any(z_hat.data[~empty] == 0):
        raise DegenerateSceneError("regr_loss: средняя норма карты равна нулю")
    # у пустых видов z и z_hat равны 0; их точки все равно обнуляются весами
    z = np.where(empty, 1.0, z)
    z_hat = ops.add(z_hat, empty.astype(np.float64))

    gt_normed = gt / z[..., None]
    pred_normed = ops.div(pred, ops.reshape(z_hat, z_hat.shape + (1,)))
    diff = ops.sub(pred_normed, gt_normed)
    return ops.mul(ops.l2_norm(diff, axis=-1), weights)


def confidence_plus(conf: Tensor) -> Tensor:
    return ops.add(ops.exp(conf), 1.0)


def conf_weighted_loss(
    points: Tensor,
    conf: Tensor,
    gt: np.ndarray,
    mask: np.ndarray,
    alpha: float,
    reg_sign: str = "reward",
    per_view: bool = False,
) -> Tensor:
    """
    Среднее по валидным точкам от S+ * l_regr -/+ alpha * log(S+), S+ = 1 + exp(S).

    reg_sign="reward" вычитает регуляризатор (высокая уверенность поощряется
    там, где ошибка мала); "paper" прибавляет его, как напечатано в исходной формуле.
    """
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise DegenerateSceneError("conf_weighted_loss: пустая маска")
    loss = regr_loss(points, gt, mask, per_view)
    s_plus = confidence_plus(conf)
    weighted = ops.mul(s_plus, loss)
    reg = ops.mul(ops.log(s_plus), alpha)
    per_point = ops.sub(weighted, reg) if reg_sign == "reward" else ops.add(weighted, reg)
    per_point = ops.mul(per_point, mask.astype(np.float64))
    return ops.div(ops.sum(per_point), float(mask.sum()))


def recon_loss_total(
    pred: PointMapPrediction,
    local_gt: np.ndarray,
    global_gt: np.ndarray,
    mask: np.ndarray,
    config: ReconConfig,
) -> Tensor:
    """L_recon = L_{X_G} + L_{X_L}."""
    global_loss = conf_weighted_loss(
        pred.global_points, pred.global_conf, global_gt, mask, config.alpha, config.reg_sign, per_view=False
    )
    local_loss = conf_weighted_loss(
        pred.local_points, pred.local_conf, local_gt, mask, config.alpha, config.reg_sign, per_view=True
    )
    return ops.add(global_loss, local_loss)


def gt_pointmaps_from_frames(
    frames: Sequence[CameraFrame], patch_size: int
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Эталонные карты точек уровня патчей: глобальная - средняя мировая точка
    патча, локальная - та же точка в системе координат своей камеры.
    Формы (V, N, 3), (V, N, 3), маска (V, N).
    """
    local_maps: List[np.ndarray] = []
    global_maps: List[np.ndarray] = []
    masks: List[np.ndarray] = []
    for frame in frames:
        means, valid = patch_mean_world(frame, patch_size)
        world = means.reshape(-1, 3)
        local = frame.extrinsics.world_to_camera(world)
        mask = valid.reshape(-1)
        world = np.where(mask[:, None], world, 0.0)
        local = np.where(mask[:, None], local, 0.0)
        global_maps.append(world)
        local_maps.append(local)
        masks.append(mask)
    return np.stack(local_maps), np.stack(global_maps), np.stack(masks)
