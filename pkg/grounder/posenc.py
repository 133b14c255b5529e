"""
Многоуровневое позиционное кодирование патчей:

    f_vis = AvgPool(f + phi(p_world)) + psi(r)

phi - синусоидальный код средней мировой точки патча (без параметров),
psi - обучаемый MLP от направления луча через центр укрупненного патча.
"""
import logging
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from diffkit import Linear, Module, Tensor, ops
from utils.camera import Extrinsics, Intrinsics, patch_centers, unit_ray_directions
from utils.errors import ConfigError, DimensionError

logger = logging.getLogger(__name__)

Camera = Tuple[Intrinsics, Extrinsics]


@dataclass(frozen=True)
class PosEncConfig:
    dim: int = 64
    num_freqs: int = 4
    coord_scale: float = 10.0
    pool_kernel: int = 2
    ray_mlp_hidden: int = 32

    def __post_init__(self):
        if self.dim <= 0:
            raise ConfigError("posenc.dim", f"должно быть положительным, получено {self.dim}")
        if self.num_freqs < 0 or 6 * self.num_freqs > self.dim:
            raise ConfigError("posenc.num_freqs", f"6 * {self.num_freqs} не помещается в dim={self.dim}")
        if self.coord_scale <= 0:
            raise ConfigError("posenc.coord_scale", "должно быть положительным")
        if self.pool_kernel < 1:
            raise ConfigError("posenc.pool_kernel", "должно быть >= 1")
        if self.ray_mlp_hidden < 1:
            raise ConfigError("posenc.ray_mlp_hidden", "должно быть >= 1")


@dataclass(eq=False)
class PatchGrid:
    """
    Сетка признаков патчей для B эпизодов по V видов, N = grid_h * grid_w.

    Невалидные патчи (без глубины) несут нулевые признаки. cameras и
    pixel_points заполняются, когда сетка построена из реальных кадров:
    они нужны для лучей укрупненных патчей и для покрытия боксов.
    """
    features: Tensor
    world_coords: np.ndarray
    ray_dirs: np.ndarray
    valid: np.ndarray
    grid_h: int
    grid_w: int
    patch_size: int = 0
    cameras: Optional[List[List[Camera]]] = None
    pixel_points: Optional[np.ndarray] = None
    pixel_valid: Optional[np.ndarray] = None

    def __post_init__(self):
        b, v, n, _ = self.features.shape
        if n != self.grid_h * self.grid_w:
            raise DimensionError(f"N={n} не равно {self.grid_h}x{self.grid_w}")
        if self.world_coords.shape != (b, v, n, 3) or self.ray_dirs.shape != (b, v, n, 3):
            raise DimensionError("world_coords/ray_dirs не согласованы с признаками")
        if self.valid.shape != (b, v, n):
            raise DimensionError(f"Маска {self.valid.shape} не совпадает с ({b}, {v}, {n})")

    @property
    def batch(self) -> int:
        return self.features.shape[0]

    @property
    def views(self) -> int:
        return self.features.shape[1]

    @property
    def num_patches(self) -> int:
        return self.features.shape[2]

    @property
    def dim(self) -> int:
        return self.features.shape[3]


def frequency_ladder(config: PosEncConfig) -> np.ndarray:
    return (2.0 ** np.arange(config.num_freqs)) / config.coord_scale


def sinusoidal_encode_3d(coords: np.ndarray, config: PosEncConfig) -> np.ndarray:
    """
    phi: для каждой оси чередующиеся sin/cos от coords[a] * w_k,
    w_k = 2^k / coord_scale; оси конкатенируются, хвост до dim заполняется нулями.
    """
    coords = np.asarray(coords, dtype=np.float64)
    args = coords[..., :, None] * frequency_ladder(config)
    code = np.stack([np.sin(args), np.cos(args)], axis=-1)
    code = code.reshape(coords.shape[:-1] + (6 * config.num_freqs,))
    pad = config.dim - code.shape[-1]
    return np.concatenate([code, np.zeros(coords.shape[:-1] + (pad,))], axis=-1)


class RayMlp(Module):
    """psi: 3 -> hidden -> dim с GELU между слоями."""

    def __init__(self, config: PosEncConfig, rng: np.random.Generator):
        self.fc1 = Linear(3, config.ray_mlp_hidden, rng)
        self.fc2 = Linear(config.ray_mlp_hidden, config.dim, rng)

    def __call__(self, ray_dirs, valid: Optional[np.ndarray] = None) -> Tensor:
        return ray_mlp_encode(ray_dirs, self, valid)


def ray_mlp_encode(ray_dirs, mlp: RayMlp, valid: Optional[np.ndarray] = None) -> Tensor:
    for name, p in mlp.named_parameters():
        if not np.all(np.isfinite(p.data)):
            raise ValueError(f"Нечисловые веса psi в параметре {name}")
    out = mlp.fc2(ops.gelu(mlp.fc1(ray_dirs)))
    if valid is not None:
        out = ops.mul(out, np.asarray(valid, dtype=np.float64)[..., None])
    return out


def _pool_counts(valid: np.ndarray, grid_h: int, grid_w: int, kernel: int):
    b, v = valid.shape[:2]
    gh, gw = -(-grid_h // kernel), -(-grid_w // kernel)
    mask = np.zeros((b, v, gh * kernel, gw * kernel), dtype=bool)
    mask[:, :, :grid_h, :grid_w] = valid.reshape(b, v, grid_h, grid_w)
    counts = mask.reshape(b, v, gh, kernel, gw, kernel).sum(axis=(3, 5))
    return mask, counts, gh, gw


def pool_array(values: np.ndarray, valid: np.ndarray, grid_h: int, grid_w: int, kernel: int) -> np.ndarray:
    """Среднее по валидным элементам окна kernel x kernel для numpy-массива (B, V, N, C)."""
    b, v, _, c = values.shape
    mask, counts, gh, gw = _pool_counts(valid, grid_h, grid_w, kernel)
    padded = np.zeros((b, v, gh * kernel, gw * kernel, c))
    padded[:, :, :grid_h, :grid_w] = values.reshape(b, v, grid_h, grid_w, c)
    padded *= mask[..., None]
    sums = padded.reshape(b, v, gh, kernel, gw, kernel, c).sum(axis=(3, 5))
    return (sums / np.maximum(counts, 1)[..., None]).reshape(b, v, gh * gw, c)


def avg_pool_patches(
    x: Tensor, grid_h: int, grid_w: int, kernel: int, valid: Optional[np.ndarray] = None
) -> Tuple[Tensor, np.ndarray, Tuple[int, int]]:
    """
    Неперекрывающееся усреднение окна kernel x kernel по сетке патчей.

    Усредняются только валидные элементы; укрупненный патч валиден, если
    валиден хотя бы один его элемент. Возвращает признаки (B, V, N', dim),
    маску (B, V, N') и размеры новой сетки.
    """
    b, v, n, d = x.shape
    if n != grid_h * grid_w:
        raise DimensionError(f"avg_pool_patches: N={n} не равно {grid_h}x{grid_w}")
    if valid is None:
        valid = np.ones((b, v, n), dtype=bool)
    if kernel == 1:
        weights = valid.astype(np.float64)[..., None]
        return ops.mul(x, weights), valid.copy(), (grid_h, grid_w)

    mask, counts, gh, gw = _pool_counts(valid, grid_h, grid_w, kernel)
    grid = ops.reshape(ops.mul(x, valid.astype(np.float64)[..., None]), (b, v, grid_h, grid_w, d))
    pad_h, pad_w = gh * kernel - grid_h, gw * kernel - grid_w
    if pad_h:
        grid = ops.concat([grid, Tensor(np.zeros((b, v, pad_h, grid_w, d)))], axis=2)
    if pad_w:
        grid = ops.concat([grid, Tensor(np.zeros((b, v, gh * kernel, pad_w, d)))], axis=3)
    blocks = ops.reshape(grid, (b, v, gh, kernel, gw, kernel, d))
    sums = ops.sum(blocks, axis=(3, 5))
    pooled = ops.mul(sums, 1.0 / np.maximum(counts, 1)[..., None])
    return ops.reshape(pooled, (b, v, gh * gw, d)), (counts > 0).reshape(b, v, gh * gw), (gh, gw)


def pooled_center_rays(grid: PatchGrid, kernel: int, pooled_valid: np.ndarray) -> np.ndarray:
    """
    Направления лучей через центральный пиксель каждого укрупненного патча.
    Без камер - нормированное среднее направлений входящих патчей.
    """
    b, v = grid.batch, grid.views
    gh, gw = -(-grid.grid_h // kernel), -(-grid.grid_w // kernel)
    if grid.cameras is not None and grid.patch_size > 0:
        rays = np.zeros((b, v, gh * gw, 3))
        size = grid.patch_size * kernel
        for bi in range(b):
            for vi, (intr, extr) in enumerate(grid.cameras[bi]):
                us, vs = patch_centers(gh * size, gw * size, size)
                rays[bi, vi] = unit_ray_directions(intr, extr, us, vs).reshape(-1, 3)
    else:
        mean = pool_array(grid.ray_dirs, grid.valid, grid.grid_h, grid.grid_w, kernel)
        norm = np.linalg.norm(mean, axis=-1, keepdims=True)
        rays = mean / np.where(norm == 0, 1.0, norm)
    return np.where(pooled_valid[..., None], rays, 0.0)


def fuse_multilevel(
    grid: PatchGrid,
    config: PosEncConfig,
    ray_mlp: Optional[RayMlp],
    enabled: bool = True,
) -> PatchGrid:
    """
    f_vis = AvgPool(f + phi(p_world)) + psi(r_center). Порядок фиксирован:
    phi добавляется до пулинга, psi - после, на укрупненной сетке.
    При enabled=False остается только пулинг (абляция без позиционного кодирования).
    """
    kernel = config.pool_kernel
    x = grid.features
    valid_f = grid.valid.astype(np.float64)[..., None]
    if enabled:
        phi = sinusoidal_encode_3d(grid.world_coords, config) * valid_f
        x = ops.add(x, phi)

    pooled, pooled_valid, (gh, gw) = avg_pool_patches(x, grid.grid_h, grid.grid_w, kernel, grid.valid)
    rays = pooled_center_rays(grid, kernel, pooled_valid)
    if enabled and ray_mlp is not None:
        pooled = ops.add(pooled, ray_mlp_encode(rays, ray_mlp, pooled_valid))

    coords = pool_array(grid.world_coords, grid.valid, grid.grid_h, grid.grid_w, kernel)
    return replace(
        grid,
        features=pooled,
        world_coords=coords,
        ray_dirs=rays,
        valid=pooled_valid,
        grid_h=gh,
        grid_w=gw,
        patch_size=grid.patch_size * kernel,
    )


def permute_views(grid: PatchGrid, order: Sequence[int]) -> PatchGrid:
    """Перестановка оси видов во всех полях сетки (для проверок эквивариантности)."""
    order = list(order)
    return replace(
        grid,
        features=ops.gather(grid.features, order, axis=1),
        world_coords=grid.world_coords[:, order],
        ray_dirs=grid.ray_dirs[:, order],
        valid=grid.valid[:, order],
        cameras=None if grid.cameras is None else [[cams[i] for i in order] for cams in grid.cameras],
        pixel_points=None if grid.pixel_points is None else grid.pixel_points[:, order],
        pixel_valid=None if grid.pixel_valid is None else grid.pixel_valid[:, order],
    )
