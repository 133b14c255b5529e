"""
Геометрия камеры: обратная проекция пикселей RGB-D, лучи, усреднение по патчам.

Соглашение: пиксель (u, v) - столбец и строка, центр пикселя в целых
координатах; камера смотрит вдоль +z, x вправо, y вниз. Extrinsics хранят
преобразование камера -> мир: p_world = R @ p_cam + t.
"""
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .errors import DegenerateRayError, DimensionError, DomainError


@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError(f"Фокусные расстояния должны быть положительны: fx={self.fx}, fy={self.fy}")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError(
                f"Главная точка ({self.cx}, {self.cy}) вне изображения {self.width}x{self.height}"
            )

    @classmethod
    def from_fov(cls, width: int, height: int, fov_deg: float) -> "Intrinsics":
        """Пинхол-камера с горизонтальным углом обзора fov_deg и центром в середине кадра."""
        f = (width / 2.0) / math.tan(math.radians(fov_deg) / 2.0)
        return cls(fx=f, fy=f, cx=(width - 1) / 2.0, cy=(height - 1) / 2.0, width=width, height=height)

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])


@dataclass(frozen=True, eq=False)
class Extrinsics:
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        rotation = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        translation = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not np.allclose(rotation @ rotation.T, np.eye(3), atol=1e-6) or abs(np.linalg.det(rotation) - 1.0) > 1e-6:
            raise ValueError("Матрица поворота должна быть ортонормированной с det = +1")
        object.__setattr__(self, "rotation", rotation)
        object.__setattr__(self, "translation", translation)

    @classmethod
    def identity(cls) -> "Extrinsics":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def look_at(cls, eye, target, up=(0.0, 0.0, 1.0)) -> "Extrinsics":
        """Камера в точке eye, направленная на target; мировая ось up смотрит вверх в кадре."""
        eye = np.asarray(eye, dtype=np.float64)
        forward = np.asarray(target, dtype=np.float64) - eye
        forward /= np.linalg.norm(forward)
        right = np.cross(forward, np.asarray(up, dtype=np.float64))
        norm = np.linalg.norm(right)
        if norm < 1e-9:
            raise ValueError("look_at: направление взгляда параллельно оси up")
        right /= norm
        down = np.cross(forward, right)
        return cls(np.column_stack((right, down, forward)), eye)

    @property
    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.translation
        return T

    def compose(self, rotation: np.ndarray, translation: np.ndarray) -> "Extrinsics":
        """Применяет жесткое преобразование мира (R', t') поверх позы камеры."""
        rotation = np.asarray(rotation, dtype=np.float64)
        return Extrinsics(rotation @ self.rotation, rotation @ self.translation + np.asarray(translation))

    def world_to_camera(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points) - self.translation) @ self.rotation

    def camera_to_world(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points) @ self.rotation.T + self.translation


@dataclass(eq=False)
class CameraFrame:
    color: np.ndarray
    depth: np.ndarray
    intrinsics: Intrinsics
    extrinsics: Extrinsics

    def __post_init__(self):
        self.color = np.asarray(self.color, dtype=np.float64)
        self.depth = np.asarray(self.depth, dtype=np.float64)
        if self.depth.ndim != 2 or self.color.shape != self.depth.shape + (3,):
            raise DimensionError(f"Цвет {self.color.shape} и глубина {self.depth.shape} не согласованы")
        if np.any(self.depth < 0):
            raise DomainError("Глубина не может быть отрицательной")
        if self.depth.shape != (self.intrinsics.height, self.intrinsics.width):
            raise DimensionError(
                f"Кадр {self.depth.shape} не совпадает с размером камеры "
                f"{self.intrinsics.height}x{self.intrinsics.width}"
            )

    @property
    def height(self) -> int:
        return self.depth.shape[0]

    @property
    def width(self) -> int:
        return self.depth.shape[1]


@dataclass(frozen=True, eq=False)
class Ray:
    origin: np.ndarray
    point: np.ndarray
    direction: np.ndarray


def camera_rays(intrinsics: Intrinsics, extrinsics: Extrinsics, u, v) -> np.ndarray:
    """Мировое направление R K^-1 (u, v, 1) без нормировки (z-компонента в кадре камеры = 1)."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    cam = np.stack(
        [(u - intrinsics.cx) / intrinsics.fx, (v - intrinsics.cy) / intrinsics.fy, np.ones_like(u)],
        axis=-1,
    )
    return cam @ extrinsics.rotation.T


def unit_ray_directions(intrinsics: Intrinsics, extrinsics: Extrinsics, u, v) -> np.ndarray:
    d = camera_rays(intrinsics, extrinsics, u, v)
    return d / np.linalg.norm(d, axis=-1, keepdims=True)


def backproject(intrinsics: Intrinsics, extrinsics: Extrinsics, u, v, depth) -> np.ndarray:
    """p_world = T [d K^-1 (u, v, 1); 1] для произвольных (в т.ч. дробных) пикселей."""
    depth = np.asarray(depth, dtype=np.float64)
    return camera_rays(intrinsics, extrinsics, u, v) * depth[..., None] + extrinsics.translation


def backproject_pixel(frame: CameraFrame, u: int, v: int) -> Optional[np.ndarray]:
    """Мировая точка пикселя (u, v); None, если глубина невалидна (0)."""
    if not (0 <= u < frame.width and 0 <= v < frame.height):
        raise DimensionError(f"Пиксель ({u}, {v}) вне кадра {frame.width}x{frame.height}")
    d = frame.depth[v, u]
    if d <= 0:
        return None
    return backproject(frame.intrinsics, frame.extrinsics, u, v, d)


def project_world_to_pixel(frame: CameraFrame, point) -> Optional[Tuple[float, float, float]]:
    """Обратная к backproject_pixel операция; None, если точка позади камеры."""
    p_cam = frame.extrinsics.world_to_camera(np.asarray(point, dtype=np.float64))
    z = p_cam[2]
    if z <= 0:
        return None
    k = frame.intrinsics
    return (k.fx * p_cam[0] / z + k.cx, k.fy * p_cam[1] / z + k.cy, float(z))


def ray_for_pixel(frame: CameraFrame, u: int, v: int, depth: Optional[float] = None) -> Ray:
    if depth is None:
        point = backproject_pixel(frame, u, v)
        if point is None:
            raise DomainError(f"Пиксель ({u}, {v}) без валидной глубины")
    else:
        if depth <= 0:
            raise DomainError(f"Глубина {depth} должна быть положительной")
        point = backproject(frame.intrinsics, frame.extrinsics, u, v, depth)
    origin = frame.extrinsics.translation.copy()
    offset = point - origin
    length = np.linalg.norm(offset)
    if length == 0:
        raise DegenerateRayError(f"Луч нулевой длины в пикселе ({u}, {v})")
    return Ray(origin=origin, point=point, direction=offset / length)


def backproject_depth_map(frame: CameraFrame) -> Tuple[np.ndarray, np.ndarray]:
    """Облако точек H x W x 3 и маска валидной глубины."""
    v, u = np.mgrid[0:frame.height, 0:frame.width]
    points = backproject(frame.intrinsics, frame.extrinsics, u, v, frame.depth)
    valid = frame.depth > 0
    points[~valid] = 0.0
    return points, valid


def patch_grid_shape(height: int, width: int, patch_size: int) -> Tuple[int, int]:
    return -(-height // patch_size), -(-width // patch_size)


def pad_to_patches(array: np.ndarray, patch_size: int, fill=0) -> np.ndarray:
    """Дополняет первые две оси до кратности patch_size значением fill."""
    h, w = array.shape[:2]
    hp, wp = patch_grid_shape(h, w, patch_size)
    pad = [(0, hp * patch_size - h), (0, wp * patch_size - w)] + [(0, 0)] * (array.ndim - 2)
    return np.pad(array, pad, constant_values=fill)


def split_patches(array: np.ndarray, patch_size: int) -> np.ndarray:
    """(H, W, ...) -> (Hp, Wp, P*P, ...), построчный обход пикселей внутри патча."""
    padded = pad_to_patches(array, patch_size)
    hp, wp = padded.shape[0] // patch_size, padded.shape[1] // patch_size
    rest = padded.shape[2:]
    blocks = padded.reshape((hp, patch_size, wp, patch_size) + rest)
    blocks = np.moveaxis(blocks, 2, 1)
    return blocks.reshape((hp, wp, patch_size * patch_size) + rest)


def patch_mean_world(frame: CameraFrame, patch_size: int) -> Tuple[np.ndarray, np.ndarray]:
    """Средняя мировая точка каждого патча по валидным пикселям и маска патчей."""
    points, valid = backproject_depth_map(frame)
    pts = split_patches(points, patch_size)
    mask = split_patches(valid, patch_size)
    counts = mask.sum(axis=2)
    sums = (pts * mask[..., None]).sum(axis=2)
    means = sums / np.maximum(counts, 1)[..., None]
    return means, counts > 0


def patch_centers(height: int, width: int, patch_size: int) -> Tuple[np.ndarray, np.ndarray]:
    """Координаты (u, v) центров патчей, форма (Hp, Wp)."""
    hp, wp = patch_grid_shape(height, width, patch_size)
    offset = (patch_size - 1) / 2.0
    vs = np.arange(hp) * patch_size + offset
    us = np.arange(wp) * patch_size + offset
    return np.meshgrid(us, vs)


@dataclass(eq=False)
class RayGrid:
    origin: np.ndarray
    points: np.ndarray
    directions: np.ndarray
    valid: np.ndarray

    def ray(self, row: int, col: int) -> Optional[Ray]:
        if not self.valid[row, col]:
            return None
        return Ray(self.origin.copy(), self.points[row, col].copy(), self.directions[row, col].copy())


def patch_center_ray(frame: CameraFrame, patch_size: int) -> RayGrid:
    """
    Лучи через центральные пиксели патчей. Глубина точки луча - средняя
    валидная глубина патча (центральный пиксель может быть дырой).
    """
    depth_patches = split_patches(frame.depth, patch_size)
    valid_px = depth_patches > 0
    counts = valid_px.sum(axis=2)
    mean_depth = np.where(valid_px, depth_patches, 0.0).sum(axis=2) / np.maximum(counts, 1)
    valid = counts > 0

    us, vs = patch_centers(frame.height, frame.width, patch_size)
    points = backproject(frame.intrinsics, frame.extrinsics, us, vs, mean_depth)
    origin = frame.extrinsics.translation.copy()
    offsets = points - origin
    lengths = np.linalg.norm(offsets, axis=-1, keepdims=True)
    valid = valid & (lengths[..., 0] > 0)
    directions = np.where(valid[..., None], offsets / np.where(lengths == 0, 1.0, lengths), 0.0)
    points = np.where(valid[..., None], points, 0.0)
    return RayGrid(origin=origin, points=points, directions=directions, valid=valid)
