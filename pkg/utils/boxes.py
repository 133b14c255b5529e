from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .camera import split_patches


@dataclass(frozen=True, eq=False)
class Aabb:
    """Осевой параллелепипед [min_corner, max_corner] в метрах (границы замкнуты)."""
    min_corner: np.ndarray
    max_corner: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.min_corner, dtype=np.float64).reshape(3)
        hi = np.asarray(self.max_corner, dtype=np.float64).reshape(3)
        if np.any(lo > hi):
            raise ValueError(f"Некорректный бокс: min {lo} > max {hi}")
        object.__setattr__(self, "min_corner", lo)
        object.__setattr__(self, "max_corner", hi)

    @classmethod
    def from_center_size(cls, center, size) -> "Aabb":
        center = np.asarray(center, dtype=np.float64)
        half = np.asarray(size, dtype=np.float64) / 2.0
        return cls(center - half, center + half)

    @property
    def center(self) -> np.ndarray:
        return (self.min_corner + self.max_corner) / 2.0

    @property
    def size(self) -> np.ndarray:
        return self.max_corner - self.min_corner

    @property
    def volume(self) -> float:
        return float(np.prod(self.size))

    def contains(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points)
        return np.all((points >= self.min_corner) & (points <= self.max_corner), axis=-1)

    def same_as(self, other: "Aabb") -> bool:
        return bool(np.array_equal(self.min_corner, other.min_corner) and np.array_equal(self.max_corner, other.max_corner))


def intersection_volume(a: Aabb, b: Aabb) -> float:
    overlap = np.minimum(a.max_corner, b.max_corner) - np.maximum(a.min_corner, b.min_corner)
    return float(np.prod(np.clip(overlap, 0.0, None)))


def aabb_iou(a: Aabb, b: Aabb) -> float:
    """Отношение объема пересечения к объему объединения; 0 для вырожденного объединения."""
    inter = intersection_volume(a, b)
    union = a.volume + b.volume - inter
    if union <= 0:
        return 0.0
    return inter / union


@dataclass(frozen=True)
class Coverage:
    fraction: float
    valid_points: int

    @property
    def eligible(self) -> bool:
        # строго больше половины
        return self.valid_points > 0 and self.fraction > 0.5

    @property
    def empty(self) -> bool:
        return self.valid_points == 0


def patch_box_coverage(points: np.ndarray, box: Aabb, valid: np.ndarray | None = None) -> Coverage:
    """Доля валидных точек патча внутри бокса."""
    points = np.asarray(points).reshape(-1, 3)
    valid = np.ones(len(points), dtype=bool) if valid is None else np.asarray(valid).reshape(-1)
    count = int(valid.sum())
    if count == 0:
        return Coverage(fraction=0.0, valid_points=0)
    inside = int((box.contains(points) & valid).sum())
    return Coverage(fraction=inside / count, valid_points=count)


def coverage_grid(points: np.ndarray, valid: np.ndarray, patch_size: int, box: Aabb) -> Tuple[np.ndarray, np.ndarray]:
    """
    Векторизованный patch_box_coverage по всей карте точек одного вида.

    points: H x W x 3, valid: H x W. Возвращает доли (Hp, Wp) и число
    валидных точек в каждом патче.
    """
    inside = box.contains(points) & valid
    inside_p = split_patches(inside, patch_size).sum(axis=2)
    counts = split_patches(valid, patch_size).sum(axis=2)
    fractions = inside_p / np.maximum(counts, 1)
    return fractions, counts


@dataclass(frozen=True, eq=False)
class ObjectProposal:
    """Кандидат на роль целевого объекта: id объекта сцены, бокс и (при обучении) категория."""
    id: int
    box: Aabb
    gt_category: Optional[int] = None
