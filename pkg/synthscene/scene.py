import logging
from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np

from utils.boxes import Aabb, intersection_volume
from utils.errors import SceneGenerationError

logger = logging.getLogger(__name__)

CATEGORIES: Tuple[str, ...] = (
    "chair", "table", "sofa", "bed", "cabinet", "lamp",
    "desk", "shelf", "stool", "nightstand", "tv", "plant",
)
CATEGORY_INDEX: Dict[str, int] = {name: i for i, name in enumerate(CATEGORIES)}

# Базовые размеры (x, y, z) в метрах
CATEGORY_SIZES: Dict[str, Tuple[float, float, float]] = {
    "chair": (0.5, 0.5, 0.9),
    "table": (1.2, 0.8, 0.75),
    "sofa": (1.8, 0.9, 0.8),
    "bed": (1.6, 2.0, 0.6),
    "cabinet": (0.8, 0.5, 1.4),
    "lamp": (0.35, 0.35, 1.5),
    "desk": (1.3, 0.7, 0.75),
    "shelf": (1.0, 0.35, 1.8),
    "stool": (0.4, 0.4, 0.5),
    "nightstand": (0.5, 0.45, 0.55),
    "tv": (1.1, 0.25, 0.7),
    "plant": (0.45, 0.45, 1.1),
}

# Альбедо категорий кратно 1/255: байтовое хранение кадров без потерь
CATEGORY_ALBEDO: Dict[str, Tuple[int, int, int]] = {
    "chair": (200, 60, 50),
    "table": (140, 90, 40),
    "sofa": (60, 90, 190),
    "bed": (230, 220, 180),
    "cabinet": (110, 60, 130),
    "lamp": (250, 210, 40),
    "desk": (90, 150, 70),
    "shelf": (40, 160, 160),
    "stool": (220, 120, 170),
    "nightstand": (160, 160, 60),
    "tv": (30, 30, 40),
    "plant": (30, 200, 80),
}
ROOM_ALBEDO = (128, 128, 128)

PLACEMENT_ATTEMPTS = 10_000
WALL_MARGIN = 0.15
OBJECT_GAP = 0.1


@dataclass(frozen=True, eq=False)
class SceneObject:
    id: int
    category: str
    box: Aabb
    albedo: Tuple[int, int, int]

    @property
    def category_index(self) -> int:
        return CATEGORY_INDEX[self.category]


@dataclass(eq=False)
class SceneSpec:
    room: Tuple[float, float, float]
    objects: List[SceneObject] = field(default_factory=list)
    seed: int = 0

    @property
    def room_box(self) -> Aabb:
        return Aabb(np.zeros(3), np.asarray(self.room, dtype=np.float64))

    @property
    def center(self) -> np.ndarray:
        return np.asarray(self.room, dtype=np.float64) / 2.0

    def object(self, object_id: int) -> SceneObject:
        for obj in self.objects:
            if obj.id == object_id:
                return obj
        raise KeyError(f"Объект {object_id} отсутствует в сцене")

    def category_count(self, category: str) -> int:
        return sum(1 for obj in self.objects if obj.category == category)


def _choose_categories(rng: np.random.Generator, num_objects: int) -> List[str]:
    """Примерно в половине сцен одна категория повторяется 2-3 раза."""
    names = list(CATEGORIES)
    with_duplicates = rng.random() < 0.5 and num_objects >= 3
    if not with_duplicates:
        if num_objects > len(names):
            chosen = list(rng.choice(names, size=num_objects, replace=True))
        else:
            chosen = list(rng.choice(names, size=num_objects, replace=False))
        return [str(c) for c in chosen]
    repeated = str(rng.choice(names))
    repeats = int(rng.integers(2, 4))
    repeats = min(repeats, num_objects)
    others = [n for n in names if n != repeated]
    rest = list(rng.choice(others, size=num_objects - repeats, replace=num_objects - repeats > len(others)))
    chosen = [repeated] * repeats + [str(c) for c in rest]
    return [chosen[i] for i in rng.permutation(len(chosen))]


def generate_scene(seed: int, num_objects: int = 8, room=(6.0, 6.0, 3.0)) -> SceneSpec:
    """
    Комната [0, X] x [0, Y] x [0, Z] с непересекающимися боксами на полу.
    Между боксами остается зазор OBJECT_GAP, от стен - WALL_MARGIN.
    """
    if num_objects < 2:
        raise SceneGenerationError(f"Сцена должна содержать не менее 2 объектов, запрошено {num_objects}")
    rng = np.random.default_rng(seed)
    room = tuple(float(r) for r in room)
    categories = _choose_categories(rng, num_objects)

    placed: List[SceneObject] = []
    attempts = 0
    for obj_id, category in enumerate(categories):
        base = np.asarray(CATEGORY_SIZES[category])
        while True:
            attempts += 1
            if attempts > PLACEMENT_ATTEMPTS:
                raise SceneGenerationError(
                    f"Не удалось разместить {num_objects} объектов за {PLACEMENT_ATTEMPTS} попыток (seed={seed})"
                )
            size = base * rng.uniform(0.85, 1.15, size=3)
            if rng.random() < 0.5:
                size[[0, 1]] = size[[1, 0]]
            lo_xy = WALL_MARGIN + size[:2] / 2
            hi_xy = np.asarray(room[:2]) - WALL_MARGIN - size[:2] / 2
            if np.any(hi_xy <= lo_xy) or size[2] >= room[2]:
                continue
            center_xy = rng.uniform(lo_xy, hi_xy)
            box = Aabb.from_center_size([center_xy[0], center_xy[1], size[2] / 2], size)
            grown = Aabb(box.min_corner - OBJECT_GAP, box.max_corner + OBJECT_GAP)
            if any(intersection_volume(grown, other.box) > 0 for other in placed):
                continue
            albedo = CATEGORY_ALBEDO[category]
            placed.append(SceneObject(id=obj_id, category=category, box=box, albedo=albedo))
            break

    logger.debug(f"Сцена seed={seed}: {num_objects} объектов за {attempts} попыток")
    return SceneSpec(room=room, objects=placed, seed=seed)
