"""
RGB-D рендер сцены из осевых боксов методом пересечения лучей со слэбами.

Глубина - расстояние вдоль оптической оси (z камеры), поэтому обратная
проекция отрендеренной глубины возвращает точку попадания луча.
"""
import logging
from typing import List, Sequence, Tuple

import numpy as np

from utils.camera import CameraFrame, Extrinsics, Intrinsics, camera_rays
from .scene import ROOM_ALBEDO, SceneSpec

logger = logging.getLogger(__name__)

Camera = Tuple[Intrinsics, Extrinsics]

CAMERA_HEIGHT_RATIO = 0.8
RING_RADIUS_RATIO = 0.3
TARGET_HEIGHT = 0.4


def camera_ring(
    scene: SceneSpec,
    num_views: int,
    image_size: int = 64,
    fov_deg: float = 75.0,
    seed: int = 0,
    pose_noise: float = 0.05,
) -> List[Camera]:
    """
    Кольцо камер на фиксированной высоте, смотрящих на центр комнаты, с
    небольшим шумом позы - имитация траектории сканирования.
    """
    rng = np.random.default_rng(seed)
    room = np.asarray(scene.room, dtype=np.float64)
    center = room / 2.0
    radius = RING_RADIUS_RATIO * min(room[0], room[1])
    height = CAMERA_HEIGHT_RATIO * room[2]
    intrinsics = Intrinsics.from_fov(image_size, image_size, fov_deg)
    phase = rng.uniform(0.0, 2 * np.pi)

    cameras: List[Camera] = []
    for k in range(num_views):
        angle = phase + 2 * np.pi * k / num_views + rng.normal(0.0, pose_noise)
        eye = np.array([
            center[0] + radius * np.cos(angle),
            center[1] + radius * np.sin(angle),
            height + rng.normal(0.0, pose_noise),
        ])
        # камера смотрит через центр на противоположную половину комнаты
        target = np.array([
            center[0] - 0.5 * radius * np.cos(angle),
            center[1] - 0.5 * radius * np.sin(angle),
            TARGET_HEIGHT,
        ]) + rng.normal(0.0, pose_noise, size=3)
        cameras.append((intrinsics, Extrinsics.look_at(eye, target)))
    return cameras


def _slab_intervals(origin: np.ndarray, dirs: np.ndarray, lo: np.ndarray, hi: np.ndarray):
    """Интервалы [t_near, t_far] пересечения лучей (M, 3) с боксами (K, 3)."""
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs
        t1 = (lo[None, :, :] - origin) * inv[:, None, :]
        t2 = (hi[None, :, :] - origin) * inv[:, None, :]
    # луч, параллельный слэбу: внутри слэба - без ограничений, снаружи - промах
    parallel = dirs[:, None, :] == 0
    inside = (origin >= lo[None, :, :]) & (origin <= hi[None, :, :])
    t_min = np.where(parallel, np.where(inside, -np.inf, np.inf), np.minimum(t1, t2))
    t_max = np.where(parallel, np.where(inside, np.inf, -np.inf), np.maximum(t1, t2))
    return t_min.max(axis=-1), t_max.min(axis=-1)


def trace_rays(scene: SceneSpec, origin: np.ndarray, dirs: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Параметр t ближайшего попадания и индекс объекта (-1 - стены/пол/потолок)
    для лучей o + t * d. Комната замкнута, поэтому промахов нет.
    """
    origin = np.asarray(origin, dtype=np.float64)
    room_box = scene.room_box
    _, t_exit = _slab_intervals(origin, dirs, room_box.min_corner[None], room_box.max_corner[None])
    t_hit = t_exit[:, 0].copy()
    hit_id = np.full(len(dirs), -1, dtype=np.int64)
    if scene.objects:
        lo = np.stack([obj.box.min_corner for obj in scene.objects])
        hi = np.stack([obj.box.max_corner for obj in scene.objects])
        t_near, t_far = _slab_intervals(origin, dirs, lo, hi)
        hits = (t_near <= t_far) & (t_near > 0)
        t_obj = np.where(hits, t_near, np.inf)
        nearest = np.argmin(t_obj, axis=1)
        t_best = t_obj[np.arange(len(dirs)), nearest]
        closer = t_best < t_hit
        t_hit = np.where(closer, t_best, t_hit)
        hit_id = np.where(closer, nearest, -1)
    return t_hit, hit_id


def render_view(scene: SceneSpec, intrinsics: Intrinsics, extrinsics: Extrinsics) -> CameraFrame:
    v, u = np.mgrid[0:intrinsics.height, 0:intrinsics.width]
    dirs = camera_rays(intrinsics, extrinsics, u, v).reshape(-1, 3)
    t_hit, hit_id = trace_rays(scene, extrinsics.translation, dirs)

    palette = np.array([obj.albedo for obj in scene.objects] + [ROOM_ALBEDO], dtype=np.float64) / 255.0
    color = palette[np.where(hit_id >= 0, hit_id, len(scene.objects))]
    shape = (intrinsics.height, intrinsics.width)
    # z-компонента направления в кадре камеры равна 1, поэтому t совпадает с глубиной
    return CameraFrame(
        color=color.reshape(shape + (3,)),
        depth=t_hit.reshape(shape),
        intrinsics=intrinsics,
        extrinsics=extrinsics,
    )


def render_views(scene: SceneSpec, cameras: Sequence[Camera]) -> List[CameraFrame]:
    return [render_view(scene, intr, extr) for intr, extr in cameras]


def hit_points(scene: SceneSpec, intrinsics: Intrinsics, extrinsics: Extrinsics) -> np.ndarray:
    """Аналитические точки попадания лучей всех пикселей, H x W x 3."""
    v, u = np.mgrid[0:intrinsics.height, 0:intrinsics.width]
    dirs = camera_rays(intrinsics, extrinsics, u, v).reshape(-1, 3)
    t_hit, _ = trace_rays(scene, extrinsics.translation, dirs)
    points = extrinsics.translation + dirs * t_hit[:, None]
    return points.reshape(intrinsics.height, intrinsics.width, 3)
