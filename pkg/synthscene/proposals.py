import logging
from typing import List, Optional, Sequence

import numpy as np

from utils.boxes import Aabb, ObjectProposal
from .scene import SceneSpec

logger = logging.getLogger(__name__)


def proposals_from_scene(scene: SceneSpec) -> List[ObjectProposal]:
    """Предложения с эталонными боксами (режим GT)."""
    return [ObjectProposal(id=obj.id, box=obj.box, gt_category=obj.category_index) for obj in scene.objects]


def _clip_box(box: Aabb, room: Aabb, fallback: Aabb) -> Aabb:
    lo = np.maximum(box.min_corner, room.min_corner)
    hi = np.minimum(box.max_corner, room.max_corner)
    if np.any(hi <= lo):
        return fallback
    return Aabb(lo, hi)


def jitter_proposals(
    proposals: Sequence[ObjectProposal],
    seed: int,
    sigma_scale: float = 0.1,
    sigma_center: float = 0.05,
    room: Optional[Aabb] = None,
) -> List[ObjectProposal]:
    """
    Зашумленные боксы (режим Pred): гауссов сдвиг центра со СКО sigma_center
    метров и логнормальный множитель размера exp(N(0, sigma_scale)) по каждой
    оси. Результат обрезается по комнате. При нулевых sigma боксы не меняются.
    """
    if sigma_scale < 0 or sigma_center < 0:
        raise ValueError(f"СКО шума должны быть >= 0: scale={sigma_scale}, center={sigma_center}")
    if sigma_scale == 0 and sigma_center == 0:
        return list(proposals)

    rng = np.random.default_rng(seed)
    jittered = []
    for proposal in proposals:
        box = proposal.box
        center = box.center + rng.normal(0.0, sigma_center, size=3)
        size = box.size * np.exp(rng.normal(0.0, sigma_scale, size=3))
        new_box = Aabb.from_center_size(center, size)
        if room is not None:
            new_box = _clip_box(new_box, room, box)
        jittered.append(ObjectProposal(id=proposal.id, box=new_box, gt_category=proposal.gt_category))
    return jittered
