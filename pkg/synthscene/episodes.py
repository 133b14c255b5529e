"""
Сборка эпизодов визуальной привязки: сцена, RGB-D виды, запрос, предложения.
"""
import logging
from dataclasses import dataclass, field, replace
from typing import List, Tuple

import numpy as np

from utils.boxes import ObjectProposal
from utils.camera import CameraFrame
from utils.errors import ConfigError, NoQueryError, SceneGenerationError
from .proposals import jitter_proposals, proposals_from_scene
from .queries import MULTIPLE, UNIQUE, Query, make_query
from .render import camera_ring, render_views
from .scene import SceneSpec, generate_scene

logger = logging.getLogger(__name__)

PROPOSAL_MODES = ("gt", "jitter")


@dataclass(frozen=True)
class DataConfig:
    views: int = 4
    image_size: int = 64
    objects: int = 8
    room_x: float = 6.0
    room_y: float = 6.0
    room_z: float = 3.0
    fov_deg: float = 75.0
    jitter_center: float = 0.05
    jitter_scale: float = 0.1

    def __post_init__(self):
        if self.views < 1:
            raise ConfigError("data.views", "должно быть >= 1")
        if self.image_size < 1:
            raise ConfigError("data.image_size", "должно быть >= 1")
        if self.objects < 2:
            raise ConfigError("data.objects", "сцена должна содержать не менее 2 объектов")
        for key in ("room_x", "room_y", "room_z"):
            if getattr(self, key) <= 0:
                raise ConfigError(f"data.{key}", "размер комнаты должен быть положительным")
        if not 0 < self.fov_deg < 180:
            raise ConfigError("data.fov_deg", "угол обзора должен быть в (0, 180)")
        if self.jitter_center < 0 or self.jitter_scale < 0:
            raise ConfigError("data.jitter_center", "СКО шума должны быть >= 0")

    @property
    def room(self) -> Tuple[float, float, float]:
        return (self.room_x, self.room_y, self.room_z)


@dataclass(eq=False)
class GroundingEpisode:
    episode_id: int
    seed: int
    scene: SceneSpec
    frames: List[CameraFrame]
    query: Query
    proposals: List[ObjectProposal] = field(default_factory=list)
    target_id: int = -1

    def __post_init__(self):
        if self.target_id not in [p.id for p in self.proposals]:
            raise ValueError(f"Эпизод {self.episode_id}: цель {self.target_id} отсутствует среди предложений")

    @property
    def uniqueness(self) -> str:
        return self.query.uniqueness

    @property
    def target_category(self) -> int:
        return self.scene.object(self.target_id).category_index

    def with_views(self, count: int) -> "GroundingEpisode":
        """Эпизод с первыми count видами."""
        return replace(self, frames=self.frames[:count])

    def with_proposals(self, proposals: List[ObjectProposal]) -> "GroundingEpisode":
        return replace(self, proposals=list(proposals))


@dataclass
class GenerationSummary:
    episodes: int = 0
    unique: int = 0
    multiple: int = 0
    skipped: int = 0

    def count(self, episode: GroundingEpisode) -> None:
        self.episodes += 1
        if episode.uniqueness == MULTIPLE:
            self.multiple += 1
        else:
            self.unique += 1


def attempt_seed(seed: int, attempt: int) -> int:
    """Независимое зерно попытки, производное от верхнеуровневого."""
    return int(np.random.SeedSequence([seed, attempt]).generate_state(1)[0])


def build_episode(episode_id: int, seed: int, config: DataConfig) -> GroundingEpisode:
    scene = generate_scene(seed, num_objects=config.objects, room=config.room)
    query = make_query(scene, seed)
    cameras = camera_ring(scene, config.views, image_size=config.image_size, fov_deg=config.fov_deg, seed=seed)
    frames = render_views(scene, cameras)
    return GroundingEpisode(
        episode_id=episode_id,
        seed=seed,
        scene=scene,
        frames=frames,
        query=query,
        proposals=proposals_from_scene(scene),
        target_id=query.target_id,
    )


def generate_episodes(seed: int, count: int, config: DataConfig) -> Tuple[List[GroundingEpisode], GenerationSummary]:
    """
    count эпизодов из последовательных попыток. Сцена без однозначного
    запроса или с неудачным размещением пропускается и учитывается в сводке.
    Результат - чистая функция seed.
    """
    summary = GenerationSummary()
    episodes: List[GroundingEpisode] = []
    attempt = 0
    while len(episodes) < count:
        episode_seed = attempt_seed(seed, attempt)
        attempt += 1
        try:
            episode = build_episode(len(episodes), episode_seed, config)
        except (NoQueryError, SceneGenerationError) as e:
            summary.skipped += 1
            logger.warning(f"Попытка {attempt - 1} пропущена: {e}")
            if summary.skipped > 10 * max(count, 1):
                raise SceneGenerationError(f"Слишком много пропусков ({summary.skipped}) при генерации") from e
            continue
        episodes.append(episode)
        summary.count(episode)
    logger.info(
        f"Сгенерировано эпизодов: {summary.episodes} ({UNIQUE}: {summary.unique}, "
        f"{MULTIPLE}: {summary.multiple}), пропущено: {summary.skipped}"
    )
    return episodes, summary


def episode_proposals(episode: GroundingEpisode, mode: str, config: DataConfig) -> List[ObjectProposal]:
    """Предложения эпизода в режиме gt или jitter; шум детерминирован зерном эпизода."""
    if mode not in PROPOSAL_MODES:
        raise ValueError(f"Режим предложений должен быть одним из {PROPOSAL_MODES}, получено {mode!r}")
    if mode == "gt":
        return list(episode.proposals)
    return jitter_proposals(
        episode.proposals,
        seed=attempt_seed(episode.seed, 1),
        sigma_scale=config.jitter_scale,
        sigma_center=config.jitter_center,
        room=episode.scene.room_box,
    )
