"""
Малая модель визуальной привязки: кодирование видов, многоуровневое
позиционное кодирование, структурные блоки внимания, совместный
трансформер над визуальными токенами, токенами запроса и токеном <ground>,
головы привязки и категории. Ветвь реконструкции строится только для
обучения и не вызывается в режиме infer.
"""
import logging
import threading
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from diffkit import Embedding, LayerNorm, Linear, Module, Tensor, ops, parameter
from synthscene.episodes import GroundingEpisode
from synthscene.queries import QUERY_VOCAB, token_ids
from synthscene.scene import CATEGORIES
from utils.boxes import ObjectProposal
from utils.camera import CameraFrame, backproject_depth_map, pad_to_patches, patch_center_ray, patch_mean_world, split_patches
from utils.errors import CheckpointError, ConfigError, ConfigMismatchError, DegenerateSceneError, DimensionError
from .config import RunConfig
from .grounding import (
    GroundingOutput,
    PoolingWeights,
    cosine_similarities,
    pool_object_features,
    pooling_weights,
    predict_target,
)
from .posenc import PatchGrid, PosEncConfig, RayMlp, fuse_multilevel
from .recon import PointMapPrediction, ReconBranch, ReconConfig, gt_pointmaps_from_frames, recon_decoder
from .se_attention import AttentionParams, AttentionStats, FeedForward, SEBlock, attend, se_stack

logger = logging.getLogger(__name__)

MODES = ("train", "infer")


@dataclass(frozen=True)
class Ablation:
    """Включенные компоненты: структурное руководство, позиционное кодирование, внимание, языковая потеря."""
    sg: bool = True
    mpe: bool = True
    attn: bool = True
    lg: bool = True


ABLATIONS: Dict[str, Ablation] = {
    "full": Ablation(),
    "no-sg": Ablation(sg=False),
    "no-mpe": Ablation(mpe=False),
    "no-attn": Ablation(attn=False),
    "no-lg": Ablation(lg=False),
    "base": Ablation(sg=False, mpe=False, attn=False, lg=False),
    "base+attn": Ablation(sg=False, mpe=False, attn=True, lg=False),
}


def ablation_by_name(name: str) -> Ablation:
    # "sg" и "no-sg" равнозначны
    key = name if name in ABLATIONS else f"no-{name}"
    if key not in ABLATIONS:
        raise ConfigError("ablate", f"неизвестный вариант {name!r}, ожидалось одно из {sorted(ABLATIONS)}")
    return ABLATIONS[key]


@dataclass(frozen=True)
class ModelConfig:
    posenc: PosEncConfig = field(default_factory=PosEncConfig)
    se_blocks: int = 2
    se_heads: int = 4
    recon: ReconConfig = field(default_factory=ReconConfig)
    patch_size: int = 8
    fusion_blocks: int = 2
    max_query_len: int = 16
    vocab_size: int = len(QUERY_VOCAB)
    num_categories: int = len(CATEGORIES)
    seed: int = 7
    ablation: Ablation = field(default_factory=Ablation)

    def __post_init__(self):
        for key in ("se_blocks", "fusion_blocks"):
            if getattr(self, key) < 0:
                raise ConfigError(f"model.{key}", "должно быть >= 0")
        for key in ("se_heads", "patch_size", "max_query_len", "vocab_size", "num_categories"):
            if getattr(self, key) < 1:
                raise ConfigError(f"model.{key}", "должно быть положительным")
        if self.dim % self.se_heads:
            raise ConfigError("se.heads", f"dim={self.dim} не делится на число голов {self.se_heads}")

    @property
    def dim(self) -> int:
        return self.posenc.dim

    @classmethod
    def from_run(cls, run: RunConfig, ablation: Ablation = Ablation()) -> "ModelConfig":
        return cls(
            posenc=run.posenc,
            se_blocks=run.se.blocks,
            se_heads=run.se.heads,
            recon=run.recon,
            patch_size=run.model.patch_size,
            fusion_blocks=run.model.fusion_blocks,
            max_query_len=run.model.max_query_len,
            seed=run.train.seed,
            ablation=ablation,
        )


@dataclass(eq=False)
class ViewGeometry:
    """Не зависящая от параметров часть кодирования видов (1, V, N, ...)."""
    pixels: np.ndarray
    world_coords: np.ndarray
    ray_dirs: np.ndarray
    valid: np.ndarray
    grid_h: int
    grid_w: int
    patch_size: int
    cameras: List[List[Tuple]]
    pixel_points: np.ndarray
    pixel_valid: np.ndarray

    def grid(self, features: Tensor) -> PatchGrid:
        return PatchGrid(
            features=features,
            world_coords=self.world_coords,
            ray_dirs=self.ray_dirs,
            valid=self.valid,
            grid_h=self.grid_h,
            grid_w=self.grid_w,
            patch_size=self.patch_size,
            cameras=self.cameras,
            pixel_points=self.pixel_points,
            pixel_valid=self.pixel_valid,
        )


def view_geometry(frames: Sequence[CameraFrame], patch_size: int) -> ViewGeometry:
    if not frames:
        raise DimensionError("encode_views: нужен хотя бы один кадр")
    shape = (frames[0].height, frames[0].width)
    if any((f.height, f.width) != shape for f in frames):
        raise DimensionError("encode_views: кадры разного размера")

    pixels, world, rays, valid, points, pixel_valid = [], [], [], [], [], []
    for frame in frames:
        patches = split_patches(pad_to_patches(frame.color, patch_size), patch_size)
        hp, wp = patches.shape[:2]
        pixels.append(patches.reshape(hp * wp, -1))
        means, mask = patch_mean_world(frame, patch_size)
        world.append(means.reshape(-1, 3))
        valid.append(mask.reshape(-1))
        rays.append(patch_center_ray(frame, patch_size).directions.reshape(-1, 3))
        pts, pv = backproject_depth_map(frame)
        points.append(pts)
        pixel_valid.append(pv)

    valid_arr = np.stack(valid)
    if not valid_arr.any():
        raise DegenerateSceneError("encode_views: ни одного патча с валидной глубиной")
    return ViewGeometry(
        pixels=np.stack(pixels)[None],
        world_coords=np.stack(world)[None],
        ray_dirs=np.stack(rays)[None],
        valid=valid_arr[None],
        grid_h=hp,
        grid_w=wp,
        patch_size=patch_size,
        cameras=[[(f.intrinsics, f.extrinsics) for f in frames]],
        pixel_points=np.stack(points)[None],
        pixel_valid=np.stack(pixel_valid)[None],
    )


def encode_views(frames: Sequence[CameraFrame], config: ModelConfig, patch_embed: Linear) -> PatchGrid:
    """
    Патчи цвета -> линейный эмбеддинг; мировые точки и лучи патчей из геометрии
    кадров. Невалидные патчи получают нулевые признаки.
    """
    geometry = view_geometry(frames, config.patch_size)
    return _embed(geometry, patch_embed)


def _embed(geometry: ViewGeometry, patch_embed: Linear) -> PatchGrid:
    features = ops.mul(patch_embed(Tensor(geometry.pixels)), geometry.valid.astype(np.float64)[..., None])
    return geometry.grid(features)


@dataclass(eq=False)
class PreparedEpisode:
    """Эпизод с заранее вычисленной геометрией, весами пулинга и токенами запроса."""
    episode_id: int
    geometry: ViewGeometry
    proposals: List[ObjectProposal]
    pooling: PoolingWeights
    token_ids: List[int]
    target_index: int
    target_id: int
    gt_category: int
    local_gt: np.ndarray
    global_gt: np.ndarray
    recon_mask: np.ndarray

    @property
    def proposal_ids(self) -> List[int]:
        return [p.id for p in self.proposals]


def prepare_episode(
    episode: GroundingEpisode,
    config: ModelConfig,
    proposals: Optional[Sequence[ObjectProposal]] = None,
) -> PreparedEpisode:
    proposals = list(episode.proposals if proposals is None else proposals)
    ids = [p.id for p in proposals]
    if episode.target_id not in ids:
        raise DimensionError(f"Эпизод {episode.episode_id}: цель {episode.target_id} отсутствует среди предложений")

    geometry = view_geometry(episode.frames, config.patch_size)
    # геометрия укрупненной сетки от нулевых признаков: пулинг не зависит от параметров
    zeros = geometry.grid(Tensor(np.zeros(geometry.valid.shape + (1,))))
    pooled = fuse_multilevel(zeros, config.posenc, None, enabled=False)
    pooling = pooling_weights(pooled, [p.box for p in proposals])
    if pooling.fallback.any():
        logger.warning(
            f"Эпизод {episode.episode_id}: предложения {[ids[i] for i in np.flatnonzero(pooling.fallback)]} "
            f"без патчей с покрытием > 50%, использованы запасные патчи"
        )

    local_gt, global_gt, mask = gt_pointmaps_from_frames(episode.frames, config.patch_size)
    return PreparedEpisode(
        episode_id=episode.episode_id,
        geometry=geometry,
        proposals=proposals,
        pooling=pooling,
        token_ids=token_ids(episode.query.tokens, config.max_query_len),
        target_index=ids.index(episode.target_id),
        target_id=episode.target_id,
        gt_category=episode.target_category,
        local_gt=local_gt[None],
        global_gt=global_gt[None],
        recon_mask=mask[None],
    )


class FusionBlock(Module):
    def __init__(self, dim: int, num_heads: int, rng: np.random.Generator):
        self.attn = AttentionParams(dim, num_heads, rng)
        self.ffn = FeedForward(dim, 2 * dim, rng)

    def __call__(self, x: Tensor, valid: np.ndarray, stats: Optional[AttentionStats] = None) -> Tensor:
        return self.ffn(attend(x, valid, self.attn, stats))


@dataclass(eq=False)
class ForwardPass:
    grounding: GroundingOutput
    pointmaps: Optional[PointMapPrediction] = None
    fallback: Optional[np.ndarray] = None


class ToyGrounder(Module):
    def __init__(self, config: ModelConfig, with_recon: bool = True):
        rng = np.random.default_rng(config.seed)
        dim = config.dim
        self.patch_embed = Linear(config.patch_size * config.patch_size * 3, dim, rng)
        self.ray_mlp = RayMlp(config.posenc, rng)
        se_count = config.se_blocks if config.ablation.attn else 0
        self.se_blocks = [SEBlock(dim, config.se_heads, rng) for _ in range(se_count)]
        self.token_embed = Embedding(config.vocab_size, dim, rng)
        self.query_pos = Embedding(config.max_query_len, dim, rng)
        self.ground_token = parameter(rng.normal(0.0, 0.1, size=(1, dim)))
        self.fusion = [FusionBlock(dim, config.se_heads, rng) for _ in range(config.fusion_blocks)]
        self.final_norm = LayerNorm(dim)
        self.ground_head = Linear(dim, dim, rng)
        self.object_head = Linear(dim, dim, rng)
        self.category_head = Linear(dim, config.num_categories, rng)
        # ветвь реконструкции создается последней: остальные параметры не зависят от with_recon
        self.recon: Optional[ReconBranch] = None
        if with_recon and config.ablation.sg:
            self.recon = ReconBranch(dim, config.se_heads, config.recon, rng)
        self.config = config
        self.recon_calls = 0
        self._calls_lock = threading.Lock()
        logger.info(
            f"Модель построена: {self.parameter_count()} параметров "
            f"(реконструкция: {self.recon.parameter_count() if self.recon else 0})"
        )

    @classmethod
    def for_inference(cls, config: ModelConfig) -> "ToyGrounder":
        """Модель без ветви реконструкции."""
        return cls(config, with_recon=False)

    def encode_views(self, frames: Sequence[CameraFrame]) -> PatchGrid:
        return encode_views(frames, self.config, self.patch_embed)

    def prepare(self, episode: GroundingEpisode, proposals: Optional[Sequence[ObjectProposal]] = None) -> PreparedEpisode:
        return prepare_episode(episode, self.config, proposals)

    def _ground_state(self, visual: PatchGrid, ids: Sequence[int], stats: Optional[AttentionStats]) -> Tensor:
        dim = self.config.dim
        tokens = [ops.reshape(visual.features, (visual.views * visual.num_patches, dim))]
        if ids:
            query = ops.add(self.token_embed(list(ids)), self.query_pos(list(range(len(ids)))))
            tokens.append(query)
        tokens.append(self.ground_token)
        x = ops.reshape(ops.concat(tokens, axis=0), (1, -1, dim))
        valid = np.concatenate([visual.valid.reshape(-1), np.ones(len(ids) + 1, dtype=bool)])[None]
        for block in self.fusion:
            x = block(x, valid, stats)
        x = self.final_norm(x)
        # <ground> всегда последний в последовательности
        h = ops.gather(x, [x.shape[1] - 1], axis=1)
        return ops.reshape(self.ground_head(ops.reshape(h, (1, dim))), (dim,))

    def forward(
        self,
        episode: Union[GroundingEpisode, PreparedEpisode],
        mode: str = "infer",
        stats: Optional[AttentionStats] = None,
    ) -> ForwardPass:
        if mode not in MODES:
            raise ValueError(f"Режим должен быть одним из {MODES}, получено {mode!r}")
        prepared = episode if isinstance(episode, PreparedEpisode) else self.prepare(episode)
        ablation = self.config.ablation

        grid = _embed(prepared.geometry, self.patch_embed)
        visual = fuse_multilevel(grid, self.config.posenc, self.ray_mlp, enabled=ablation.mpe)
        if self.se_blocks:
            visual = replace(visual, features=se_stack(visual.features, visual.valid, self.se_blocks, stats))

        h = self._ground_state(visual, prepared.token_ids, stats)
        pooled, fallback = pool_object_features(
            visual, [p.box for p in prepared.proposals], self.config.posenc,
            weights=prepared.pooling, add_center_code=ablation.mpe,
        )
        objects = self.object_head(pooled)
        similarities = cosine_similarities(h, objects)
        output = GroundingOutput(
            ground_state=h,
            object_features=objects,
            similarities=similarities,
            category_logits=ops.reshape(self.category_head(ops.reshape(h, (1, h.shape[0]))), (self.config.num_categories,)),
            predicted_id=predict_target(similarities, prepared.proposal_ids),
            proposal_ids=prepared.proposal_ids,
            fallback_ids=[prepared.proposal_ids[i] for i in np.flatnonzero(fallback)],
        )

        pointmaps = None
        if mode == "train" and ablation.sg and self.recon is not None:
            with self._calls_lock:
                self.recon_calls += 1
            pointmaps = recon_decoder(grid.features, grid.valid, self.recon)
        return ForwardPass(grounding=output, pointmaps=pointmaps, fallback=fallback)

    __call__ = forward

    def state_dict(self, include_recon: bool = True) -> Dict[str, np.ndarray]:
        return {
            name: p.data.copy()
            for name, p in self.named_parameters()
            if include_recon or not name.startswith("recon.")
        }

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        """
        Загрузка весов по именам. Ключи recon.* пропускаются, если у модели
        нет ветви реконструкции; несовпадение форм -> ConfigMismatchError.
        """
        params = dict(self.named_parameters())
        missing = [name for name in params if name not in state]
        if missing:
            raise CheckpointError(f"В чекпойнте нет параметров: {missing[:5]}")
        for name, value in state.items():
            if name not in params:
                if name.startswith("recon."):
                    continue
                raise ConfigMismatchError(f"Лишний параметр в чекпойнте: {name}")
            if params[name].shape != value.shape:
                raise ConfigMismatchError(
                    f"Параметр {name}: форма в чекпойнте {value.shape}, в конфигурации {params[name].shape}"
                )
        for name, p in params.items():
            p.data[...] = state[name]
