"""
Наборы проверок градиентов конечными разностями: операции diffkit,
блоки модели и вся модель на микроэпизоде (2 вида, 2 предложения).
"""
import logging
from dataclasses import dataclass
from typing import Callable, List

import numpy as np

from diffkit import Tensor, finite_diff_check, ops, parameter
from grounder.config import RunConfig
from grounder.grounding import infonce_ground, language_loss
from grounder.model import ModelConfig, ToyGrounder
from grounder.posenc import PatchGrid, PosEncConfig, RayMlp, fuse_multilevel
from grounder.recon import conf_weighted_loss
from grounder.se_attention import AttentionParams, SEBlock, attend, se_block
from grounder.training import episode_losses
from synthscene.episodes import GroundingEpisode
from synthscene.proposals import proposals_from_scene
from synthscene.queries import MULTIPLE, UNIQUE, Query, render_query
from synthscene.render import camera_ring, render_views
from synthscene.scene import generate_scene

logger = logging.getLogger(__name__)

SCOPES = ("op", "block", "model")
THRESHOLDS = {"op": 1e-4, "block": 1e-4, "model": 1e-3}

MICRO_OVERRIDES = {
    "posenc.dim": 16,
    "posenc.num_freqs": 2,
    "posenc.ray_mlp_hidden": 8,
    "se.blocks": 1,
    "se.heads": 2,
    "recon.decoder_blocks": 1,
    "model.patch_size": 4,
    "model.fusion_blocks": 1,
    "model.max_query_len": 8,
}


@dataclass(frozen=True)
class GradcheckResult:
    scope: str
    unit: str
    error: float
    threshold: float

    @property
    def passed(self) -> bool:
        return bool(self.error < self.threshold)


def micro_episode(seed: int = 7, views: int = 2, image_size: int = 16) -> GroundingEpisode:
    """Сцена из двух объектов, запрос "ближе всего к стене" к первому объекту."""
    scene = generate_scene(seed, num_objects=2)
    target = scene.objects[0]
    query = Query(
        tokens=render_query(scene, "closest-to-wall", target.id, ()),
        relation="closest-to-wall",
        anchor_ids=(),
        target_id=target.id,
        uniqueness=MULTIPLE if scene.category_count(target.category) > 1 else UNIQUE,
    )
    frames = render_views(scene, camera_ring(scene, views, image_size=image_size, seed=seed))
    return GroundingEpisode(
        episode_id=0, seed=seed, scene=scene, frames=frames, query=query,
        proposals=proposals_from_scene(scene), target_id=target.id,
    )


def micro_config(seed: int = 7) -> RunConfig:
    return RunConfig().override({**MICRO_OVERRIDES, "train.seed": seed})


def _weighted(fn: Callable[[Tensor], Tensor], x: Tensor, rng: np.random.Generator) -> Callable[[Tensor], Tensor]:
    # случайные веса выхода: градиент суммы softmax по строке равен нулю
    weights = rng.normal(size=fn(Tensor(x.data)).shape)
    return lambda t: ops.sum(ops.mul(fn(t), weights))


def _away_from_zero(rng: np.random.Generator, shape) -> np.ndarray:
    return rng.choice([-1.0, 1.0], size=shape) * rng.uniform(0.2, 1.5, size=shape)


def op_checks(seed: int = 0) -> List[GradcheckResult]:
    rng = np.random.default_rng(seed)
    other = rng.normal(size=(3, 4))
    right = rng.normal(size=(4, 5))
    positive = rng.uniform(0.5, 2.0, size=(3, 4))
    mask = np.array([[True, True, False, True]] * 3)
    cases = {
        "add": (lambda t: ops.add(t, other), rng.normal(size=(3, 4))),
        "add_broadcast": (lambda t: ops.add(other, t), rng.normal(size=(4,))),
        "sub": (lambda t: ops.sub(other, t), rng.normal(size=(3, 4))),
        "mul": (lambda t: ops.mul(t, other), rng.normal(size=(3, 4))),
        "div": (lambda t: ops.div(other, t), _away_from_zero(rng, (3, 4))),
        "neg": (ops.neg, rng.normal(size=(3, 4))),
        "exp": (ops.exp, rng.normal(size=(3, 4))),
        "log": (ops.log, positive),
        "relu": (ops.relu, _away_from_zero(rng, (3, 4))),
        "gelu": (ops.gelu, rng.normal(size=(3, 4))),
        "square": (ops.square, rng.normal(size=(3, 4))),
        "sum": (lambda t: ops.sum(t, axis=0), rng.normal(size=(3, 4))),
        "mean": (lambda t: ops.mean(t, axis=1, keepdims=True), rng.normal(size=(3, 4))),
        "reshape": (lambda t: ops.reshape(t, (4, 3)), rng.normal(size=(3, 4))),
        "transpose": (lambda t: ops.transpose(t, (1, 0)), rng.normal(size=(3, 4))),
        "concat": (lambda t: ops.concat([t, other], axis=0), rng.normal(size=(3, 4))),
        "gather": (lambda t: ops.gather(t, [2, 0, 2], axis=1), rng.normal(size=(3, 4))),
        "matmul": (lambda t: ops.matmul(t, right), rng.normal(size=(2, 3, 4))),
        "softmax": (lambda t: ops.softmax(t, axis=-1, mask=mask), rng.normal(size=(3, 4))),
        "log_softmax": (lambda t: ops.log_softmax(t, axis=-1), rng.normal(size=(3, 4))),
        "layer_norm": (lambda t: ops.layer_norm(t, np.ones(4) * 1.3, np.zeros(4)), rng.normal(size=(3, 4))),
        "l2_norm": (lambda t: ops.l2_norm(t, axis=-1), rng.normal(size=(3, 4))),
        "normalize": (lambda t: ops.normalize(t, axis=-1), rng.normal(size=(3, 4))),
        "cross_entropy": (lambda t: ops.cross_entropy(t, 2), rng.normal(size=(6,))),
    }
    results = []
    for name, (fn, data) in cases.items():
        x = parameter(data)
        error = finite_diff_check(_weighted(fn, x, rng), x)
        results.append(GradcheckResult("op", name, error, THRESHOLDS["op"]))
    return results


def block_checks(seed: int = 0) -> List[GradcheckResult]:
    rng = np.random.default_rng(seed)
    dim, heads = 8, 2
    results = []

    params = AttentionParams(dim, heads, rng)
    x = parameter(rng.normal(size=(1, 3, 5, dim)))
    valid = np.ones((1, 3, 5), dtype=bool)
    valid[0, 1, 4] = False
    error = finite_diff_check(_weighted(lambda t: attend(t, valid, params), x, rng), x)
    results.append(GradcheckResult("block", "attend", error, THRESHOLDS["block"]))
    error = finite_diff_check(_weighted(lambda _: attend(Tensor(x.data), valid, params), params.query.weight, rng), params.query.weight)
    results.append(GradcheckResult("block", "attend.query", error, THRESHOLDS["block"]))

    block = SEBlock(dim, heads, rng)
    error = finite_diff_check(_weighted(lambda t: se_block(t, valid, block), x, rng), x)
    results.append(GradcheckResult("block", "se_block", error, THRESHOLDS["block"]))

    config = PosEncConfig(dim=dim, num_freqs=1, ray_mlp_hidden=4)
    mlp = RayMlp(config, rng)
    grid = PatchGrid(
        features=Tensor(rng.normal(size=(1, 2, 4, dim))),
        world_coords=rng.normal(size=(1, 2, 4, 3)),
        ray_dirs=rng.normal(size=(1, 2, 4, 3)),
        valid=np.ones((1, 2, 4), dtype=bool),
        grid_h=2,
        grid_w=2,
    )
    fused = lambda _: fuse_multilevel(grid, config, mlp).features
    error = finite_diff_check(_weighted(fused, mlp.fc1.weight, rng), mlp.fc1.weight)
    results.append(GradcheckResult("block", "fuse_multilevel.psi", error, THRESHOLDS["block"]))

    gt = rng.normal(size=(1, 2, 4, 3))
    point_mask = np.ones((1, 2, 4), dtype=bool)
    points = parameter(gt + 0.3 * rng.normal(size=gt.shape))
    conf = parameter(rng.normal(size=(1, 2, 4)))
    error = finite_diff_check(lambda t: conf_weighted_loss(t, conf, gt, point_mask, 0.2, per_view=True), points)
    results.append(GradcheckResult("block", "conf_weighted_loss.points", error, THRESHOLDS["block"]))
    error = finite_diff_check(lambda t: conf_weighted_loss(points, t, gt, point_mask, 0.2), conf)
    results.append(GradcheckResult("block", "conf_weighted_loss.conf", error, THRESHOLDS["block"]))

    objects = Tensor(rng.normal(size=(4, dim)))
    h = parameter(rng.normal(size=(dim,)))
    error = finite_diff_check(lambda t: infonce_ground(t, objects, 1), h)
    results.append(GradcheckResult("block", "infonce_ground", error, THRESHOLDS["block"]))
    logits = parameter(rng.normal(size=(12,)))
    error = finite_diff_check(lambda t: language_loss(t, 3), logits)
    results.append(GradcheckResult("block", "language_loss", error, THRESHOLDS["block"]))
    return results


def model_checks(seed: int = 7, max_entries: int = 6) -> List[GradcheckResult]:
    run = micro_config(seed)
    model = ToyGrounder(ModelConfig.from_run(run), with_recon=True)
    prepared = model.prepare(micro_episode(seed))
    params = dict(model.named_parameters())
    units = [
        "patch_embed.weight", "ray_mlp.fc1.weight", "se_blocks.0.intra.query.weight",
        "se_blocks.0.inter.value.weight", "token_embed.weight", "ground_token",
        "fusion.0.attn.key.weight", "object_head.weight", "category_head.weight",
        "recon.projection.weight", "recon.global_head.weight",
    ]
    rng = np.random.default_rng(seed)
    results = []
    for name in units:
        error = finite_diff_check(
            lambda _: episode_losses(model, prepared, run)[0], params[name], max_entries=max_entries, rng=rng
        )
        results.append(GradcheckResult("model", name, error, THRESHOLDS["model"]))
    return results


def run_gradcheck(scope: str = "op", seed: int = 7) -> List[GradcheckResult]:
    if scope == "all":
        return op_checks(seed) + block_checks(seed) + model_checks(seed)
    if scope == "op":
        return op_checks(seed)
    if scope == "block":
        return block_checks(seed)
    if scope == "model":
        return model_checks(seed)
    raise ValueError(f"Неизвестная область проверки {scope!r}, ожидалось одно из {SCOPES + ('all',)}")
