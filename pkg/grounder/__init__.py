from .config import RunConfig, load_config, parse_config
from .posenc import PatchGrid, PosEncConfig, fuse_multilevel, ray_mlp_encode, sinusoidal_encode_3d
from .se_attention import flops_estimate, inter_view_attention, intra_view_attention, joint_attention, se_block
from .recon import ReconConfig, conf_weighted_loss, recon_decoder, recon_loss_total, regr_loss
from .grounding import (
    GroundingOutput,
    LossWeights,
    infonce_ground,
    language_loss,
    pool_object_feature,
    predict_target,
    total_loss,
)
from .model import ABLATIONS, Ablation, ModelConfig, ToyGrounder, encode_views
from .training import TrainResult, train
from .evaluation import EvalReport, classify_error, evaluate, load_model

__all__ = [
    "RunConfig",
    "load_config",
    "parse_config",
    "PatchGrid",
    "PosEncConfig",
    "fuse_multilevel",
    "ray_mlp_encode",
    "sinusoidal_encode_3d",
    "flops_estimate",
    "inter_view_attention",
    "intra_view_attention",
    "joint_attention",
    "se_block",
    "ReconConfig",
    "conf_weighted_loss",
    "recon_decoder",
    "recon_loss_total",
    "regr_loss",
    "GroundingOutput",
    "LossWeights",
    "infonce_ground",
    "language_loss",
    "pool_object_feature",
    "predict_target",
    "total_loss",
    "ABLATIONS",
    "Ablation",
    "ModelConfig",
    "ToyGrounder",
    "encode_views",
    "TrainResult",
    "train",
    "EvalReport",
    "classify_error",
    "evaluate",
    "load_model",
]
