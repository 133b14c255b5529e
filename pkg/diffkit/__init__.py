from .tensor import Tape, TapeRecord, Tensor, as_tensor, current_tape
from .nn import Embedding, LayerNorm, Linear, Module, parameter
from .optim import AdamState, adam_step
from .gradcheck import finite_diff_check
from .checkpoint import load_checkpoint, save_checkpoint
from . import ops

__all__ = [
    "Tape",
    "TapeRecord",
    "Tensor",
    "as_tensor",
    "current_tape",
    "Module",
    "Linear",
    "LayerNorm",
    "Embedding",
    "parameter",
    "AdamState",
    "adam_step",
    "finite_diff_check",
    "load_checkpoint",
    "save_checkpoint",
    "ops",
]
