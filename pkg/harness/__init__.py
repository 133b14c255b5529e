from .ablate import DEFAULT_VARIANTS, run_ablation
from .bench import attention_cost, attention_table, inference_latency
from .gradcheck import GradcheckResult, run_gradcheck
from .cli import main

__all__ = [
    "DEFAULT_VARIANTS",
    "run_ablation",
    "attention_cost",
    "attention_table",
    "inference_latency",
    "GradcheckResult",
    "run_gradcheck",
    "main",
]
