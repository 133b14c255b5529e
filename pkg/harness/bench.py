"""
Сравнение стоимости разделенного и совместного внимания: аналитическое
число операций и измеренное время. Отдельно - задержка вывода в
зависимости от числа блоков декодера реконструкции.
"""
import csv
import logging
import time
from pathlib import Path
from typing import Dict, List, Sequence, Union

import numpy as np

from diffkit import Tensor
from grounder.config import RunConfig
from grounder.model import ModelConfig, ToyGrounder
from grounder.se_attention import AttentionParams, flops_estimate, inter_view_attention, intra_view_attention, joint_attention
from synthscene.episodes import GroundingEpisode
from utils.errors import DataIOError

logger = logging.getLogger(__name__)

ATTENTION_COLUMNS = (
    "views", "patches", "dim", "divided_flops", "joint_flops", "ratio", "divided_time", "joint_time", "time_ratio",
)
LATENCY_COLUMNS = ("decoder_blocks", "recon_parameters", "episodes", "latency_ms")


def _best_time(fn, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        started = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - started)
    return best


def attention_cost(
    views: int, patches: int, dim: int, heads: int = 4, measure: bool = True, repeats: int = 3, seed: int = 0
) -> Dict[str, float]:
    divided = flops_estimate(views, patches, dim, "divided")
    joint = flops_estimate(views, patches, dim, "joint")
    row = {
        "views": views,
        "patches": patches,
        "dim": dim,
        "divided_flops": divided,
        "joint_flops": joint,
        "ratio": divided / joint,
        "divided_time": float("nan"),
        "joint_time": float("nan"),
        "time_ratio": float("nan"),
    }
    if measure:
        rng = np.random.default_rng(seed)
        params = AttentionParams(dim, heads, rng)
        f = Tensor(rng.normal(size=(1, views, patches, dim)))
        row["divided_time"] = _best_time(
            lambda: inter_view_attention(intra_view_attention(f, None, params), None, params), repeats
        )
        row["joint_time"] = _best_time(lambda: joint_attention(f, None, params), repeats)
        row["time_ratio"] = row["divided_time"] / row["joint_time"]
    logger.info(
        f"V={views}, N={patches}: отношение операций {row['ratio']:.4f}, отношение времени {row['time_ratio']:.4f}"
    )
    return row


def attention_table(
    views: Sequence[int], patches: Sequence[int], dim: int, heads: int = 4, measure: bool = True
) -> List[Dict[str, float]]:
    return [attention_cost(v, n, dim, heads, measure) for v in views for n in patches]


def inference_latency(
    episodes: Sequence[GroundingEpisode], run: RunConfig, decoder_blocks: Sequence[int]
) -> List[Dict[str, float]]:
    """
    Средняя задержка прямого прохода infer для моделей с разным числом блоков
    декодера реконструкции. Модель строится вместе с ветвью реконструкции.
    """
    if not episodes:
        raise ValueError("Для замера задержки нужен хотя бы один эпизод")
    rows = []
    for blocks in decoder_blocks:
        config = ModelConfig.from_run(run.override({"recon.decoder_blocks": blocks}))
        model = ToyGrounder(config, with_recon=True)
        prepared = [model.prepare(ep) for ep in episodes]
        model.forward(prepared[0], mode="infer")
        started = time.perf_counter()
        for p in prepared:
            model.forward(p, mode="infer")
        latency = (time.perf_counter() - started) / len(prepared)
        rows.append({
            "decoder_blocks": blocks,
            "recon_parameters": model.recon.parameter_count() if model.recon else 0,
            "episodes": len(prepared),
            "latency_ms": latency * 1000.0,
        })
        logger.info(f"decoder_blocks={blocks}: {latency * 1000.0:.3f} мс/эпизод")
    return rows


def write_rows(path: Union[str, Path], columns: Sequence[str], rows: Sequence[Dict]) -> None:
    try:
        with Path(path).open("w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(columns)
            for row in rows:
                writer.writerow([row[c] for c in columns])
    except OSError as e:
        raise DataIOError(f"Не удалось записать {path}: {e}") from e
