"""
Абляции: каждый вариант обучается с общим зерном и оценивается на одном
тестовом наборе; по нескольким зернам берется среднее.
"""
import logging
from typing import Dict, List, Optional, Sequence

import numpy as np

from grounder.config import RunConfig
from grounder.evaluation import ModelPredictor, evaluate
from grounder.model import ModelConfig, ablation_by_name, prepare_episode
from grounder.training import train
from synthscene.episodes import GroundingEpisode
from synthscene.queries import MULTIPLE, UNIQUE

logger = logging.getLogger(__name__)

DEFAULT_VARIANTS = ("full", "no-sg", "no-mpe", "no-attn", "no-lg")
ABLATION_COLUMNS = (
    "variant", "views", "seeds", "acc@0.25", "acc@0.5", "unique@0.25", "multiple@0.25", "category_acc", "gap@0.25",
)


def run_ablation(
    train_episodes: Sequence[GroundingEpisode],
    test_episodes: Sequence[GroundingEpisode],
    run: RunConfig,
    variants: Sequence[str] = DEFAULT_VARIANTS,
    seeds: Optional[Sequence[int]] = None,
    views: Optional[Sequence[int]] = None,
    proposals: str = "gt",
) -> List[Dict]:
    """
    Одна строка на (вариант, число видов). gap@0.25 - отставание варианта от
    full по Acc@0.25 (если full входит в список).
    """
    seeds = list(seeds) if seeds else [run.train.seed]
    view_counts = list(views) if views else [None]
    rows = []
    for count in view_counts:
        train_set = [ep.with_views(count) for ep in train_episodes] if count else list(train_episodes)
        test_set = [ep.with_views(count) for ep in test_episodes] if count else list(test_episodes)
        # геометрия эпизодов не зависит от варианта и зерна
        shared = [prepare_episode(ep, ModelConfig.from_run(run)) for ep in train_set]
        block = []
        for name in variants:
            ablation = ablation_by_name(name)
            metrics = []
            for seed in seeds:
                seeded = run.override({"train.seed": seed})
                logger.info(f"Вариант {name}, видов: {count or 'все'}, зерно {seed}")
                result = train(train_set, seeded, ablation, prepared=shared)
                report = evaluate(test_set, ModelPredictor(result.model), proposals=proposals, data=run.data)
                metrics.append({
                    "acc@0.25": report.accuracy(0.25),
                    "acc@0.5": report.accuracy(0.5),
                    "unique@0.25": report.accuracy(0.25, UNIQUE),
                    "multiple@0.25": report.accuracy(0.25, MULTIPLE),
                    "category_acc": report.category_accuracy(),
                })
            row = {
                "variant": name,
                "views": count if count else (len(test_set[0].frames) if test_set else 0),
                "seeds": " ".join(str(s) for s in seeds),
            }
            for key in metrics[0]:
                row[key] = float(np.mean([m[key] for m in metrics]))
            block.append(row)
        full = next((r for r in block if r["variant"] == "full"), None)
        for row in block:
            row["gap@0.25"] = full["acc@0.25"] - row["acc@0.25"] if full else float("nan")
        rows.extend(block)
    return rows
