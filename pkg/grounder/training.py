"""
Обучение: AdamW с линейным разогревом и косинусным затуханием, накопление
градиентов по пакету эпизодов в фиксированном порядке, журнал потерь по шагам.
"""
import csv
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from diffkit import AdamState, Tape, Tensor, adam_step, save_checkpoint
from synthscene.episodes import GroundingEpisode
from utils.errors import DataIOError
from utils.schedule import warmup_cosine_lr
from .config import RunConfig
from .grounding import infonce_from_similarities, language_loss, total_loss
from .model import Ablation, ModelConfig, PreparedEpisode, ToyGrounder
from .recon import recon_loss_total

logger = logging.getLogger(__name__)

ENCODER_PREFIX = "patch_embed."


def log_columns(ablation: Ablation) -> List[str]:
    """Колонки журнала: без L_recon при отключенном руководстве, без L_lang без языковой потери."""
    columns = ["step", "L_ground"]
    if ablation.sg:
        columns.append("L_recon")
    if ablation.lg:
        columns.append("L_lang")
    columns.append("total")
    return columns


@dataclass
class TrainResult:
    model: ToyGrounder
    columns: List[str]
    log: List[Dict[str, float]] = field(default_factory=list)
    wall_time: float = 0.0

    def curve(self, column: str) -> np.ndarray:
        return np.array([row[column] for row in self.log])


def episode_losses(
    model: ToyGrounder, prepared: PreparedEpisode, run: RunConfig, step: Optional[int] = None
) -> Tuple[Tensor, Dict[str, float]]:
    """Полная потеря эпизода и значения компонент."""
    result = model.forward(prepared, mode="train")
    grounding = result.grounding
    l_ground = infonce_from_similarities(grounding.similarities, prepared.target_index, run.loss.tau)
    l_recon = None
    if result.pointmaps is not None:
        l_recon = recon_loss_total(
            result.pointmaps, prepared.local_gt, prepared.global_gt, prepared.recon_mask, run.recon
        )
    l_lang = language_loss(grounding.category_logits, prepared.gt_category) if model.config.ablation.lg else None
    total = total_loss(l_ground, l_recon, l_lang, run.loss.weights, step=step)

    values = {"L_ground": l_ground.item(), "total": total.item()}
    if l_recon is not None:
        values["L_recon"] = l_recon.item()
    if l_lang is not None:
        values["L_lang"] = l_lang.item()
    return total, values


def episode_gradients(
    model: ToyGrounder, prepared: PreparedEpisode, run: RunConfig, step: Optional[int] = None
) -> Tuple[List[np.ndarray], Dict[str, float]]:
    # своя лента на эпизод: градиенты хранятся в ленте, а не в параметрах
    with Tape() as tape:
        total, values = episode_losses(model, prepared, run, step)
    tape.backward(total)
    return tape.grads(model.parameters()), values


def batch_indices(count: int, batch_size: int, rng: np.random.Generator) -> Iterator[List[int]]:
    """Бесконечный поток пакетов из последовательных перестановок набора."""
    order: List[int] = []
    while True:
        batch = []
        while len(batch) < batch_size:
            if not order:
                order = list(rng.permutation(count))
            batch.append(int(order.pop(0)))
        yield batch


def lr_scales_for(model: ToyGrounder, encoder_scale: float) -> List[float]:
    return [encoder_scale if name.startswith(ENCODER_PREFIX) else 1.0 for name, _ in model.named_parameters()]


def train(
    episodes: Sequence[GroundingEpisode],
    run: RunConfig,
    ablation: Ablation = Ablation(),
    log_path: Union[str, Path, None] = None,
    checkpoint_path: Union[str, Path, None] = None,
    prepared: Optional[Sequence[PreparedEpisode]] = None,
) -> TrainResult:
    """
    Обучение модели на эпизодах. При фиксированном зерне и любом числе
    потоков результат побитово воспроизводим: градиенты пакета суммируются
    в порядке эпизодов в пакете.
    """
    if not episodes:
        raise ValueError("Обучение требует непустого набора эпизодов")
    started = time.perf_counter()
    cfg = run.train
    model = ToyGrounder(ModelConfig.from_run(run, ablation), with_recon=ablation.sg)
    params = model.parameters()
    state = AdamState.for_params(params)
    scales = lr_scales_for(model, cfg.encoder_lr_scale)
    if prepared is None:
        logger.info(f"Шаг 1: подготовка геометрии {len(episodes)} эпизодов")
        prepared = [model.prepare(ep) for ep in episodes]

    columns = log_columns(ablation)
    result = TrainResult(model=model, columns=columns)
    rng = np.random.default_rng(cfg.seed)
    batches = batch_indices(len(prepared), cfg.batch_size, rng)

    logger.info(f"Шаг 2: обучение {cfg.steps} шагов, пакет {cfg.batch_size}, потоков {cfg.workers}")
    executor = ThreadPoolExecutor(max_workers=cfg.workers) if cfg.workers > 1 else None
    try:
        for step in range(1, cfg.steps + 1):
            batch = [prepared[i] for i in next(batches)]
            if executor is not None:
                outcomes = list(executor.map(lambda p: episode_gradients(model, p, run, step), batch))
            else:
                outcomes = [episode_gradients(model, p, run, step) for p in batch]

            grads = [np.zeros_like(p.data) for p in params]
            row: Dict[str, float] = {column: 0.0 for column in columns if column != "step"}
            for episode_grads, values in outcomes:
                for i, g in enumerate(episode_grads):
                    grads[i] += g
                for key, value in values.items():
                    row[key] += value
            grads = [g / len(batch) for g in grads]
            row = {key: value / len(batch) for key, value in row.items()}

            lr = warmup_cosine_lr(step, cfg.steps, cfg.lr, cfg.warmup_ratio)
            adam_step(
                params, grads, state, lr,
                beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps,
                weight_decay=cfg.weight_decay, lr_scales=scales,
            )
            result.log.append({"step": step, **row})
            if step % cfg.log_every == 0 or step == cfg.steps:
                parts = ", ".join(f"{key}={row[key]:.4f}" for key in columns if key != "step")
                logger.info(f"Шаг {step}/{cfg.steps}: {parts}, lr={lr:.2e}")
    finally:
        if executor is not None:
            executor.shutdown()

    result.wall_time = time.perf_counter() - started
    logger.info(
        f"Обучение завершено за {result.wall_time:.1f} с, параметров: {model.parameter_count()}"
    )
    if log_path is not None:
        write_log(log_path, result)
    if checkpoint_path is not None:
        save_checkpoint(checkpoint_path, model.state_dict())
    return result


def write_log(path: Union[str, Path], result: TrainResult) -> None:
    try:
        with Path(path).open("w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(result.columns)
            for row in result.log:
                writer.writerow([row["step"]] + [repr(float(row[c])) for c in result.columns[1:]])
    except OSError as e:
        raise DataIOError(f"Не удалось записать журнал обучения {path}: {e}") from e
