"""
Оценка: Acc@IoU по подмножествам Unique / Multiple / Overall, точность
категории, типы ошибок и средняя задержка вывода.
"""
import csv
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from diffkit import load_checkpoint
from synthscene.episodes import DataConfig, GroundingEpisode, episode_proposals
from synthscene.queries import MULTIPLE, UNIQUE, is_wellformed
from synthscene.scene import CATEGORIES
from utils.boxes import ObjectProposal, aabb_iou
from utils.errors import DataIOError
from .config import RunConfig
from .grounding import render_answer
from .model import Ablation, ModelConfig, ToyGrounder

logger = logging.getLogger(__name__)

DEFAULT_THRESHOLDS = (0.25, 0.5)
ERROR_TYPES = ("correct", "spatial", "semantic", "detection", "other")
SUBSETS = (UNIQUE, MULTIPLE, "Overall")
REPORT_COLUMNS = ("split", "subset", "metric", "value")


@dataclass(frozen=True)
class Prediction:
    predicted_id: int
    predicted_category: Optional[int] = None


class ModelPredictor:
    """Предсказатель на основе модели в режиме infer; следит, что ветвь реконструкции не вызывалась."""

    def __init__(self, model: ToyGrounder):
        self.model = model

    def predict(self, episode: GroundingEpisode, proposals: Sequence[ObjectProposal]) -> Prediction:
        calls = self.model.recon_calls
        output = self.model.forward(self.model.prepare(episode, proposals), mode="infer").grounding
        if self.model.recon_calls != calls:
            raise RuntimeError("Ветвь реконструкции вызвана в режиме infer")
        return Prediction(predicted_id=output.predicted_id, predicted_category=output.predicted_category)


@dataclass
class EpisodeResult:
    episode_id: int
    subset: str
    predicted_id: int
    iou: float
    category_correct: bool
    error_type: str
    latency: float


@dataclass
class EvalReport:
    thresholds: Tuple[float, ...]
    results: List[EpisodeResult] = field(default_factory=list)

    def subset(self, name: str) -> List[EpisodeResult]:
        if name == "Overall":
            return self.results
        return [r for r in self.results if r.subset == name]

    def accuracy(self, threshold: float, subset: str = "Overall") -> float:
        rows = self.subset(subset)
        if not rows:
            return 0.0
        return float(np.mean([r.iou >= threshold for r in rows]))

    def category_accuracy(self, subset: str = "Overall") -> float:
        rows = self.subset(subset)
        if not rows:
            return 0.0
        return float(np.mean([r.category_correct for r in rows]))

    def error_counts(self) -> Dict[str, int]:
        counts = {name: 0 for name in ERROR_TYPES}
        for r in self.results:
            counts[r.error_type] += 1
        return counts

    @property
    def mean_latency(self) -> float:
        return float(np.mean([r.latency for r in self.results])) if self.results else 0.0

    def rows(self, split: str = "eval") -> List[Tuple[str, str, str, float]]:
        rows = []
        for subset in SUBSETS:
            rows.append((split, subset, "count", float(len(self.subset(subset)))))
            for t in self.thresholds:
                rows.append((split, subset, f"acc@{t:g}", self.accuracy(t, subset)))
            rows.append((split, subset, "category_acc", self.category_accuracy(subset)))
        for name, count in self.error_counts().items():
            rows.append((split, "Overall", f"error:{name}", float(count)))
        return rows


def classify_error(
    episode: GroundingEpisode,
    predicted_id: int,
    proposals: Sequence[ObjectProposal],
    threshold: float = 0.25,
) -> str:
    """
    correct - IoU >= threshold; detection - верный id, но бокс слишком
    неточен; semantic - категория выбранного объекта не совпадает с
    категорией цели; spatial - верная категория, другой экземпляр;
    other - запрос некорректен.
    """
    if not is_wellformed(episode.scene, episode.query):
        return "other"
    box = {p.id: p.box for p in proposals}[predicted_id]
    if aabb_iou(box, episode.scene.object(episode.target_id).box) >= threshold:
        return "correct"
    if predicted_id == episode.target_id:
        return "detection"
    if episode.scene.object(predicted_id).category != episode.scene.object(episode.target_id).category:
        return "semantic"
    return "spatial"


def evaluate(
    episodes: Sequence[GroundingEpisode],
    predictor,
    iou_thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
    proposals: str = "gt",
    data: DataConfig = DataConfig(),
) -> EvalReport:
    for t in iou_thresholds:
        if not 0 < t <= 1:
            raise ValueError(f"Порог IoU {t} вне (0, 1]")
    report = EvalReport(thresholds=tuple(iou_thresholds))
    for episode in episodes:
        candidates = episode_proposals(episode, proposals, data)
        started = time.perf_counter()
        prediction = predictor.predict(episode, candidates)
        latency = time.perf_counter() - started

        box = {p.id: p.box for p in candidates}[prediction.predicted_id]
        iou = aabb_iou(box, episode.scene.object(episode.target_id).box)
        report.results.append(EpisodeResult(
            episode_id=episode.episode_id,
            subset=episode.uniqueness,
            predicted_id=prediction.predicted_id,
            iou=iou,
            category_correct=prediction.predicted_category == episode.target_category,
            error_type=classify_error(episode, prediction.predicted_id, candidates, min(iou_thresholds)),
            latency=latency,
        ))
        logger.debug(
            f"Эпизод {episode.episode_id}: предсказан {prediction.predicted_id}, IoU={iou:.3f}"
        )

    if report.results:
        accs = ", ".join(f"Acc@{t:g}={report.accuracy(t):.3f}" for t in report.thresholds)
        logger.info(
            f"Оценено эпизодов: {len(report.results)} ({proposals}): {accs}, "
            f"задержка {report.mean_latency * 1000:.2f} мс/эпизод"
        )
    return report


def load_model(checkpoint: Union[str, Path], run: RunConfig, ablation: Ablation = Ablation()) -> ToyGrounder:
    """Модель для вывода без ветви реконструкции; ключи recon.* чекпойнта игнорируются."""
    model = ToyGrounder.for_inference(ModelConfig.from_run(run, ablation))
    model.load_state_dict(load_checkpoint(checkpoint))
    return model


def describe_prediction(model: ToyGrounder, episode: GroundingEpisode, proposals: Sequence[ObjectProposal]) -> Dict:
    """Предсказание одного эпизода для вывода пользователю (API, CLI)."""
    output = model.forward(model.prepare(episode, proposals), mode="infer").grounding
    box = {p.id: p.box for p in proposals}[output.predicted_id]
    category = CATEGORIES[output.predicted_category]
    return {
        "episode_id": episode.episode_id,
        "query": episode.query.text,
        "predicted_id": output.predicted_id,
        "target_id": episode.target_id,
        "box": {"min": box.min_corner.tolist(), "max": box.max_corner.tolist()},
        "iou": aabb_iou(box, episode.scene.object(episode.target_id).box),
        "category": category,
        "answer": render_answer(category),
        "similarities": output.similarities.data.tolist(),
    }


def write_report(path: Union[str, Path], report: EvalReport, split: str = "eval") -> None:
    try:
        with Path(path).open("w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(REPORT_COLUMNS)
            for row in report.rows(split):
                writer.writerow(row[:3] + (repr(row[3]),))
    except OSError as e:
        raise DataIOError(f"Не удалось записать отчет {path}: {e}") from e
