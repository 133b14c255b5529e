"""Заглушки предсказателя для самопроверки оценщика без обученной модели."""
from typing import Sequence

import numpy as np

from synthscene.episodes import GroundingEpisode
from utils.boxes import ObjectProposal
from .evaluation import Prediction

STUBS = ("oracle", "random")


class OracleStub:
    """Всегда выбирает целевой объект и его категорию."""

    name = "oracle"

    def predict(self, episode: GroundingEpisode, proposals: Sequence[ObjectProposal]) -> Prediction:
        return Prediction(predicted_id=episode.target_id, predicted_category=episode.target_category)


class RandomStub:
    """Равновероятный выбор предложения и категории выбранного объекта."""

    name = "random"

    def __init__(self, seed: int = 0):
        self.rng = np.random.default_rng(seed)

    def predict(self, episode: GroundingEpisode, proposals: Sequence[ObjectProposal]) -> Prediction:
        choice = proposals[int(self.rng.integers(len(proposals)))]
        return Prediction(
            predicted_id=choice.id,
            predicted_category=episode.scene.object(choice.id).category_index,
        )


def make_stub(name: str, seed: int = 0):
    if name == "oracle":
        return OracleStub()
    if name == "random":
        return RandomStub(seed)
    raise ValueError(f"Неизвестная заглушка {name!r}, ожидалось одно из {STUBS}")
