"""
Шаблонные запросы с пространственными отношениями и геометрическая проверка
их однозначности.

Отношения определены в мировой системе координат, а не относительно
наблюдателя: "левее" - меньше x, "перед" - меньше y. Расстояния считаются
по центрам боксов в плоскости пола.
"""
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from utils.errors import NoQueryError
from .scene import CATEGORIES, SceneObject, SceneSpec

logger = logging.getLogger(__name__)

RELATIONS: Tuple[str, ...] = (
    "left-of", "right-of", "in-front-of", "behind",
    "nearest-to", "farthest-from", "between", "closest-to-wall",
)
DIRECTIONAL = ("left-of", "right-of", "in-front-of", "behind")
COMPARATIVE = ("nearest-to", "farthest-from", "closest-to-wall")

TEMPLATES: Dict[str, str] = {
    "left-of": "the {target} left of the {anchor}",
    "right-of": "the {target} right of the {anchor}",
    "in-front-of": "the {target} in front of the {anchor}",
    "behind": "the {target} behind the {anchor}",
    "nearest-to": "the {target} nearest to the {anchor}",
    "farthest-from": "the {target} farthest from the {anchor}",
    "between": "the {target} between the {anchor} and the {second}",
    "closest-to-wall": "the {target} closest to the wall",
}

# Запас в метрах: цель должна удовлетворять отношению с запасом, а
# дистракторы не должны удовлетворять ему даже с ослаблением на тот же запас
RELATION_MARGIN = 0.1
BETWEEN_RADIUS = 1.0

FUNCTION_WORDS: Tuple[str, ...] = (
    "the", "left", "right", "of", "in", "front", "behind", "nearest", "to",
    "farthest", "from", "between", "and", "closest", "wall",
)
PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
QUERY_VOCAB: Tuple[str, ...] = (PAD_TOKEN, UNK_TOKEN) + FUNCTION_WORDS + CATEGORIES
TOKEN_INDEX: Dict[str, int] = {token: i for i, token in enumerate(QUERY_VOCAB)}

UNIQUE = "Unique"
MULTIPLE = "Multiple"


@dataclass(frozen=True)
class Query:
    tokens: Tuple[str, ...]
    relation: str
    anchor_ids: Tuple[int, ...]
    target_id: int
    uniqueness: str

    @property
    def text(self) -> str:
        return " ".join(self.tokens)


def tokenize(text: str) -> Tuple[str, ...]:
    return tuple(text.lower().split())


def token_ids(tokens: Sequence[str], max_len: Optional[int] = None) -> List[int]:
    """Индексы токенов в закрытом словаре; неизвестные слова -> <unk>."""
    ids = [TOKEN_INDEX.get(token, TOKEN_INDEX[UNK_TOKEN]) for token in tokens]
    if max_len is not None:
        ids = ids[:max_len]
    return ids


def _xy(obj: SceneObject) -> np.ndarray:
    return obj.box.center[:2]


def _wall_distance(scene: SceneSpec, obj: SceneObject) -> float:
    c = _xy(obj)
    room = np.asarray(scene.room[:2])
    return float(min(c[0], c[1], room[0] - c[0], room[1] - c[1]))


def _comparative_score(scene: SceneSpec, relation: str, obj: SceneObject, anchors: Sequence[SceneObject]) -> float:
    """Меньше - лучше."""
    if relation == "closest-to-wall":
        return _wall_distance(scene, obj)
    dist = float(np.linalg.norm(_xy(obj) - _xy(anchors[0])))
    return dist if relation == "nearest-to" else -dist


def _holds_pairwise(relation: str, obj: SceneObject, anchors: Sequence[SceneObject], margin: float) -> bool:
    c = _xy(obj)
    a = _xy(anchors[0])
    if relation == "left-of":
        return bool(c[0] < a[0] - margin)
    if relation == "right-of":
        return bool(c[0] > a[0] + margin)
    if relation == "in-front-of":
        return bool(c[1] < a[1] - margin)
    if relation == "behind":
        return bool(c[1] > a[1] + margin)
    if relation == "between":
        b = _xy(anchors[1])
        seg = b - a
        length = float(np.linalg.norm(seg))
        if length == 0:
            return False
        t = float(np.dot(c - a, seg)) / length ** 2
        perp = float(np.linalg.norm(c - (a + t * seg)))
        edge = margin / length
        return edge < t < 1.0 - edge and perp < BETWEEN_RADIUS - margin
    raise ValueError(f"Неизвестное отношение: {relation}")


def matching_objects(
    scene: SceneSpec,
    category: str,
    relation: str,
    anchor_ids: Sequence[int],
    margin: float = RELATION_MARGIN,
) -> List[int]:
    """
    id объектов категории category, для которых отношение выполняется.

    Положительный margin - строгая проверка, отрицательный - ослабленная.
    Для сравнительных отношений объект подходит, если его оценка не хуже
    оценок остальных объектов той же категории с учетом запаса.
    """
    if relation not in RELATIONS:
        raise ValueError(f"Неизвестное отношение: {relation}")
    anchors = [scene.object(i) for i in anchor_ids]
    group = [obj for obj in scene.objects if obj.category == category and obj.id not in anchor_ids]
    if relation in COMPARATIVE:
        scores = {obj.id: _comparative_score(scene, relation, obj, anchors) for obj in group}
        result = []
        for obj in group:
            others = [s for oid, s in scores.items() if oid != obj.id]
            if not others or scores[obj.id] + margin <= min(others):
                result.append(obj.id)
        return result
    return [obj.id for obj in group if _holds_pairwise(relation, obj, anchors, margin)]


def verify_query(scene: SceneSpec, query: Query) -> bool:
    """Отношение однозначно выделяет цель среди объектов той же категории."""
    try:
        category = scene.object(query.target_id).category
    except KeyError:
        return False
    strict = matching_objects(scene, category, query.relation, query.anchor_ids, RELATION_MARGIN)
    loose = matching_objects(scene, category, query.relation, query.anchor_ids, -RELATION_MARGIN)
    return strict == [query.target_id] and loose == [query.target_id]


def is_wellformed(scene: SceneSpec, query: Query) -> bool:
    """Запрос ссылается на существующие объекты и состоит из слов словаря."""
    if query.relation not in RELATIONS or query.uniqueness not in (UNIQUE, MULTIPLE):
        return False
    ids = {obj.id for obj in scene.objects}
    if query.target_id not in ids or any(a not in ids for a in query.anchor_ids):
        return False
    expected = 2 if query.relation == "between" else 0 if query.relation == "closest-to-wall" else 1
    if len(query.anchor_ids) != expected:
        return False
    return all(token in TOKEN_INDEX for token in query.tokens)


def render_query(scene: SceneSpec, relation: str, target_id: int, anchor_ids: Sequence[int]) -> Tuple[str, ...]:
    names = {"target": scene.object(target_id).category}
    if anchor_ids:
        names["anchor"] = scene.object(anchor_ids[0]).category
    if len(anchor_ids) > 1:
        names["second"] = scene.object(anchor_ids[1]).category
    return tokenize(TEMPLATES[relation].format(**names))


def _anchor_sets(scene: SceneSpec, relation: str, target: SceneObject, rng: np.random.Generator) -> List[Tuple[int, ...]]:
    # якорь - объект с уникальной в сцене категорией, отличной от категории цели
    anchors = [
        obj.id for obj in scene.objects
        if obj.category != target.category and scene.category_count(obj.category) == 1
    ]
    anchors = [anchors[i] for i in rng.permutation(len(anchors))]
    if relation == "closest-to-wall":
        return [()]
    if relation == "between":
        return [(a, b) for i, a in enumerate(anchors) for b in anchors[i + 1:]]
    return [(a,) for a in anchors]


def make_query(scene: SceneSpec, seed: int) -> Query:
    """
    Однозначный шаблонный запрос для сцены.

    Сначала пробуются цели из повторяющихся категорий (подмножество
    Multiple), затем остальные. Если ни одно отношение не выделяет цель
    однозначно, выбрасывается NoQueryError.
    """
    rng = np.random.default_rng(seed)
    objects = [scene.objects[i] for i in rng.permutation(len(scene.objects))]
    repeated = [obj for obj in objects if scene.category_count(obj.category) > 1]
    singles = [obj for obj in objects if scene.category_count(obj.category) == 1]

    for target in repeated + singles:
        relations = [RELATIONS[i] for i in rng.permutation(len(RELATIONS))]
        for relation in relations:
            for anchor_ids in _anchor_sets(scene, relation, target, rng):
                query = Query(
                    tokens=render_query(scene, relation, target.id, anchor_ids),
                    relation=relation,
                    anchor_ids=tuple(anchor_ids),
                    target_id=target.id,
                    uniqueness=MULTIPLE if scene.category_count(target.category) > 1 else UNIQUE,
                )
                if verify_query(scene, query):
                    return query
    raise NoQueryError(f"Сцена seed={scene.seed}: нет однозначного запроса")
