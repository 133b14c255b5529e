import pytest

from synthscene.queries import (
    MULTIPLE, QUERY_VOCAB, RELATIONS, TOKEN_INDEX, UNIQUE, UNK_TOKEN, Query, is_wellformed, make_query,
    matching_objects, render_query, token_ids, tokenize, verify_query,
)
from synthscene.scene import CATEGORY_ALBEDO, SceneObject, SceneSpec, generate_scene
from utils.boxes import Aabb
from utils.errors import NoQueryError


def _obj(obj_id, category, x, y, size=0.5):
    box = Aabb.from_center_size([x, y, size / 2], [size, size, size])
    return SceneObject(obj_id, category, box, CATEGORY_ALBEDO[category])


def _query(scene, relation, target, anchors=()):
    return Query(
        tokens=render_query(scene, relation, target, anchors),
        relation=relation,
        anchor_ids=tuple(anchors),
        target_id=target,
        uniqueness=MULTIPLE if scene.category_count(scene.object(target).category) > 1 else UNIQUE,
    )


def test_left_of_single_chair():
    scene = SceneSpec(room=(6.0, 6.0, 3.0), objects=[_obj(0, "chair", 1.0, 3.0), _obj(1, "table", 3.0, 3.0, 1.0)])
    query = _query(scene, "left-of", 0, (1,))
    assert query.text == "the chair left of the table"
    assert verify_query(scene, query)
    assert matching_objects(scene, "chair", "left-of", (1,)) == [0]


def test_nearest_of_two_chairs():
    scene = SceneSpec(room=(6.0, 6.0, 3.0), objects=[
        _obj(0, "chair", 1.0, 1.0), _obj(1, "chair", 4.0, 4.0), _obj(2, "table", 3.5, 3.0, 1.0),
    ])
    query = _query(scene, "nearest-to", 1, (2,))
    assert query.uniqueness == MULTIPLE
    assert verify_query(scene, query)
    assert not verify_query(scene, _query(scene, "nearest-to", 0, (2,)))


def test_ambiguous_directional_query_is_rejected():
    scene = SceneSpec(room=(6.0, 6.0, 3.0), objects=[
        _obj(0, "chair", 1.0, 1.0), _obj(1, "chair", 1.5, 4.5), _obj(2, "table", 4.0, 3.0, 1.0),
    ])
    assert not verify_query(scene, _query(scene, "left-of", 0, (2,)))


def test_margin_rejects_near_ties():
    scene = SceneSpec(room=(6.0, 6.0, 3.0), objects=[_obj(0, "chair", 2.95, 1.0), _obj(1, "table", 3.0, 3.0, 1.0)])
    # центр стула левее стола всего на 5 см
    assert not verify_query(scene, _query(scene, "left-of", 0, (1,)))


def test_between_relation():
    scene = SceneSpec(room=(6.0, 6.0, 3.0), objects=[
        _obj(0, "lamp", 3.0, 3.2), _obj(1, "lamp", 5.0, 0.8),
        _obj(2, "bed", 1.0, 3.0, 1.0), _obj(3, "sofa", 5.0, 3.0, 1.0),
    ])
    query = _query(scene, "between", 0, (2, 3))
    assert query.text == "the lamp between the bed and the sofa"
    assert verify_query(scene, query)


def test_closest_to_wall():
    scene = SceneSpec(room=(6.0, 6.0, 3.0), objects=[_obj(0, "plant", 0.5, 3.0), _obj(1, "plant", 3.0, 3.0)])
    assert verify_query(scene, _query(scene, "closest-to-wall", 0))
    assert not verify_query(scene, _query(scene, "closest-to-wall", 1))


@pytest.mark.parametrize("seed", range(30))
def test_generated_queries_are_sound(seed):
    scene = generate_scene(seed)
    try:
        query = make_query(scene, seed)
    except NoQueryError:
        pytest.skip("для сцены нет однозначного запроса")
    assert verify_query(scene, query)
    assert is_wellformed(scene, query)
    assert query.relation in RELATIONS
    assert all(token in QUERY_VOCAB for token in query.tokens)
    for anchor in query.anchor_ids:
        category = scene.object(anchor).category
        assert scene.category_count(category) == 1
        assert category != scene.object(query.target_id).category


def test_make_query_deterministic():
    scene = generate_scene(17)
    assert make_query(scene, 17) == make_query(scene, 17)


def test_uniqueness_split_is_balanced():
    multiple = total = 0
    for seed in range(200):
        try:
            query = make_query(generate_scene(seed), seed)
        except NoQueryError:
            continue
        total += 1
        multiple += query.uniqueness == MULTIPLE
    assert 0.3 <= multiple / total <= 0.7


@pytest.mark.slow
def test_uniqueness_split_over_many_scenes():
    multiple = total = 0
    for seed in range(1000):
        try:
            query = make_query(generate_scene(seed), seed)
        except NoQueryError:
            continue
        total += 1
        multiple += query.uniqueness == MULTIPLE
    assert 0.4 <= multiple / total <= 0.6


def test_is_wellformed_rejects_bad_references():
    scene = SceneSpec(room=(6.0, 6.0, 3.0), objects=[_obj(0, "chair", 1.0, 3.0), _obj(1, "table", 3.0, 3.0, 1.0)])
    good = _query(scene, "left-of", 0, (1,))
    assert is_wellformed(scene, good)
    assert not is_wellformed(scene, Query(good.tokens, good.relation, (7,), 0, UNIQUE))
    assert not is_wellformed(scene, Query(good.tokens, "above", (1,), 0, UNIQUE))
    assert not is_wellformed(scene, Query(("the", "spaceship"), good.relation, (1,), 0, UNIQUE))


def test_token_ids():
    tokens = tokenize("The chair LEFT of the spaceship")
    assert tokens == ("the", "chair", "left", "of", "the", "spaceship")
    ids = token_ids(tokens)
    assert ids[1] == TOKEN_INDEX["chair"]
    assert ids[-1] == TOKEN_INDEX[UNK_TOKEN]
    assert token_ids(tokens, max_len=3) == ids[:3]
