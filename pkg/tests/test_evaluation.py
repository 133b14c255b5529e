import csv
import math
from dataclasses import replace

import numpy as np
import pytest

from grounder.evaluation import (
    ERROR_TYPES, ModelPredictor, classify_error, describe_prediction, evaluate, write_report,
)
from grounder.model import ModelConfig, ToyGrounder
from grounder.stubs import OracleStub, RandomStub, make_stub
from harness.gradcheck import micro_config
from synthscene.episodes import GroundingEpisode
from synthscene.proposals import proposals_from_scene
from synthscene.queries import MULTIPLE, Query, render_query
from synthscene.scene import CATEGORIES, CATEGORY_ALBEDO, SceneObject, SceneSpec
from utils.boxes import Aabb, ObjectProposal


def _obj(obj_id, category, x, y, size=0.5):
    box = Aabb.from_center_size([x, y, size / 2], [size, size, size])
    return SceneObject(obj_id, category, box, CATEGORY_ALBEDO[category])


@pytest.fixture
def two_chairs():
    scene = SceneSpec(room=(6.0, 6.0, 3.0), objects=[
        _obj(0, "chair", 1.0, 1.0), _obj(1, "chair", 4.0, 4.0), _obj(2, "table", 3.5, 3.0, 1.0),
    ])
    query = Query(render_query(scene, "nearest-to", 1, (2,)), "nearest-to", (2,), 1, MULTIPLE)
    return GroundingEpisode(
        episode_id=0, seed=0, scene=scene, frames=[], query=query,
        proposals=proposals_from_scene(scene), target_id=1,
    )


def test_oracle_scores_perfectly(episodes):
    report = evaluate(episodes, OracleStub())
    assert report.accuracy(0.25) == 1.0
    assert report.accuracy(0.5) == 1.0
    assert report.category_accuracy() == 1.0
    assert report.error_counts()["correct"] == len(episodes)
    counts = {row[1]: row[3] for row in report.rows() if row[2] == "count"}
    assert counts["Unique"] + counts["Multiple"] == counts["Overall"] == len(episodes)


def test_random_stub_matches_chance(episodes):
    repeated = [ep for ep in episodes for _ in range(50)]
    report = evaluate(repeated, RandomStub(seed=3))
    chance = np.array([1.0 / len(ep.proposals) for ep in repeated])
    sigma = math.sqrt(np.sum(chance * (1 - chance))) / len(repeated)
    assert abs(report.accuracy(0.25) - chance.mean()) < 3 * sigma


def test_gt_proposals_make_thresholds_agree(episodes, micro_run):
    model = ToyGrounder.for_inference(ModelConfig.from_run(micro_run))
    report = evaluate(episodes, ModelPredictor(model))
    # непересекающиеся GT-боксы дают IoU либо 1, либо 0
    assert report.accuracy(0.25) == report.accuracy(0.5)
    assert model.recon_calls == 0
    assert report.mean_latency > 0


def test_jittered_proposals_are_scored_against_gt(episodes, small_data):
    report = evaluate(episodes, OracleStub(), proposals="jitter", data=small_data)
    assert report.accuracy(0.5) <= report.accuracy(0.25) <= 1.0
    assert all(0.0 < r.iou <= 1.0 for r in report.results)


def test_threshold_validation(episodes):
    with pytest.raises(ValueError):
        evaluate(episodes[:1], OracleStub(), iou_thresholds=(0.0,))
    with pytest.raises(ValueError):
        evaluate(episodes[:1], OracleStub(), iou_thresholds=(0.5, 1.5))


def test_error_types(two_chairs):
    proposals = two_chairs.proposals
    assert classify_error(two_chairs, 1, proposals) == "correct"
    assert classify_error(two_chairs, 0, proposals) == "spatial"
    assert classify_error(two_chairs, 2, proposals) == "semantic"

    far = Aabb([5.0, 0.2, 0.0], [5.5, 0.7, 0.5])
    moved = [p if p.id != 1 else ObjectProposal(1, far, p.gt_category) for p in proposals]
    assert classify_error(two_chairs, 1, moved) == "detection"

    broken = replace(two_chairs, query=replace(two_chairs.query, anchor_ids=(99,)))
    assert classify_error(broken, 1, proposals) == "other"
    assert set(ERROR_TYPES) == {"correct", "spatial", "semantic", "detection", "other"}


def test_report_rows_and_csv(tmp_path, episodes):
    report = evaluate(episodes, OracleStub(), iou_thresholds=(0.25,))
    metrics = {row[2] for row in report.rows("test")}
    assert {"count", "acc@0.25", "category_acc", "error:spatial"} <= metrics
    assert "acc@0.5" not in metrics

    path = tmp_path / "report.csv"
    write_report(path, report, split="test")
    with path.open(encoding="utf-8") as handle:
        rows = list(csv.reader(handle))
    assert rows[0] == ["split", "subset", "metric", "value"]
    assert ["test", "Overall", "acc@0.25", "1.0"] in rows


def test_empty_report():
    report = evaluate([], OracleStub())
    assert report.accuracy(0.25) == 0.0
    assert report.mean_latency == 0.0


def test_describe_prediction(micro):
    model = ToyGrounder.for_inference(ModelConfig.from_run(micro_config()))
    described = describe_prediction(model, micro, micro.proposals)
    assert described["predicted_id"] in [p.id for p in micro.proposals]
    assert described["category"] in CATEGORIES
    assert described["answer"] == f"The {described['category']} is located at <ground> in the global coordinates"
    assert len(described["similarities"]) == len(micro.proposals)
    assert described["query"] == micro.query.text


def test_make_stub():
    assert isinstance(make_stub("oracle"), OracleStub)
    assert isinstance(make_stub("random", seed=1), RandomStub)
    with pytest.raises(ValueError):
        make_stub("perfect")
