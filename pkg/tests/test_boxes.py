import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from utils.boxes import Aabb, aabb_iou, coverage_grid, patch_box_coverage
from utils.camera import split_patches

UNIT = Aabb([0.0, 0.0, 0.0], [1.0, 1.0, 1.0])

boxes = st.builds(
    lambda c, s: Aabb.from_center_size(c, s),
    st.tuples(*[st.floats(-3, 3)] * 3),
    st.tuples(*[st.floats(0.05, 3)] * 3),
)


def test_iou_examples():
    assert aabb_iou(UNIT, UNIT) == 1.0
    shifted = Aabb([0.5, 0.0, 0.0], [1.5, 1.0, 1.0])
    assert aabb_iou(UNIT, shifted) == pytest.approx(1.0 / 3.0)
    far = Aabb([2.0, 2.0, 2.0], [3.0, 3.0, 3.0])
    assert aabb_iou(UNIT, far) == 0.0


def test_iou_monte_carlo():
    a = Aabb([0.0, 0.0, 0.0], [1.0, 2.0, 1.0])
    b = Aabb([0.4, 0.5, -0.5], [1.6, 1.5, 0.8])
    rng = np.random.default_rng(0)
    lo, hi = np.minimum(a.min_corner, b.min_corner), np.maximum(a.max_corner, b.max_corner)
    points = rng.uniform(lo, hi, size=(1_000_000, 3))
    in_a, in_b = a.contains(points), b.contains(points)
    estimate = (in_a & in_b).sum() / (in_a | in_b).sum()
    assert abs(estimate - aabb_iou(a, b)) < 0.02


@settings(max_examples=100, deadline=None)
@given(boxes, boxes)
def test_iou_symmetric_and_bounded(a, b):
    iou = aabb_iou(a, b)
    assert iou == pytest.approx(aabb_iou(b, a))
    assert 0.0 <= iou <= 1.0


def test_invalid_box():
    with pytest.raises(ValueError):
        Aabb([1.0, 0.0, 0.0], [0.0, 1.0, 1.0])


def test_coverage_examples():
    inside = np.array([[0.5, 0.5, 0.5], [0.1, 0.2, 0.3]])
    full = patch_box_coverage(inside, UNIT)
    assert full.fraction == 1.0 and full.eligible

    half = patch_box_coverage(np.array([[0.5, 0.5, 0.5], [2.0, 2.0, 2.0]]), UNIT)
    assert half.fraction == 0.5
    assert not half.eligible

    empty = patch_box_coverage(inside, UNIT, valid=np.array([False, False]))
    assert empty.empty and not empty.eligible


def test_coverage_brute_force():
    rng = np.random.default_rng(3)
    for _ in range(50):
        points = rng.uniform(-0.5, 1.5, size=(9, 3))
        valid = rng.random(9) > 0.2
        coverage = patch_box_coverage(points, UNIT, valid)
        inside = [
            all(0.0 <= c <= 1.0 for c in p) for p, ok in zip(points, valid) if ok
        ]
        expected = sum(inside) / len(inside) if inside else 0.0
        assert coverage.fraction == pytest.approx(expected)


def test_coverage_grid_matches_per_patch():
    rng = np.random.default_rng(4)
    points = rng.uniform(-0.5, 1.5, size=(6, 8, 3))
    valid = rng.random((6, 8)) > 0.3
    fractions, counts = coverage_grid(points, valid, 2, UNIT)
    pts, mask = split_patches(points, 2), split_patches(valid, 2)
    for r in range(3):
        for c in range(4):
            coverage = patch_box_coverage(pts[r, c], UNIT, mask[r, c])
            assert fractions[r, c] == pytest.approx(coverage.fraction)
            assert counts[r, c] == coverage.valid_points
