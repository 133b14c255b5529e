import numpy as np
import pytest

from diffkit import Tensor, finite_diff_check, ops, parameter
from grounder.se_attention import (
    AttentionParams, AttentionStats, SEBlock, attend, flops_estimate, inter_view_attention,
    intra_view_attention, joint_attention, se_block,
)
from utils.errors import ConfigError

DIM, HEADS = 8, 2


def _features(rng, v=3, n=5):
    return Tensor(rng.normal(size=(1, v, n, DIM)))


def test_heads_must_divide_dim():
    with pytest.raises(ConfigError):
        AttentionParams(10, 4, np.random.default_rng(0))


def test_single_view_inter_attention_reduces_to_value_projection():
    rng = np.random.default_rng(0)
    params = AttentionParams(DIM, HEADS, rng)
    f = _features(rng, v=1)
    out = inter_view_attention(f, None, params).data
    expected = f.data + params.out(params.value(params.norm(f))).data
    assert np.allclose(out, expected, atol=1e-12)


def test_single_patch_intra_attention_reduces_to_value_projection():
    rng = np.random.default_rng(1)
    params = AttentionParams(DIM, HEADS, rng)
    f = _features(rng, n=1)
    out = intra_view_attention(f, None, params).data
    expected = f.data + params.out(params.value(params.norm(f))).data
    assert np.allclose(out, expected, atol=1e-12)


def test_inter_view_attention_is_view_permutation_equivariant():
    rng = np.random.default_rng(2)
    params = AttentionParams(DIM, HEADS, rng)
    f = _features(rng, v=4)
    order = [3, 1, 0, 2]
    direct = ops.gather(inter_view_attention(f, None, params), order, axis=1).data
    permuted = inter_view_attention(ops.gather(f, order, axis=1), None, params).data
    assert np.allclose(direct, permuted, atol=1e-12)


def test_intra_view_attention_is_patch_permutation_equivariant():
    rng = np.random.default_rng(3)
    params = AttentionParams(DIM, HEADS, rng)
    f = _features(rng, n=6)
    order = [5, 2, 0, 4, 1, 3]
    direct = ops.gather(intra_view_attention(f, None, params), order, axis=2).data
    permuted = intra_view_attention(ops.gather(f, order, axis=2), None, params).data
    assert np.allclose(direct, permuted, atol=1e-12)


def test_attention_weights_are_distributions_over_valid_slots():
    rng = np.random.default_rng(4)
    params = AttentionParams(DIM, HEADS, rng)
    f = _features(rng)
    valid = np.ones((1, 3, 5), dtype=bool)
    valid[0, 1, [0, 3]] = False
    _, weights = attend(f, valid, params, return_weights=True)
    assert np.allclose(weights.data.sum(axis=-1), 1.0)
    assert not weights.data[0, 1][..., [0, 3]].any()


def test_fully_invalid_group_passes_input_through():
    rng = np.random.default_rng(5)
    params = AttentionParams(DIM, HEADS, rng)
    f = _features(rng)
    valid = np.ones((1, 3, 5), dtype=bool)
    valid[0, 2] = False
    out = attend(f, valid, params).data
    assert np.allclose(out[0, 2], f.data[0, 2])


def test_zeroed_block_is_identity():
    rng = np.random.default_rng(6)
    block = SEBlock(DIM, HEADS, rng).zero_()
    f = _features(rng)
    assert np.allclose(se_block(f, np.ones((1, 3, 5), dtype=bool), block).data, f.data)


def test_block_output_zero_on_invalid_patches():
    rng = np.random.default_rng(7)
    block = SEBlock(DIM, HEADS, rng)
    valid = np.ones((1, 3, 5), dtype=bool)
    valid[0, 0, 2] = False
    out = se_block(_features(rng), valid, block).data
    assert not out[0, 0, 2].any()


def test_block_gradients():
    rng = np.random.default_rng(8)
    block = SEBlock(DIM, HEADS, rng)
    x = parameter(rng.normal(size=(1, 3, 4, DIM)))
    valid = np.ones((1, 3, 4), dtype=bool)
    weights = rng.normal(size=(1, 3, 4, DIM))
    loss = lambda t: ops.sum(ops.mul(se_block(t, valid, block), weights))
    assert finite_diff_check(loss, x) < 1e-4
    fixed = Tensor(x.data)
    for p in (block.intra.key.weight, block.inter.query.weight, block.ffn.fc1.weight):
        error = finite_diff_check(lambda _: ops.sum(ops.mul(se_block(fixed, valid, block), weights)), p)
        assert error < 1e-4


def test_flops_analytic_values():
    assert flops_estimate(8, 64, 1, "divided") == 2 * 36_864
    assert flops_estimate(8, 64, 1, "joint") == 2 * 262_144
    ratio = flops_estimate(8, 64, 64, "divided") / flops_estimate(8, 64, 64, "joint")
    assert ratio == pytest.approx(9 / 64)


@pytest.mark.parametrize("patches", [1, 4, 16, 256])
def test_single_view_costs_match(patches):
    assert flops_estimate(1, patches, 64, "divided") == flops_estimate(1, patches, 64, "joint")


@pytest.mark.parametrize("views,patches", [(2, 3), (3, 2), (4, 16), (8, 256)])
def test_divided_cheaper_than_joint(views, patches):
    assert flops_estimate(views, patches, 64, "divided") < flops_estimate(views, patches, 64, "joint")


def test_two_by_two_costs_are_equal():
    assert flops_estimate(2, 2, 64, "divided") == flops_estimate(2, 2, 64, "joint")


def test_flops_rejects_bad_input():
    with pytest.raises(ValueError):
        flops_estimate(0, 4, 8)
    with pytest.raises(ValueError):
        flops_estimate(2, 4, 8, "sparse")


def test_counted_score_entries_match_estimate():
    rng = np.random.default_rng(9)
    f = Tensor(rng.normal(size=(1, 8, 64, DIM)))
    block = SEBlock(DIM, HEADS, rng)
    stats = AttentionStats()
    se_block(f, None, block, stats)
    assert stats.score_entries == 36_864
    assert 2 * DIM * stats.score_entries == flops_estimate(8, 64, DIM, "divided")

    joint = AttentionStats()
    joint_attention(f, None, block.intra, joint)
    assert joint.score_entries == 262_144
