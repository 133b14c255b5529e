import numpy as np
import pytest

from synthscene.episodes import episode_proposals
from synthscene.proposals import jitter_proposals, proposals_from_scene
from synthscene.scene import generate_scene
from utils.boxes import aabb_iou


def test_gt_proposals_mirror_scene():
    scene = generate_scene(1)
    proposals = proposals_from_scene(scene)
    assert [p.id for p in proposals] == [o.id for o in scene.objects]
    assert all(p.box.same_as(o.box) for p, o in zip(proposals, scene.objects))
    assert [p.gt_category for p in proposals] == [o.category_index for o in scene.objects]


def test_zero_noise_is_identity():
    proposals = proposals_from_scene(generate_scene(2))
    jittered = jitter_proposals(proposals, seed=5, sigma_scale=0.0, sigma_center=0.0)
    assert all(a.box.same_as(b.box) for a, b in zip(proposals, jittered))


def test_jitter_is_seeded():
    proposals = proposals_from_scene(generate_scene(3))
    a = jitter_proposals(proposals, seed=1)
    b = jitter_proposals(proposals, seed=1)
    c = jitter_proposals(proposals, seed=2)
    assert all(x.box.same_as(y.box) for x, y in zip(a, b))
    assert not all(x.box.same_as(y.box) for x, y in zip(a, c))
    assert [p.id for p in a] == [p.id for p in proposals]


def test_jitter_mean_iou_range():
    ious = []
    for seed in range(50):
        scene = generate_scene(seed)
        proposals = proposals_from_scene(scene)
        jittered = jitter_proposals(proposals, seed=seed, sigma_center=0.05, room=scene.room_box)
        ious.extend(aabb_iou(p.box, j.box) for p, j in zip(proposals, jittered))
    assert 0.6 <= np.mean(ious) <= 0.95


def test_jittered_boxes_stay_in_room():
    scene = generate_scene(4)
    room = scene.room_box
    jittered = jitter_proposals(proposals_from_scene(scene), seed=0, sigma_scale=0.5, sigma_center=0.5, room=room)
    for p in jittered:
        assert np.all(p.box.min_corner >= room.min_corner)
        assert np.all(p.box.max_corner <= room.max_corner)


def test_negative_sigma_rejected():
    with pytest.raises(ValueError):
        jitter_proposals([], seed=0, sigma_scale=-0.1)


def test_episode_proposal_modes(episodes, small_data):
    episode = episodes[0]
    assert episode_proposals(episode, "gt", small_data) == episode.proposals
    first = episode_proposals(episode, "jitter", small_data)
    second = episode_proposals(episode, "jitter", small_data)
    assert all(a.box.same_as(b.box) for a, b in zip(first, second))
    with pytest.raises(ValueError):
        episode_proposals(episode, "detector", small_data)
