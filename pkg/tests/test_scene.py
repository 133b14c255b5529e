import numpy as np
import pytest

from synthscene.render import camera_ring, hit_points, render_view, render_views, trace_rays
from synthscene.scene import (
    CATEGORIES, CATEGORY_ALBEDO, OBJECT_GAP, ROOM_ALBEDO, SceneObject, SceneSpec, generate_scene,
)
from utils.boxes import Aabb, intersection_volume
from utils.camera import Extrinsics, Intrinsics, backproject_depth_map
from utils.errors import SceneGenerationError


def test_same_seed_same_scene():
    a, b = generate_scene(42), generate_scene(42)
    assert [o.category for o in a.objects] == [o.category for o in b.objects]
    assert all(x.box.same_as(y.box) for x, y in zip(a.objects, b.objects))
    c = generate_scene(43)
    assert not all(x.box.same_as(y.box) for x, y in zip(a.objects, c.objects))


@pytest.mark.parametrize("seed", range(20))
def test_objects_disjoint_and_inside_room(seed):
    scene = generate_scene(seed)
    room = scene.room_box
    assert len(scene.objects) == 8
    for obj in scene.objects:
        assert obj.category in CATEGORIES
        assert np.all(obj.box.min_corner >= room.min_corner)
        assert np.all(obj.box.max_corner <= room.max_corner)
        assert obj.box.min_corner[2] == pytest.approx(0.0)
    for i, a in enumerate(scene.objects):
        for b in scene.objects[i + 1:]:
            assert intersection_volume(a.box, b.box) == 0.0
            gap = np.maximum(a.box.min_corner - b.box.max_corner, b.box.min_corner - a.box.max_corner)[:2]
            assert gap.max() >= OBJECT_GAP - 1e-9


def test_too_few_objects():
    with pytest.raises(SceneGenerationError):
        generate_scene(0, num_objects=1)


def test_scene_lookup():
    scene = generate_scene(3, num_objects=4)
    assert scene.object(2).id == 2
    with pytest.raises(KeyError):
        scene.object(99)


def _slab_scene():
    table = SceneObject(0, "table", Aabb([0.2, 0.2, 0.0], [5.8, 5.8, 1.0]), CATEGORY_ALBEDO["table"])
    return SceneSpec(room=(6.0, 6.0, 3.0), objects=[table])


def test_camera_facing_box_sees_flat_surface():
    scene = _slab_scene()
    intrinsics = Intrinsics.from_fov(16, 16, 60.0)
    extrinsics = Extrinsics.look_at([3.0, 3.0, 2.5], [3.0, 3.0, 0.0], up=(0.0, 1.0, 0.0))
    frame = render_view(scene, intrinsics, extrinsics)
    assert np.allclose(frame.depth, 1.5)
    assert np.allclose(frame.color, np.array(CATEGORY_ALBEDO["table"]) / 255.0)


def test_empty_room_hits_walls():
    scene = SceneSpec(room=(6.0, 6.0, 3.0))
    for intrinsics, extrinsics in camera_ring(scene, 4, image_size=16, seed=1):
        frame = render_view(scene, intrinsics, extrinsics)
        points, valid = backproject_depth_map(frame)
        assert valid.all()
        assert np.allclose(frame.color, np.array(ROOM_ALBEDO) / 255.0)
        room = np.array(scene.room)
        on_wall = np.isclose(points, 0.0, atol=1e-9) | np.isclose(points, room, atol=1e-9)
        assert on_wall.any(axis=-1).all()
        assert np.all(points >= -1e-9) and np.all(points <= room + 1e-9)


def test_backprojected_depth_matches_ray_hits():
    scene = generate_scene(5)
    rng = np.random.default_rng(0)
    for frame in render_views(scene, camera_ring(scene, 3, image_size=24, seed=5)):
        points, _ = backproject_depth_map(frame)
        hits = hit_points(scene, frame.intrinsics, frame.extrinsics)
        for _ in range(50):
            u, v = rng.integers(0, 24, size=2)
            assert np.allclose(points[v, u], hits[v, u], atol=1e-6)


def test_trace_rays_reports_object_ids():
    scene = _slab_scene()
    t, ids = trace_rays(scene, np.array([3.0, 3.0, 2.5]), np.array([[0.0, 0.0, -1.0], [0.0, 0.0, 1.0]]))
    assert ids.tolist() == [0, -1]
    assert t.tolist() == pytest.approx([1.5, 0.5])


def test_camera_ring_stays_in_room_above_objects():
    scene = generate_scene(9)
    cameras = camera_ring(scene, 6, image_size=16, seed=9)
    assert len(cameras) == 6
    top = max(obj.box.max_corner[2] for obj in scene.objects)
    for _, extrinsics in cameras:
        eye = extrinsics.translation
        assert scene.room_box.contains(eye)
        assert eye[2] > top
