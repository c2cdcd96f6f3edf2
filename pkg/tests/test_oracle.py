import numpy as np
import pytest

from shadowloop.geometry import partial_attached_map
from shadowloop.oracle import (
    SceneSpec,
    Sphere,
    occlusion_suite,
    raycast_blocked,
    render_scene,
    scene_suite,
)
from shadowloop.raster import DataError

from conftest import single_sphere


@pytest.fixture(scope="module")
def suite20():
    return [(s, render_scene(s)) for s in scene_suite(20, 7)]


class TestRaycast:
    def test_behind_sphere(self):
        spheres = [Sphere((0.0, 0.0, 0.0), 1.0)]
        # light travels +z, so the point at z=5 looks back toward -z through the sphere
        assert raycast_blocked((0.0, 0.0, 5.0), (0, 0, 1), spheres)

    def test_no_spheres(self):
        assert not raycast_blocked((0.0, 0.0, 0.0), (0, 0, 1), [])

    def test_miss(self):
        assert not raycast_blocked((3.0, 0.0, 5.0), (0, 0, 1), [Sphere((0.0, 0.0, 0.0), 1.0)])

    def test_tangent_counts(self):
        assert raycast_blocked((1.0, 0.0, 5.0), (0, 0, 1), [Sphere((0.0, 0.0, 0.0), 1.0)])

    def test_sphere_behind_point_does_not_block(self):
        assert not raycast_blocked((0.0, 0.0, -5.0), (0, 0, 1), [Sphere((0.0, 0.0, 0.0), 1.0)])


class TestRender:
    def test_head_on_light(self):
        spec, b = single_sphere([0, 0, 1], radius=40.0)
        assert not b.gt.attached.any()
        # the cast footprint lies behind the silhouette except for the
        # grazing rim, where tangent rays count as blocked
        ys, xs = np.mgrid[0:256, 0:256]
        assert b.gt.cast.any()
        np.testing.assert_array_equal(np.hypot(xs - 128, ys - 128)[b.gt.cast], 40.0)
        footprint = np.hypot(xs - 128, ys - 128) < 40.0
        np.testing.assert_array_equal(footprint, b.object_mask)

    def test_head_on_light_floating_sphere_footprint(self):
        # straight-down light: every plane point under the silhouette is blocked
        spec, _ = single_sphere([0, 0, 1], radius=40.0, gap=10.0)
        pts = [(128.0 + dx, 128.0, spec.plane_depth) for dx in (0.0, 20.0, 39.0)]
        assert all(raycast_blocked(p, spec.light, spec.spheres) for p in pts)
        assert not raycast_blocked((128.0 + 41.0, 128.0, spec.plane_depth), spec.light, spec.spheres)

    def test_side_light(self):
        _, b = single_sphere([1, 0, 0], radius=40.0)
        xs = np.mgrid[0:256, 0:256][1]
        obj = b.object_mask
        np.testing.assert_array_equal(b.gt.attached[obj], (xs[obj] - 128) > 0)

    def test_two_spheres_brute_force(self):
        spec = occlusion_suite(1, 5)[0]
        b = render_scene(spec)
        rng = np.random.default_rng(0)
        rows, cols = np.nonzero(b.object_mask)
        pick = rng.choice(len(rows), 400, replace=False)
        for r, c in zip(rows[pick], cols[pick]):
            p = np.array([c, r, b.depth[r, c]], dtype=np.float64)
            facing_away = b.normals[r, c] @ b.light > 0
            own = spec.spheres[b.sphere_id[r, c]]
            others = [s for s in spec.spheres if s is not own]
            expected = facing_away or raycast_blocked(p, b.light, others)
            assert b.gt.attached[r, c] == expected
        pm = partial_attached_map(b.normals, b.light) & b.object_mask
        missed = b.gt.attached & ~pm
        assert missed.any()
        # the missed pixels face the light and are blocked by the other sphere
        assert np.all(b.normals[missed] @ b.light <= 0)

    def test_invariants(self, suite20):
        for spec, b in suite20:
            assert not np.any(b.gt.attached & ~b.object_mask)
            assert not np.any(b.gt.cast & b.object_mask)
            assert not b.gt.undefined.any()
            assert not np.any(b.gt.cast & b.gt.attached)
            facing = b.object_mask & (b.normals @ b.light > 0)
            assert not np.any(facing & ~b.gt.attached)
            assert np.all(b.depth >= 0)

    def test_single_sphere_equality(self):
        for spec in scene_suite(10, 3, n_spheres=1):
            b = render_scene(spec)
            pm = partial_attached_map(b.normals, b.light) & b.object_mask
            np.testing.assert_array_equal(pm, b.gt.attached)

    def test_lit_plane_constant(self, suite20):
        for spec, b in suite20:
            lit_plane = ~b.object_mask & ~b.gt.cast
            if spec.light[2] > 0:
                vals = b.image[lit_plane]
                assert np.ptp(vals) == 0.0
                assert vals[0, 0] == pytest.approx(spec.ambient + spec.albedo * spec.light[2])

    def test_shadowed_points_ambient(self, suite20):
        for spec, b in suite20:
            shadow = b.gt.cast | b.gt.attached
            np.testing.assert_allclose(b.image[shadow], spec.ambient)

    def test_degenerate_spec(self):
        with pytest.raises(DataError):
            SceneSpec((), 10.0, (0, 0, 1), (0, 5))

    def test_sphere_through_plane(self):
        with pytest.raises(DataError):
            SceneSpec((Sphere((5.0, 5.0, 9.0), 2.0),), 10.0, (0, 0, 1), (10, 10))

    def test_deterministic(self):
        a = render_scene(scene_suite(1, 9)[0])
        b = render_scene(scene_suite(1, 9)[0])
        np.testing.assert_array_equal(a.image, b.image)
        np.testing.assert_array_equal(a.gt.labels, b.gt.labels)


class TestSuite:
    def test_same_seed_identical(self):
        assert scene_suite(5, 7) == scene_suite(5, 7)

    def test_different_seed_differs(self):
        assert scene_suite(5, 7) != scene_suite(5, 8)

    def test_valid_specs(self):
        suite = scene_suite(20, 1)
        assert len(suite) == 20
        for spec in suite:
            assert 1 <= len(spec.spheres) <= 3
            for s in spec.spheres:
                assert 0.10 * 256 <= s.radius <= 0.25 * 256
                assert s.center[2] + s.radius <= spec.plane_depth
            assert spec.light[2] > 0.1 or spec.light[2] < 0
            assert abs(np.linalg.norm(spec.light) - 1) < 1e-12

    def test_masks_non_empty(self, suite20):
        backlit = 0
        for spec, b in suite20:
            assert b.object_mask.any()
            if spec.light[2] > 0:
                assert b.gt.cast.any()
            else:
                backlit += 1
        assert 0 < backlit < 20

    def test_count_must_be_positive(self):
        with pytest.raises(ValueError):
            scene_suite(0, 1)
