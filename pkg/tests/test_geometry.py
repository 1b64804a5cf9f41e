import math

import numpy as np
import pytest

from disklight.geometry import (
    DegenerateGeometry,
    DiskLight,
    RayParallelToPlane,
    ShadingPoint,
    back_project,
    build_frames,
    direction_to_disk_point,
    distance_to_disk,
    ellipse_to_world,
    plane_basis,
    ray_disk_hit,
    ray_disk_hit_batch,
    world_to_ellipse,
)

from conftest import make_rng
from oracle_helpers import random_config


class TestDiskLight:
    def test_normal_is_normalized(self):
        light = DiskLight(center=(0, 0, 0), normal=(0, 0, 5), radius=2.0)
        assert np.allclose(light.normal, [0, 0, 1])

    def test_area(self):
        light = DiskLight(center=(0, 0, 0), normal=(0, 0, 1), radius=2.0)
        assert light.area == pytest.approx(4.0 * math.pi, rel=1e-15)

    def test_bad_radius(self):
        with pytest.raises(ValueError):
            DiskLight(center=(0, 0, 0), normal=(0, 0, 1), radius=0.0)
        with pytest.raises(ValueError):
            DiskLight(center=(0, 0, 0), normal=(0, 0, 1), radius=-1.0)

    def test_zero_normal(self):
        with pytest.raises(ValueError):
            DiskLight(center=(0, 0, 0), normal=(0, 0, 0), radius=1.0)


class TestPlaneBasis:
    def test_orthonormal(self):
        rng = make_rng(50)
        for _ in range(30):
            n = rng.normal(size=3)
            n /= np.linalg.norm(n)
            e1, e2 = plane_basis(n)
            assert np.dot(e1, e2) == pytest.approx(0.0, abs=1e-14)
            assert np.dot(e1, n) == pytest.approx(0.0, abs=1e-14)
            assert np.dot(e2, n) == pytest.approx(0.0, abs=1e-14)
            assert np.linalg.norm(e1) == pytest.approx(1.0, rel=1e-14)
            assert np.linalg.norm(e2) == pytest.approx(1.0, rel=1e-14)


class TestBuildFrames:
    def test_reference_configuration(self, reference_frame):
        fr = reference_frame
        assert fr.alpha == pytest.approx(0.5525382598586208, rel=1e-14)
        assert fr.beta == pytest.approx(0.3633211703408628, rel=1e-14)
        assert fr.omega == pytest.approx(0.6191000856402411, rel=1e-12)
        assert fr.a == pytest.approx(math.sin(fr.alpha), rel=1e-14)
        assert fr.b == pytest.approx(math.sin(fr.beta), rel=1e-14)
        assert not fr.circular

    def test_frame_orthonormal_right_handed(self, reference_frame):
        fr = reference_frame
        basis = np.stack([fr.x_e, fr.y_e, fr.z_e])
        assert np.allclose(basis @ basis.T, np.eye(3), atol=1e-14)
        assert np.linalg.det(basis) == pytest.approx(1.0, rel=1e-12)

    def test_on_axis(self, on_axis_frame):
        fr = on_axis_frame
        assert fr.circular
        assert fr.alpha == pytest.approx(fr.beta, rel=1e-14)
        assert fr.alpha == pytest.approx(0.25 * math.pi, rel=1e-13)
        assert fr.omega == pytest.approx(1.8403023690212192, rel=1e-12)

    def test_on_axis_closed_form_family(self):
        rng = make_rng(51)
        for _ in range(25):
            d = 10.0 ** rng.uniform(-1, 2)
            r = 10.0 ** rng.uniform(-1, 1)
            light = DiskLight(center=(0, 0, d), normal=(0, 0, -1), radius=r)
            fr = build_frames(light, ShadingPoint((0.0, 0.0, 0.0)))
            exact = 2.0 * math.pi * (1.0 - d / math.sqrt(d * d + r * r))
            assert fr.omega == pytest.approx(exact, rel=1e-10)

    def test_normal_flip_gives_same_frame(self):
        light_a = DiskLight(center=(0, 1.5, 1), normal=(0, 0, -1), radius=1.0)
        light_b = DiskLight(center=(0, 1.5, 1), normal=(0, 0, 1), radius=1.0)
        pt = ShadingPoint((0.0, 0.0, 0.0))
        fa = build_frames(light_a, pt)
        fb = build_frames(light_b, pt)
        assert fa.omega == pytest.approx(fb.omega, rel=1e-15)
        assert np.allclose(fa.z_e, fb.z_e)
        assert fa.disk_frame.d == pytest.approx(fb.disk_frame.d, rel=1e-15)
        assert fa.disk_frame.d > 0.0

    def test_in_plane_point_degenerate(self):
        light = DiskLight(center=(0, 1.5, 1), normal=(0, 0, -1), radius=1.0)
        with pytest.raises(DegenerateGeometry):
            build_frames(light, ShadingPoint((0.0, 5.0, 1.0)))

    def test_point_inside_disk_footprint_close(self):
        # extremely close shading point: nearly hemispherical solid angle
        light = DiskLight(center=(0, 0, 1e-6), normal=(0, 0, -1), radius=1.0)
        fr = build_frames(light, ShadingPoint((0.0, 0.0, 0.0)))
        assert fr.omega == pytest.approx(2.0 * math.pi, rel=1e-5)

    def test_random_configs_well_formed(self):
        rng = make_rng(52)
        for _ in range(50):
            light, point = random_config(rng)
            fr = build_frames(light, point)
            assert 0.0 < fr.beta <= fr.alpha < 0.5 * math.pi
            assert 0.0 < fr.omega < 2.0 * math.pi
            assert fr.disk_frame.d > 0.0


class TestCoordinateTransforms:
    def test_world_round_trip(self, reference_frame):
        rng = make_rng(60)
        v = rng.normal(size=(20, 3))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        for q in v:
            w = ellipse_to_world(reference_frame, q)
            back = world_to_ellipse(reference_frame, w)
            assert np.allclose(back, q, atol=1e-14)

    def test_axis_direction(self, reference_frame):
        w = ellipse_to_world(reference_frame, np.array([0.0, 0.0, 1.0]))
        assert np.allclose(w, reference_frame.z_e, atol=1e-15)


class TestBackProjection:
    def test_back_project_lands_on_disk(self, reference_frame):
        fr = reference_frame
        rng = make_rng(61)
        light = fr.light
        for _ in range(50):
            # interior directions: shrink the boundary ellipse a bit
            phi = rng.uniform(0.0, 2.0 * math.pi)
            s = 0.95 * rng.random()
            x = s * fr.a * math.cos(phi)
            y = s * fr.b * math.sin(phi)
            q = np.array([x, y, math.sqrt(max(1.0 - x * x - y * y, 0.0))])
            p = back_project(fr, q)
            assert abs(np.dot(p - light.center, light.normal)) < 1e-9
            assert np.linalg.norm(p - light.center) <= light.radius * (1.0 + 1e-9)

    def test_boundary_direction_hits_rim(self, reference_frame):
        fr = reference_frame
        q = np.array([fr.a, 0.0, math.sqrt(1.0 - fr.a * fr.a)])
        p = back_project(fr, q)
        assert np.linalg.norm(p - fr.light.center) == pytest.approx(
            fr.light.radius, abs=1e-8
        )

    def test_direction_parallel_to_plane_raises(self, reference_frame):
        fr = reference_frame
        with pytest.raises(RayParallelToPlane):
            direction_to_disk_point(
                fr, fr.disk_frame, ShadingPoint(fr.origin), np.array([1.0, 0.0, 0.0])
            )


class TestRayDiskHit:
    def test_center_shot(self):
        light = DiskLight(center=(0, 0, 2), normal=(0, 0, 1), radius=0.5)
        assert ray_disk_hit(light, np.zeros(3), np.array([0.0, 0.0, 1.0]))
        assert not ray_disk_hit(light, np.zeros(3), np.array([0.0, 0.0, -1.0]))
        assert not ray_disk_hit(light, np.zeros(3), np.array([1.0, 0.0, 0.0]))

    def test_edge_miss(self):
        light = DiskLight(center=(0, 0, 1), normal=(0, 0, 1), radius=0.5)
        wide = np.array([0.6, 0.0, 1.0])
        wide /= np.linalg.norm(wide)
        assert not ray_disk_hit(light, np.zeros(3), wide)

    def test_batch_matches_scalar(self):
        light = DiskLight(center=(0.3, -0.2, 2), normal=(0.1, 0.2, 1), radius=0.8)
        rng = make_rng(62)
        dirs = rng.normal(size=(200, 3))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        batch = ray_disk_hit_batch(light, np.zeros(3), dirs)
        for i in range(200):
            assert batch[i] == ray_disk_hit(light, np.zeros(3), dirs[i])


class TestDistanceToDisk:
    def test_axis_point(self):
        light = DiskLight(center=(0, 0, 0), normal=(0, 0, 1), radius=1.0)
        assert distance_to_disk(light, np.array([0.0, 0.0, 2.0])) == pytest.approx(2.0)

    def test_in_plane_outside_rim(self):
        light = DiskLight(center=(0, 0, 0), normal=(0, 0, 1), radius=1.0)
        assert distance_to_disk(light, np.array([3.0, 0.0, 0.0])) == pytest.approx(2.0)

    def test_diagonal(self):
        light = DiskLight(center=(0, 0, 0), normal=(0, 0, 1), radius=1.0)
        d = distance_to_disk(light, np.array([4.0, 0.0, 4.0]))
        assert d == pytest.approx(math.hypot(3.0, 4.0), rel=1e-14)

    def test_on_disk_zero(self):
        light = DiskLight(center=(0, 0, 0), normal=(0, 0, 1), radius=1.0)
        assert distance_to_disk(light, np.array([0.5, 0.5, 0.0])) == pytest.approx(0.0, abs=1e-15)

    def test_batch_shape(self):
        light = DiskLight(center=(0, 0, 0), normal=(0, 0, 1), radius=1.0)
        pts = np.zeros((4, 5, 3))
        pts[..., 2] = 1.0
        out = distance_to_disk(light, pts)
        assert out.shape == (4, 5)
        assert np.allclose(out, 1.0)
