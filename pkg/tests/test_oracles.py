import math

import numpy as np
import pytest

from disklight.geometry import DiskLight, ShadingPoint, ellipse_to_world, ray_disk_hit
from disklight.oracles import (
    MaxDepth,
    OracleEstimate,
    adaptive_quadrature,
    cap_solid_angle,
    estimate_solid_angle_mc,
    far_field_solid_angle,
    propose_cap_batch,
    sample_area,
    sample_area_batch,
    sample_cap_rejection,
    sample_cap_rejection_batch,
)
from disklight.solid_angle import inside_ellipse

from conftest import make_rng
from oracle_helpers import binomial_z, random_config, random_frame


class TestAdaptiveQuadrature:
    def test_polynomial_exact(self):
        assert adaptive_quadrature(lambda x: x * x, 0.0, 1.0) == pytest.approx(
            1.0 / 3.0, abs=1e-13
        )

    def test_sine(self):
        assert adaptive_quadrature(math.sin, 0.0, math.pi) == pytest.approx(2.0, abs=1e-12)

    def test_sqrt_endpoint_derivative_blowup(self):
        assert adaptive_quadrature(math.sqrt, 0.0, 1.0, tol=1e-12) == pytest.approx(
            2.0 / 3.0, abs=1e-10
        )

    def test_reversed_interval_signs(self):
        fwd = adaptive_quadrature(lambda x: x, 0.0, 2.0)
        assert fwd == pytest.approx(2.0, abs=1e-13)

    def test_infinite_interval_rejected(self):
        with pytest.raises(ValueError):
            adaptive_quadrature(lambda x: x, 0.0, math.inf)

    def test_max_depth_carries_estimate(self):
        with pytest.raises(MaxDepth) as info:
            adaptive_quadrature(math.sqrt, 0.0, 1.0, tol=1e-15, max_depth=3)
        err = info.value
        assert err.estimate == pytest.approx(2.0 / 3.0, abs=1e-3)
        assert err.error_bound > 0.0


class TestOracleEstimate:
    def test_validation(self):
        with pytest.raises(ValueError):
            OracleEstimate(value=1.0, se=-0.1, count=10)
        with pytest.raises(ValueError):
            OracleEstimate(value=1.0, se=0.1, count=0)


class TestSampleArea:
    def test_point_on_disk_and_pdf(self, reference_light):
        point = ShadingPoint(position=(0.0, 0.0, 0.0))
        s_pt, omega, pdf = sample_area(reference_light, point, (0.3, 0.7))
        assert abs(np.dot(s_pt - reference_light.center, reference_light.normal)) < 1e-12
        assert np.linalg.norm(s_pt - reference_light.center) <= reference_light.radius
        assert np.linalg.norm(omega) == pytest.approx(1.0, rel=1e-13)
        dist = np.linalg.norm(s_pt - point.position)
        cos_n = abs(np.dot(omega, reference_light.normal))
        assert pdf == pytest.approx(dist * dist / (reference_light.area * cos_n), rel=1e-12)

    def test_grazing_pdf_infinite(self):
        light = DiskLight(center=(0, 0, 1), normal=(0, 0, 1), radius=1.0)
        # shading point in the disk plane: every direction grazes
        point = ShadingPoint(position=(5.0, 0.0, 1.0))
        _, _, pdf = sample_area(light, point, (0.5, 0.5))
        assert math.isinf(pdf)

    def test_batch_matches_scalar(self, reference_light):
        point = ShadingPoint(position=(0.0, 0.0, 0.0))
        rng = make_rng(100)
        eps = rng.random((50, 2))
        pts, omega, pdf = sample_area_batch(reference_light, point, eps)
        for i in range(50):
            p_i, o_i, f_i = sample_area(reference_light, point, eps[i])
            assert np.allclose(pts[i], p_i)
            assert np.allclose(omega[i], o_i)
            assert pdf[i] == pytest.approx(f_i, rel=1e-14)

    def test_covers_disk_uniformly(self, reference_light):
        # area-uniformity: mean squared radial distance of r^2 is r^2/2
        point = ShadingPoint(position=(0.0, 0.0, 0.0))
        rng = make_rng(101)
        pts, _, _ = sample_area_batch(reference_light, point, rng.random((20000, 2)))
        d2 = np.sum((pts - reference_light.center) ** 2, axis=1)
        assert d2.mean() == pytest.approx(0.5 * reference_light.radius**2, rel=0.02)
        assert d2.max() <= reference_light.radius**2 * (1 + 1e-12)


class TestCapRejection:
    def test_cap_contains_ellipse(self, reference_frame):
        assert cap_solid_angle(reference_frame) >= reference_frame.omega

    def test_samples_inside_ellipse(self, reference_frame):
        rng = make_rng(102)
        q = sample_cap_rejection_batch(reference_frame, rng, 5000)
        assert q.shape == (5000, 3)
        assert np.allclose(np.linalg.norm(q, axis=1), 1.0, atol=1e-12)
        assert inside_ellipse(reference_frame, q).all()

    def test_samples_hit_world_disk(self, reference_frame):
        fr = reference_frame
        rng = make_rng(103)
        q = sample_cap_rejection_batch(fr, rng, 500)
        for qi in q:
            w = ellipse_to_world(fr, qi)
            assert ray_disk_hit(fr.light, fr.origin, w)

    def test_scalar_draw(self, reference_frame):
        q = sample_cap_rejection(reference_frame, make_rng(104))
        assert q.shape == (3,)
        assert inside_ellipse(reference_frame, q)

    def test_acceptance_rate_binomial(self, reference_frame):
        fr = reference_frame
        rng = make_rng(105)
        _, ok = propose_cap_batch(fr, rng, 200_000)
        p = fr.omega / cap_solid_angle(fr)
        z = binomial_z(int(ok.sum()), ok.size, p)
        assert abs(z) < 4.0

    def test_proposals_uniform_over_cap(self, reference_frame):
        # accepted-fraction consistency on a half-space split of the cap
        fr = reference_frame
        rng = make_rng(106)
        q, ok = propose_cap_batch(fr, rng, 100_000)
        assert q.shape[0] == 100_000
        # z of proposals spans [cos(alpha), 1] uniformly in solid angle
        z_lo = math.cos(fr.alpha)
        t = (q[:, 2] - z_lo) / (1.0 - z_lo)
        assert t.min() >= -1e-12 and t.max() <= 1 + 1e-12
        hist, _ = np.histogram(t, bins=10, range=(0, 1))
        assert hist.min() > 0.8 * 10_000

    def test_uniformity_moments(self, reference_frame):
        # uniform density over the ellipse: first moments match a fine
        # deterministic quadrature of the region
        fr = reference_frame
        rng = make_rng(107)
        q = sample_cap_rejection_batch(fr, rng, 100_000)
        # region symmetric in x: E[x] = 0
        se_x = q[:, 0].std() / math.sqrt(q.shape[0])
        assert abs(q[:, 0].mean()) < 4.0 * se_x

    def test_random_frames_membership(self):
        rng = make_rng(108)
        for _ in range(10):
            fr = random_frame(rng)
            q = sample_cap_rejection_batch(fr, rng, 2000)
            assert q.shape[0] == 2000
            assert inside_ellipse(fr, q).all()


class TestEstimateSolidAngleMc:
    def test_reference_consistency(self, reference_frame):
        est = estimate_solid_angle_mc(reference_frame, make_rng(109), 500_000)
        assert est.count == 500_000
        assert est.se > 0.0
        assert abs(est.value - reference_frame.omega) <= 3.0 * est.se + 1e-12

    def test_random_configs(self):
        rng = make_rng(110)
        bad = 0
        for _ in range(10):
            fr = random_frame(rng)
            est = estimate_solid_angle_mc(fr, rng, 200_000)
            if abs(est.value - fr.omega) > 3.0 * est.se + 1e-15:
                bad += 1
        assert bad <= 1


class TestFarField:
    def test_matches_exact_at_distance(self):
        # asymptotic and exact solid angle agree to O((r/d)^2)
        from disklight.geometry import build_frames

        for ratio in (30.0, 100.0):
            light = DiskLight(center=(0, 0, ratio), normal=(0.3, 0.1, -1.0), radius=1.0)
            point = ShadingPoint(position=(0.2, -0.1, 0.0))
            fr = build_frames(light, point)
            ff = far_field_solid_angle(light, point)
            assert ff == pytest.approx(fr.omega, rel=4.0 / ratio**2)

    def test_projected_area_form(self):
        light = DiskLight(center=(0, 0, 10), normal=(0, 0, 1), radius=2.0)
        point = ShadingPoint(position=(0.0, 0.0, 0.0))
        assert far_field_solid_angle(light, point) == pytest.approx(
            light.area / 100.0, rel=1e-13
        )
