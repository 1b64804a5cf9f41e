"""Tests for the tabulated radial sampler and its binary table format."""

import math
import struct

import numpy as np
import pytest

from conftest import make_rng
from disklight.geometry import ellipse_to_world, ray_disk_hit
from disklight.maps import sample_radial_batch
from disklight.solid_angle import (
    ellipse_radius_from_axes,
    inside_ellipse,
    omega_radial_from_axes,
)
from disklight.tabulation import (
    DEFAULT_ALPHA_REF,
    DegenerateTriangle,
    RadialTable,
    TabSampleStats,
    _clamp_into_ellipse,
    _locate_quantile,
    _tabulated_candidates,
    build_table,
    read_table,
    sample_spherical_triangle,
    sample_spherical_triangle_batch,
    sample_tabulated,
    sample_tabulated_batch,
    sample_tabulated_loop,
    write_table,
)


class TestBuildTable:
    def test_shapes_and_metadata(self, coarse_table):
        assert coarse_table.entries.shape == (33, 33)
        assert coarse_table.theta_starts.shape == (33, 33)
        assert coarse_table.n_beta == 33
        assert coarse_table.n_phi == 33
        assert coarse_table.alpha_ref == DEFAULT_ALPHA_REF
        grid = coarse_table.phi_grid
        assert grid[0] == 0.0
        assert grid[-1] == pytest.approx(0.5 * math.pi, rel=1e-15)

    def test_int_resolution_is_square(self):
        table = build_table(6)
        assert table.entries.shape == (6, 6)

    def test_rows_pinned_and_monotone(self, coarse_table):
        entries = coarse_table.entries
        assert np.all(entries[:, 0] == 0.0)
        assert np.all(entries[1:, -1] == 1.0)
        assert np.all(np.diff(entries, axis=1) >= 0.0)
        assert np.all(entries >= 0.0)
        assert np.all(entries <= 1.0)

    def test_degenerate_row_is_step(self, coarse_table):
        # beta' = 0 collapses the ellipse onto the x axis: the whole quadrant
        # area sits in the very first azimuth interval.
        row = coarse_table.entries[0]
        assert row[0] == 0.0
        assert np.all(row[1:] == 1.0)
        starts = coarse_table.theta_starts[0]
        assert starts[0] == coarse_table.alpha_ref
        assert np.all(starts[1:] == 0.0)

    def test_circular_row_is_linear(self, coarse_table):
        # beta' = 1 at the reference alpha is a circular cone; its quadrant
        # area grows linearly in azimuth.
        row = coarse_table.entries[-1]
        expected = np.linspace(0.0, 1.0, coarse_table.n_phi)
        assert np.max(np.abs(row - expected)) < 1e-12

    def test_circular_row_zeniths(self, coarse_table):
        # The circular boundary keeps a constant zenith equal to alpha_ref.
        starts = coarse_table.theta_starts[-1]
        assert np.max(np.abs(starts - coarse_table.alpha_ref)) < 1e-12

    def test_interior_row_matches_direct_areas(self):
        table = build_table((5, 9), alpha_ref=1.0)
        i = 2
        beta = (i / 4.0) * 1.0
        a = math.sin(1.0)
        b = math.sin(beta)
        phis = np.linspace(0.0, 0.5 * math.pi, 9)
        areas = np.array([omega_radial_from_axes(a, b, p) for p in phis])
        expected = areas / areas[-1]
        assert np.max(np.abs(table.entries[i] - expected)) < 1e-12
        zeniths = np.arcsin(ellipse_radius_from_axes(a, b, phis))
        assert np.max(np.abs(table.theta_starts[i] - zeniths)) < 1e-12

    def test_resolution_validation(self):
        with pytest.raises(ValueError):
            build_table((1, 16))
        with pytest.raises(ValueError):
            build_table((16, 1))
        with pytest.raises(ValueError):
            build_table(16, alpha_ref=0.0)
        with pytest.raises(ValueError):
            build_table(16, alpha_ref=0.5 * math.pi)


class TestLocateQuantile:
    def test_on_grid_targets_are_exact(self):
        row = np.linspace(0.0, 1.0, 9)
        j, frac = _locate_quantile(row, row[1:-1].copy())
        assert np.array_equal(j, np.arange(1, 8))
        assert np.all(frac == 0.0)

    def test_midpoint_fraction(self):
        row = np.array([0.0, 0.2, 1.0])
        j, frac = _locate_quantile(row, np.array([0.1, 0.6]))
        assert list(j) == [0, 1]
        assert frac == pytest.approx([0.5, 0.5], abs=1e-15)

    def test_plateau_gives_zero_fraction(self):
        row = np.array([0.0, 1.0, 1.0, 1.0])
        j, frac = _locate_quantile(row, np.array([1.0]))
        assert j[0] == 2
        assert frac[0] == 0.0

    def test_endpoints_clamped(self):
        row = np.linspace(0.0, 1.0, 5)
        j, frac = _locate_quantile(row, np.array([0.0, 1.0]))
        assert j[0] == 0 and frac[0] == 0.0
        assert j[1] == 3 and frac[1] == pytest.approx(1.0)


class TestSerialization:
    def test_round_trip_bits(self, tmp_path, coarse_table):
        path = tmp_path / "table.setb"
        write_table(coarse_table, path)
        loaded = read_table(path)
        assert np.array_equal(loaded.entries, coarse_table.entries)
        assert np.array_equal(loaded.theta_starts, coarse_table.theta_starts)
        assert loaded.alpha_ref == coarse_table.alpha_ref

    def test_file_layout(self, tmp_path, coarse_table):
        path = tmp_path / "table.setb"
        write_table(coarse_table, path)
        blob = path.read_bytes()
        assert len(blob) == 24 + 2 * 33 * 33 * 8
        magic = blob[:4]
        version, n_beta, n_phi, alpha_ref = struct.unpack("<IIId", blob[4:24])
        assert magic == b"SETB"
        assert version == 1
        assert n_beta == 33
        assert n_phi == 33
        assert alpha_ref == coarse_table.alpha_ref

    def test_bad_magic_rejected(self, tmp_path, coarse_table):
        path = tmp_path / "table.setb"
        write_table(coarse_table, path)
        blob = bytearray(path.read_bytes())
        blob[:4] = b"NOPE"
        path.write_bytes(bytes(blob))
        with pytest.raises(ValueError):
            read_table(path)

    def test_truncated_rejected(self, tmp_path, coarse_table):
        path = tmp_path / "table.setb"
        write_table(coarse_table, path)
        blob = path.read_bytes()
        path.write_bytes(blob[:-16])
        with pytest.raises(ValueError):
            read_table(path)

    def test_reload_sampling_parity(self, tmp_path, coarse_table, reference_frame):
        path = tmp_path / "table.setb"
        write_table(coarse_table, path)
        loaded = read_table(path)
        rng = make_rng(11)
        for u in rng.random((50, 2)):
            a = sample_tabulated(coarse_table, reference_frame, u)
            b = sample_tabulated(loaded, reference_frame, u)
            if a is None:
                assert b is None
                continue
            assert np.array_equal(a.q, b.q)
            assert np.array_equal(a.omega, b.omega)


OCTANT = (
    np.array([0.0, 0.0, 1.0]),
    np.array([1.0, 0.0, 0.0]),
    np.array([0.0, 1.0, 0.0]),
)


class TestSphericalTriangle:
    def test_corner_pins(self):
        a, b, c = OCTANT
        assert np.allclose(sample_spherical_triangle(a, b, c, (1.0, 0.0)), b, atol=1e-12)
        assert np.allclose(sample_spherical_triangle(a, b, c, (0.0, 1.0)), a, atol=1e-12)
        assert np.allclose(sample_spherical_triangle(a, b, c, (1.0, 1.0)), c, atol=1e-12)

    def test_full_area_slide_law(self):
        # With the first coordinate at 1 the chord endpoint is exactly C and
        # the second coordinate slides the dot product with B linearly.
        a, b, c = OCTANT
        cos_bc = float(b @ c)
        for t in (0.1, 0.5, 0.9):
            q = sample_spherical_triangle(a, b, c, (1.0, t))
            assert q @ b == pytest.approx(1.0 - t * (1.0 - cos_bc), abs=1e-12)
            # stays on the B-C great circle
            assert abs(q @ np.cross(b, c) / np.linalg.norm(np.cross(b, c))) < 1e-12

    def test_unit_norm(self):
        a, b, c = OCTANT
        rng = make_rng(5)
        xi = rng.random((500, 2))
        q = sample_spherical_triangle_batch(
            np.broadcast_to(a, (500, 3)),
            np.broadcast_to(b, (500, 3)),
            np.broadcast_to(c, (500, 3)),
            xi,
        )
        assert np.max(np.abs(np.linalg.norm(q, axis=1) - 1.0)) < 1e-12

    def test_octant_moments(self):
        # Uniform area sampling over the octant triangle has closed-form
        # first moments E[x] = E[y] = E[z] = 1/2 (integral of each coordinate
        # over the octant is pi/4, area pi/2).
        a, b, c = OCTANT
        n = 100_000
        xi = make_rng(17).random((n, 2))
        q = sample_spherical_triangle_batch(
            np.broadcast_to(a, (n, 3)),
            np.broadcast_to(b, (n, 3)),
            np.broadcast_to(c, (n, 3)),
            xi,
        )
        means = q.mean(axis=0)
        # std of each coordinate is sqrt(1/12) ~ 0.289, so 5 SE ~ 4.6e-3
        assert np.max(np.abs(means - 0.5)) < 6e-3

    def test_batch_matches_scalar(self):
        a, b, c = OCTANT
        xi = make_rng(23).random((20, 2))
        batch = sample_spherical_triangle_batch(
            np.broadcast_to(a, (20, 3)),
            np.broadcast_to(b, (20, 3)),
            np.broadcast_to(c, (20, 3)),
            xi,
        )
        for row, point in zip(xi, batch):
            assert np.array_equal(sample_spherical_triangle(a, b, c, row), point)

    def test_degenerate_rejected(self):
        a = np.array([0.0, 0.0, 1.0])
        with pytest.raises(DegenerateTriangle):
            sample_spherical_triangle(a, a, np.array([1.0, 0.0, 0.0]), (0.5, 0.5))


class TestCandidates:
    def test_interval_start_vertex(self, coarse_table, reference_frame):
        # xi2 = 0 lands exactly on the boundary vertex at the interval start;
        # for e1p = 0 that is the boundary point at azimuth zero, zenith
        # arcsin(a).
        q = _tabulated_candidates(
            coarse_table,
            reference_frame,
            np.array([0], dtype=np.intp),
            np.array([0.0]),
            np.array([0.0]),
        )[0]
        a = reference_frame.a
        expected = np.array([a, 0.0, math.sqrt(1.0 - a * a)])
        assert np.allclose(q, expected, atol=1e-12)

    def test_first_interval_azimuth(self, full_table, reference_frame):
        # A tiny first coordinate must stay inside the first azimuth wedge.
        dphi = 0.5 * math.pi / (full_table.n_phi - 1)
        sample = sample_tabulated(full_table, reference_frame, (1e-12, 0.5))
        assert sample is not None
        phi = math.atan2(sample.q[1], sample.q[0])
        assert -1e-9 <= phi <= dphi + 1e-9

    def test_quadrant_signs(self, full_table, reference_frame):
        cases = [
            (0.1, 1, 1),
            (0.35, -1, 1),
            (0.6, -1, -1),
            (0.85, 1, -1),
        ]
        for e1, sx, sy in cases:
            sample = sample_tabulated(full_table, reference_frame, (e1, 0.5))
            assert sample is not None
            assert sample.q[0] * sx >= 0.0
            assert sample.q[1] * sy >= 0.0


class TestSampleTabulated:
    def test_sample_fields(self, full_table, reference_frame, reference_light):
        rng = make_rng(31)
        for u in rng.random((200, 2)):
            sample = sample_tabulated(full_table, reference_frame, u)
            assert sample is not None
            assert inside_ellipse(reference_frame, sample.q)
            assert sample.pdf == pytest.approx(1.0 / reference_frame.omega, rel=1e-15)
            assert sample.technique == "tab-radial"
            assert sample.newton_iterations == 0
            assert np.allclose(
                sample.omega, ellipse_to_world(reference_frame, sample.q), atol=1e-15
            )
            assert ray_disk_hit(
                reference_light, reference_frame.origin, sample.omega
            )

    def test_out_of_range_u_clamped(self, full_table, reference_frame):
        # e1 >= 1 clamps to just under 1: quadrant 3, last azimuth cell.
        # That is the far corner of the overdraw triangle, so rejection is a
        # legitimate outcome; a returned sample must carry quadrant-3 signs.
        top = sample_tabulated(full_table, reference_frame, (1.5, 0.5))
        if top is not None:
            assert top.q[0] >= 0.0 and top.q[1] <= 0.0
        retried = sample_tabulated_loop(
            full_table, reference_frame, (1.5, 0.5), make_rng(211)
        )
        assert retried is not None
        assert inside_ellipse(reference_frame, retried.q)
        low = sample_tabulated(full_table, reference_frame, (-0.5, 0.5))
        assert low is not None
        assert low.q[0] >= 0.0 and low.q[1] >= 0.0  # quadrant 0

    def test_pole_side_of_slide(self, full_table, reference_frame):
        # xi2 = 1 reaches the chord endpoint near the apex side: higher z
        # than xi2 = 0 at the same azimuth coordinate.
        rim = sample_tabulated(full_table, reference_frame, (0.1, 1e-9))
        apexward = sample_tabulated(full_table, reference_frame, (0.1, 1.0))
        assert rim is not None and apexward is not None
        assert apexward.q[2] > rim.q[2]


def _find_rejecting_u(table, frame):
    rng = make_rng(47)
    for u in rng.random((200_000, 2)):
        if sample_tabulated(table, frame, u) is None:
            return u
    raise AssertionError("no rejecting unit-square point found")


@pytest.fixture(scope="module")
def tiny_table():
    return build_table((4, 4))


class TestRejection:
    def test_coarse_table_reject_ratio(self, tiny_table, reference_frame):
        stats = TabSampleStats()
        eps = make_rng(53).random((200_000, 2))
        q, omega, pdf = sample_tabulated_batch(
            tiny_table, reference_frame, eps, make_rng(59), stats=stats
        )
        assert q.shape == (200_000, 3)
        assert np.all(inside_ellipse(reference_frame, q))
        assert np.all(pdf == 1.0 / reference_frame.omega)
        assert stats.accepted >= 200_000
        # the 4x4 triangles overhang the shrinking boundary substantially;
        # measured ~9% on this frame
        assert 0.01 < stats.ratio < 0.2

    def test_full_table_rejection_under_one_percent(self, full_table, reference_frame):
        # The triangles must overhang the boundary (zenith at the interval
        # start), so some rejection always exists, but at 1024x1024 it stays
        # far below one percent (~4e-4 measured here).
        stats = TabSampleStats()
        eps = make_rng(61).random((100_000, 2))
        sample_tabulated_batch(full_table, reference_frame, eps, make_rng(67), stats=stats)
        assert stats.rejected > 0
        assert stats.ratio < 0.01

    def test_loop_retries_rejecting_point(self, tiny_table, reference_frame):
        u = _find_rejecting_u(tiny_table, reference_frame)
        stats = TabSampleStats()
        sample = sample_tabulated_loop(
            tiny_table, reference_frame, u, make_rng(71), stats=stats
        )
        assert sample is not None
        assert inside_ellipse(reference_frame, sample.q)
        assert stats.rejected >= 1
        assert stats.accepted == 1

    def test_loop_zero_weight_mode(self, tiny_table, reference_frame):
        u = _find_rejecting_u(tiny_table, reference_frame)
        stats = TabSampleStats()
        sample = sample_tabulated_loop(
            tiny_table,
            reference_frame,
            u,
            make_rng(73),
            zero_weight_on_reject=True,
            stats=stats,
        )
        assert sample is None
        assert stats.rejected == 1
        assert stats.accepted == 0

    def test_loop_accepting_point_ignores_rng(self, full_table, reference_frame):
        u = (0.37, 0.42)
        first = sample_tabulated_loop(full_table, reference_frame, u, make_rng(79))
        second = sample_tabulated_loop(full_table, reference_frame, u, make_rng(83))
        assert np.array_equal(first.q, second.q)

    def test_stats_ratio_empty(self):
        assert TabSampleStats().ratio == 0.0


class TestClampIntoEllipse:
    def test_outside_point_pulled_to_boundary(self, reference_frame):
        fr = reference_frame
        q = np.array([fr.a * 1.1, 0.2 * fr.b, 0.5])
        clamped = _clamp_into_ellipse(fr, q)
        assert inside_ellipse(fr, clamped)
        s = math.hypot(clamped[0] / fr.a, clamped[1] / fr.b)
        assert s == pytest.approx(1.0 - 1e-12, rel=1e-9)
        assert clamped[2] > 0.0
        assert np.linalg.norm(clamped) == pytest.approx(1.0, abs=1e-12)

    def test_inside_point_untouched(self, reference_frame):
        q = np.array([0.1, 0.05, math.sqrt(1.0 - 0.1**2 - 0.05**2)])
        assert np.array_equal(_clamp_into_ellipse(reference_frame, q), q)


class TestBatch:
    def test_batch_matches_scalar_without_rejection(self, full_table, reference_frame):
        eps = make_rng(89).random((100, 2))
        q, omega, pdf = sample_tabulated_batch(
            full_table, reference_frame, eps, make_rng(97)
        )
        for row, point, direction in zip(eps, q, omega):
            scalar = sample_tabulated(full_table, reference_frame, row)
            assert scalar is not None
            assert np.array_equal(scalar.q, point)
            assert np.array_equal(scalar.omega, direction)

    def test_batch_deterministic(self, reference_frame):
        table = build_table((4, 4))
        eps = make_rng(101).random((5000, 2))
        q1, _, _ = sample_tabulated_batch(table, reference_frame, eps, make_rng(103))
        q2, _, _ = sample_tabulated_batch(table, reference_frame, eps, make_rng(103))
        assert np.array_equal(q1, q2)

    def test_stats_accumulate(self, reference_frame):
        table = build_table((4, 4))
        stats = TabSampleStats()
        eps = make_rng(107).random((50_000, 2))
        sample_tabulated_batch(table, reference_frame, eps, make_rng(109), stats=stats)
        first_total = stats.accepted + stats.rejected
        sample_tabulated_batch(table, reference_frame, eps, make_rng(113), stats=stats)
        assert stats.accepted + stats.rejected > first_total


class TestAgainstAnalyticRadial:
    def test_moments_match_newton_map(self, full_table, reference_frame):
        n = 200_000
        eps = make_rng(127).random((n, 2))
        q_tab, _, _ = sample_tabulated_batch(
            full_table, reference_frame, eps, make_rng(131)
        )
        q_rad, _, _, _ = sample_radial_batch(
            reference_frame, make_rng(137).random((n, 2))
        )
        for axis in range(3):
            ta = q_tab[:, axis]
            ra = q_rad[:, axis]
            se = math.hypot(ta.std() / math.sqrt(n), ra.std() / math.sqrt(n))
            assert abs(ta.mean() - ra.mean()) < 5.0 * se

    def test_rejection_falls_with_resolution(self, reference_frame):
        ratios = []
        eps = make_rng(139).random((200_000, 2))
        for res in (4, 16):
            stats = TabSampleStats()
            table = build_table((res, res))
            sample_tabulated_batch(
                table, reference_frame, eps, make_rng(149), stats=stats
            )
            ratios.append(stats.ratio)
        assert ratios[1] < ratios[0]
