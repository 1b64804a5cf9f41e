"""Independent ground-truth machinery.

Nothing in this module shares formulas with the code under test: the
cap-rejection sampler is uniform by construction (uniform proposal in the
bounding spherical cap, membership decided by a world-space ray-disk
intersection), the quadrature routine is a plain adaptive Simpson rule, and
the area sampler is the textbook baseline technique.  Every distribution
and solid-angle test elsewhere keys off these.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.typing import ArrayLike, NDArray

from disklight.geometry import (
    DiskLight,
    ShadingPoint,
    SphericalEllipseFrame,
    ellipse_to_world,
    plane_basis,
    ray_disk_hit_batch,
)
from disklight.maps import concentric_map

# Below this cosine against the disk normal the area-sampling pdf blows up;
# the sample is returned with an infinite pdf and the estimator drops it.
GRAZING_TOL = 1e-9


@dataclass(frozen=True)
class OracleEstimate:
    """A Monte Carlo estimate with its standard error."""

    value: float
    se: float
    count: int

    def __post_init__(self) -> None:
        if self.se < 0.0 or self.count < 1:
            raise ValueError("standard error must be >= 0 and count >= 1")


class MaxDepth(RuntimeError):
    """Adaptive quadrature ran out of refinement depth.

    Carries the best estimate assembled so far and a bound on the error of
    the unconverged pieces.
    """

    def __init__(self, estimate: float, error_bound: float):
        super().__init__(
            f"quadrature depth exhausted; best estimate {estimate!r} with "
            f"error bound {error_bound!r}"
        )
        self.estimate = estimate
        self.error_bound = error_bound


def adaptive_quadrature(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    tol: float = 1e-12,
    max_depth: int = 100,
) -> float:
    """Integrate ``f`` over [lo, hi] by adaptive Simpson refinement.

    Parameters
    ----------
    f : callable
        Continuous scalar integrand.
    lo, hi : float
        Finite integration bounds (improper integrals must be substituted
        to a finite interval by the caller).
    tol : float
        Absolute tolerance; each subdivision splits its budget in half, the
        classic Richardson-style acceptance test ``|S2 - S1| <= 15 tol``.
    max_depth : int
        Maximum bisection depth per subinterval.  Square-root endpoint
        singularities (the parallel chord height at +-beta) converge at
        roughly half a bit of accuracy per level under the halved-budget
        rule, so the default depth is generous.

    Returns
    -------
    float

    Raises
    ------
    MaxDepth
        If some subinterval hits the depth limit before meeting tolerance;
        the exception carries the best estimate and an error bound.
    """
    a, b = float(lo), float(hi)
    if not (math.isfinite(a) and math.isfinite(b)):
        raise ValueError("quadrature interval must be finite")
    fa, fb = f(a), f(b)
    m = 0.5 * (a + b)
    fm = f(m)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    total = 0.0
    bound = 0.0
    exhausted = False
    stack = [(a, b, fa, fm, fb, whole, tol, max_depth)]
    while stack:
        a, b, fa, fm, fb, whole, tol_k, depth = stack.pop()
        mid = 0.5 * (a + b)
        lm = 0.5 * (a + mid)
        rm = 0.5 * (mid + b)
        flm = f(lm)
        frm = f(rm)
        left = (mid - a) / 6.0 * (fa + 4.0 * flm + fm)
        right = (b - mid) / 6.0 * (fm + 4.0 * frm + fb)
        delta = left + right - whole
        if abs(delta) <= 15.0 * tol_k:
            total += left + right + delta / 15.0
        elif depth <= 0:
            total += left + right + delta / 15.0
            bound += abs(delta) / 15.0
            exhausted = True
        else:
            stack.append((a, mid, fa, flm, fm, left, 0.5 * tol_k, depth - 1))
            stack.append((mid, b, fm, frm, fb, right, 0.5 * tol_k, depth - 1))
    if exhausted:
        raise MaxDepth(total, bound)
    return total


def sample_area(
    light: DiskLight, point: ShadingPoint, u: ArrayLike
) -> tuple[NDArray[np.float64], NDArray[np.float64], float]:
    """Uniform-area baseline sampler for a disk light.

    Parameters
    ----------
    light, point
        The emitter and the shading point.
    u : array_like
        Unit-square sample (eps1, eps2).

    Returns
    -------
    (disk_point, omega, pdf_solid_angle)
        World-space point on the disk, unit direction from the shading
        point toward it, and the area-sampling pdf converted to the
        solid-angle measure: dist^2 / (A(D) |omega . n|).  Grazing
        directions get pdf = inf; estimators treat those samples as zero.
    """
    pts, omega, pdf = sample_area_batch(light, point, np.asarray(u, dtype=np.float64).reshape(1, 2))
    return pts[0], omega[0], float(pdf[0])


def sample_area_batch(
    light: DiskLight, point: ShadingPoint, eps: NDArray[np.float64]
) -> tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.float64]]:
    """Vectorized ``sample_area`` over an (N, 2) array of unit-square samples."""
    eps = np.asarray(eps, dtype=np.float64)
    r, theta = concentric_map(eps)
    e1, e2 = plane_basis(light.normal)
    radial = light.radius * r
    pts = (
        light.center
        + np.outer(radial * np.cos(theta), e1)
        + np.outer(radial * np.sin(theta), e2)
    )
    delta = pts - point.position
    dist = np.linalg.norm(delta, axis=1)
    omega = delta / dist[:, None]
    cos_n = np.abs(omega @ light.normal)
    pdf = np.where(
        cos_n < GRAZING_TOL,
        np.inf,
        dist * dist / (light.area * np.maximum(cos_n, GRAZING_TOL)),
    )
    return pts, omega, pdf


def cap_solid_angle(frame: SphericalEllipseFrame) -> float:
    """Solid angle of the bounding spherical cap of half-angle alpha."""
    return 2.0 * math.pi * (1.0 - math.cos(frame.alpha))


def sample_cap_rejection(
    frame: SphericalEllipseFrame, rng: np.random.Generator
) -> NDArray[np.float64]:
    """Draw one direction uniform over the spherical ellipse, by rejection.

    Proposes uniform directions in the bounding cap around z_e (altitude
    linear in one uniform, azimuth in the other) and keeps the first whose
    world-space ray hits the disk.  Output is in ellipse-frame coordinates.
    """
    while True:
        q = sample_cap_rejection_batch(frame, rng, 1)
        if q.shape[0]:
            return q[0]


def sample_cap_rejection_batch(
    frame: SphericalEllipseFrame,
    rng: np.random.Generator,
    count: int,
    max_rounds: int = 64,
) -> NDArray[np.float64]:
    """Accepted cap-rejection directions, ellipse-frame coords, shape (<=count, 3).

    Proposes in vectorized rounds sized to the expected acceptance rate;
    the result can only fall short of ``count`` if ``max_rounds`` elapse,
    which for valid ellipses (acceptance bounded well away from zero)
    does not happen in practice.
    """
    accept_rate = max(frame.omega / cap_solid_angle(frame), 1e-3)
    pre = _cap_precompute(frame)
    out: list[NDArray[np.float64]] = []
    have = 0
    for _ in range(max_rounds):
        need = count - have
        batch = int(need / accept_rate * 1.1) + 16
        wx, wy, z, ok = _cap_trial(pre, rng.random((batch, 2)))
        good = np.stack([wx[ok], wy[ok], z[ok]], axis=1)
        if good.shape[0] > need:
            good = good[:need]
        out.append(good)
        have += good.shape[0]
        if have >= count:
            break
    return np.concatenate(out, axis=0)


def propose_cap_batch(
    frame: SphericalEllipseFrame, rng: np.random.Generator, count: int
) -> tuple[NDArray[np.float64], NDArray[np.bool_]]:
    """Uniform cap proposals plus their ellipse-membership flags.

    Returns every proposal, accepted or not, so callers can form binomial
    acceptance statistics.
    """
    xi = rng.random((count, 2))
    z = 1.0 - xi[:, 0] * (1.0 - math.cos(frame.alpha))
    s = np.sqrt(np.maximum(1.0 - z * z, 0.0))
    phi = 2.0 * math.pi * xi[:, 1]
    q = np.stack([s * np.cos(phi), s * np.sin(phi), z], axis=1)
    w = ellipse_to_world(frame, q)
    ok = ray_disk_hit_batch(frame.light, frame.origin, w)
    return q, ok


def _cap_precompute(frame: SphericalEllipseFrame) -> tuple:
    """Rotate the disk's plane data into ellipse-frame coordinates once."""
    light = frame.light
    axes = np.stack([frame.x_e, frame.y_e, frame.z_e])  # rows are e-frame axes
    n_e = axes @ light.normal
    rel = axes @ (light.center - frame.origin)
    plane_offset = float(np.dot(light.center - frame.origin, light.normal))
    return (
        n_e,
        rel,
        plane_offset,
        light.radius * light.radius,
        float(rel @ rel),
        1.0 - math.cos(frame.alpha),
    )


def _cap_trial(
    pre: tuple, xi: NDArray[np.float64]
) -> tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.float64], NDArray[np.bool_]]:
    """Cap proposals plus their disk-hit flags, on flat component arrays.

    The membership test is the world-space ray-disk intersection expanded
    in ellipse-frame coordinates (|t*w - rel|^2 <= r^2 without building
    hit points), so it stays independent of the ellipse-coordinate
    membership route used by the samplers under test.
    """
    n_e, rel, plane_offset, r2, rel2, one_minus_cos = pre
    z = 1.0 - xi[:, 0] * one_minus_cos
    s = np.sqrt(np.maximum(1.0 - z * z, 0.0))
    phi = (2.0 * math.pi) * xi[:, 1]
    wx = s * np.cos(phi)
    wy = s * np.sin(phi)
    denom = wx * n_e[0] + wy * n_e[1] + z * n_e[2]
    ok = np.abs(denom) >= 1e-15
    t = plane_offset / np.where(ok, denom, 1.0)
    ok &= t > 0.0
    w_dot_rel = wx * rel[0] + wy * rel[1] + z * rel[2]
    ok &= t * t - 2.0 * t * w_dot_rel + rel2 <= r2
    return wx, wy, z, ok


def _count_cap_hits(frame: SphericalEllipseFrame, rng: np.random.Generator, trials: int) -> int:
    """Accepted-proposal count, fused to avoid materializing directions."""
    pre = _cap_precompute(frame)
    accepted = 0
    done = 0
    chunk = 1 << 19
    while done < trials:
        count = min(chunk, trials - done)
        _, _, _, ok = _cap_trial(pre, rng.random((count, 2)))
        accepted += int(np.count_nonzero(ok))
        done += count
    return accepted


def estimate_solid_angle_mc(
    frame: SphericalEllipseFrame, rng: np.random.Generator, trials: int
) -> OracleEstimate:
    """Binomial cap-rejection estimate of the subtended solid angle."""
    cap = cap_solid_angle(frame)
    accepted = _count_cap_hits(frame, rng, trials)
    p_hat = accepted / trials
    se = cap * math.sqrt(max(p_hat * (1.0 - p_hat), 0.0) / trials)
    return OracleEstimate(value=cap * p_hat, se=se, count=trials)


def far_field_solid_angle(light: DiskLight, point: ShadingPoint) -> float:
    """Far-field asymptotic solid angle: projected area over squared distance."""
    delta = point.position - light.center
    dist = float(np.linalg.norm(delta))
    cos_t = abs(float(np.dot(delta, light.normal))) / dist
    return light.area * cos_t / (dist * dist)
