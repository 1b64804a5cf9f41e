"""Area-preserving maps from the unit square onto the spherical ellipse.

Three maps share one principle: invert a fractional-area function in one
coordinate, carry the other coordinate through a measure-preserving
cylinder (hat-box) parameterization.

* ``sample_parallel``: azimuth phi_p in [-beta, beta] solves
  Omega_p(phi_p) = eps1 * Omega_D, the second coordinate slides along the
  chord; cylinder axis is x_e.
* ``sample_radial``: two quadrant bits split off eps1, the remainder solves
  the per-quadrant Omega_r(phi_r) = eps1' * Omega_r(pi/2); the second
  coordinate interpolates the altitude between the boundary and the center;
  cylinder axis is z_e.
* ``sample_ld_radial``: the radial map fed through the concentric map and
  inverse polar transform, which removes the center-convergence distortion.

Every map's scalar path runs a safeguarded Newton directly on the
elliptic-integral fractional area (the reference implementation); the
``*_batch`` variants instead bracket against a per-frame table of fractional
area at fixed azimuth nodes and bridge the remainder with a short
Gauss-Legendre rule over the elementary integrand.  Both routes satisfy the
same tolerance and are tested against each other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.typing import ArrayLike, NDArray

from disklight.geometry import (
    SphericalEllipseFrame,
    back_project,
    ellipse_to_world,
    ray_disk_hit,
)
from disklight.solid_angle import (
    h_parallel,
    h_radial,
    omega_parallel_positive,
    omega_radial,
)

Vec3 = NDArray[np.float64]


class NoConvergence(RuntimeError):
    """Safeguarded Newton exhausted its iteration budget."""


@dataclass(frozen=True)
class NewtonConfig:
    """Tolerances of the fractional-area inversion.

    ``tol`` is relative to the fractional-area scale of the problem being
    inverted (the full or quadrant solid angle); the absolute tolerance is
    ``tol * scale``.
    """

    tol: float = 1e-10
    max_iterations: int = 32
    bisection_fallback: bool = True

    def __post_init__(self) -> None:
        if self.tol <= 0.0 or self.max_iterations < 1:
            raise ValueError("tolerance must be positive and max iterations >= 1")


DEFAULT_NEWTON = NewtonConfig()


@dataclass(frozen=True)
class InvertResult:
    """Root of a monotone function, with convergence diagnostics.

    ``iterations`` counts Newton/bisection updates actually applied; a
    target already met by the initial guess reports zero.  ``converged``
    False means the budget ran out and ``root`` is the best safeguarded
    estimate.
    """

    root: float
    iterations: int
    converged: bool


@dataclass(frozen=True)
class MapSample:
    """One mapped sample: ellipse-frame direction, world direction, pdf."""

    q: Vec3
    omega: Vec3
    pdf: float
    disk_point: Vec3
    technique: str
    newton_iterations: int = 0


def invert_monotone(
    f: Callable[[float], tuple[float, float]],
    target: float,
    lo: float,
    hi: float,
    cfg: NewtonConfig = DEFAULT_NEWTON,
    x0: float | None = None,
    scale: float = 1.0,
) -> InvertResult:
    """Solve f(x) = target for a strictly increasing f on [lo, hi].

    Parameters
    ----------
    f : callable
        Returns ``(value, derivative)`` at a point.
    target : float
        Must satisfy f(lo) <= target <= f(hi).
    lo, hi : float
        Bracket.
    cfg : NewtonConfig
    x0 : float, optional
        Initial guess; midpoint when omitted.
    scale : float
        Magnitude of f over the bracket; the stopping test is
        ``|f(x) - target| <= cfg.tol * scale``.

    Returns
    -------
    InvertResult
        Never raises on exhaustion; callers that need a hard failure check
        ``converged`` (the samplers raise NoConvergence themselves).
    """
    tol = cfg.tol * scale
    a, b = float(lo), float(hi)
    x = 0.5 * (a + b) if x0 is None else min(max(float(x0), a), b)
    iterations = 0
    while True:
        value, deriv = f(x)
        err = value - target
        if abs(err) <= tol:
            return InvertResult(root=x, iterations=iterations, converged=True)
        if iterations >= cfg.max_iterations:
            return InvertResult(root=x, iterations=iterations, converged=False)
        if err > 0.0:
            b = min(b, x)
        else:
            a = max(a, x)
        use_bisection = abs(deriv) < 1e-14
        if not use_bisection:
            x_new = x - err / deriv
            if x_new <= a or x_new >= b:
                use_bisection = True
            else:
                x = x_new
        if use_bisection:
            if not cfg.bisection_fallback:
                return InvertResult(root=x, iterations=iterations, converged=False)
            x = 0.5 * (a + b)
        iterations += 1


# --------------------------------------------------------------------------
# Planar helpers: concentric square->disk map and its inverse-polar partner.

_QUADRANT_SIGN_X = np.array([1.0, -1.0, -1.0, 1.0])
_QUADRANT_SIGN_Y = np.array([1.0, 1.0, -1.0, -1.0])


def concentric_map(u: ArrayLike) -> tuple:
    """Shirley-Chiu concentric square-to-disk map.

    Parameters
    ----------
    u : array_like
        Unit-square point(s); shape (2,) or (N, 2).

    Returns
    -------
    (r, theta)
        Polar coordinates on the unit disk; theta in [0, 2*pi).  Scalars
        for a single point, arrays for a batch.
    """
    eps = np.asarray(u, dtype=np.float64)
    scalar = eps.ndim == 1
    eps = np.atleast_2d(eps)
    a = 2.0 * eps[:, 0] - 1.0
    b = 2.0 * eps[:, 1] - 1.0
    first = a * a > b * b
    a_safe = np.where(a == 0.0, 1.0, a)
    b_safe = np.where(b == 0.0, 1.0, b)
    r = np.where(first, a, b)
    theta = np.where(
        first,
        (math.pi / 4.0) * (b / a_safe),
        (math.pi / 2.0) - (math.pi / 4.0) * (a / b_safe),
    )
    theta = np.where((a == 0.0) & (b == 0.0), 0.0, theta)
    neg = r < 0.0
    r = np.abs(r)
    theta = np.where(neg, theta + math.pi, theta)
    theta = np.mod(theta, 2.0 * math.pi)
    if scalar:
        return float(r[0]), float(theta[0])
    return r, theta


def _theta_quadrant(theta: NDArray[np.float64]) -> NDArray[np.intp]:
    q = np.floor(theta / (0.5 * math.pi)).astype(np.intp)
    return np.clip(q, 0, 3)


def _branch_u(theta: NDArray[np.float64], quadrant: NDArray[np.intp]) -> NDArray[np.float64]:
    # Piecewise tent over theta: rising on even quadrants, falling on odd,
    # continuous across quadrant boundaries.
    local = theta - quadrant * (0.5 * math.pi)
    frac = local / (0.5 * math.pi)
    u = np.where(quadrant % 2 == 0, frac, 1.0 - frac)
    return np.clip(u, 0.0, 1.0)


def inverse_polar(r: ArrayLike, theta: ArrayLike) -> tuple:
    """Inverse polar map from disk polar coordinates to the unit square.

    ``v = r^2`` preserves area; ``u`` is the piecewise-linear tent in theta
    whose branch direction alternates per quadrant so the composition with
    the concentric map stays continuous.
    """
    r_arr = np.asarray(r, dtype=np.float64)
    t_arr = np.asarray(theta, dtype=np.float64)
    scalar = r_arr.ndim == 0 and t_arr.ndim == 0
    r_arr, t_arr = np.atleast_1d(r_arr, t_arr)
    quadrant = _theta_quadrant(t_arr)
    u = _branch_u(t_arr, quadrant)
    v = r_arr * r_arr
    if scalar:
        return float(u[0]), float(v[0])
    return u, v


# --------------------------------------------------------------------------
# Scalar samplers: safeguarded Newton straight on the elliptic forms.


def _split_unit(u: ArrayLike) -> tuple[float, float]:
    arr = np.asarray(u, dtype=np.float64).reshape(2)
    e1, e2 = float(arr[0]), float(arr[1])
    if not (0.0 <= e1 <= 1.0 and 0.0 <= e2 <= 1.0):
        raise ValueError("unit-square sample outside [0,1]^2")
    return e1, e2


def sample_parallel(
    frame: SphericalEllipseFrame,
    u: ArrayLike,
    cfg: NewtonConfig = DEFAULT_NEWTON,
) -> MapSample:
    """Map a unit-square sample through the parallel (chord) map.

    eps1 picks the azimuth phi_p by inverting the fractional area; eps2
    slides along the chord, signed so eps2 > 1/2 lands at positive x_e.
    """
    e1, e2 = _split_unit(u)
    beta = frame.beta
    target = (e1 - 0.5) * frame.omega

    def f(phi: float) -> tuple[float, float]:
        signed = math.copysign(omega_parallel_positive(frame, abs(phi)), phi)
        return signed, 2.0 * h_parallel(frame, phi)

    res = invert_monotone(
        f,
        target,
        -beta,
        beta,
        cfg,
        x0=-beta + 2.0 * e1 * beta,
        scale=frame.omega,
    )
    if not res.converged:
        raise NoConvergence("parallel-map azimuth inversion did not converge")
    phi_p = res.root
    h = (2.0 * e2 - 1.0) * h_parallel(frame, phi_p)
    rho = math.sqrt(max(1.0 - h * h, 0.0))
    q = np.array([h, rho * math.sin(phi_p), rho * math.cos(phi_p)])
    return _finish(frame, q, "parallel", res.iterations)


def sample_radial(
    frame: SphericalEllipseFrame,
    u: ArrayLike,
    cfg: NewtonConfig = DEFAULT_NEWTON,
) -> MapSample:
    """Map a unit-square sample through the direct radial map.

    Two bits of eps1 choose the quadrant; the remainder inverts the
    quadrant fractional area for phi_r; eps2 interpolates the altitude
    between the boundary (eps2 = 0) and the ellipse center (eps2 = 1).
    """
    e1, e2 = _split_unit(u)
    e1 = min(e1, np.nextafter(1.0, 0.0))
    quadrant = int(e1 * 4.0)
    e1p = e1 * 4.0 - quadrant
    return _radial_quadrant_sample(frame, quadrant, e1p, e2, cfg, "radial")


def sample_ld_radial(
    frame: SphericalEllipseFrame,
    u: ArrayLike,
    cfg: NewtonConfig = DEFAULT_NEWTON,
) -> MapSample:
    """Radial map pre-warped by the concentric map (low-distortion variant).

    The concentric map turns the square into disk polar coordinates; the
    inverse polar transform hands the radial map a per-quadrant azimuth
    fraction (from theta's branch) and an altitude coordinate 1 - r^2, so
    the square's center lands on the ellipse center.
    """
    e1, e2 = _split_unit(u)
    r, theta = concentric_map(np.array([e1, e2]))
    quadrant = int(_theta_quadrant(np.atleast_1d(theta))[0])
    e1p = float(_branch_u(np.atleast_1d(theta), np.atleast_1d(quadrant))[0])
    e2p = 1.0 - r * r
    return _radial_quadrant_sample(frame, quadrant, e1p, e2p, cfg, "ld-radial")


def _radial_quadrant_sample(
    frame: SphericalEllipseFrame,
    quadrant: int,
    e1p: float,
    e2p: float,
    cfg: NewtonConfig,
    technique: str,
) -> MapSample:
    quarter = 0.25 * frame.omega
    target = e1p * quarter

    def f(phi: float) -> tuple[float, float]:
        return omega_radial(frame, phi), 1.0 - h_radial(frame, phi)

    res = invert_monotone(
        f,
        target,
        0.0,
        0.5 * math.pi,
        cfg,
        x0=e1p * 0.5 * math.pi,
        scale=quarter,
    )
    if not res.converged:
        raise NoConvergence("radial-map azimuth inversion did not converge")
    phi_r = res.root
    h_b = h_radial(frame, phi_r)
    h = (1.0 - e2p) * h_b + e2p
    rho = math.sqrt(max(1.0 - h * h, 0.0))
    q = np.array(
        [
            _QUADRANT_SIGN_X[quadrant] * rho * math.cos(phi_r),
            _QUADRANT_SIGN_Y[quadrant] * rho * math.sin(phi_r),
            h,
        ]
    )
    return _finish(frame, q, technique, res.iterations)


def _finish(
    frame: SphericalEllipseFrame, q: Vec3, technique: str, iterations: int
) -> MapSample:
    omega = ellipse_to_world(frame, q)
    disk_point = back_project(frame, q)
    return MapSample(
        q=q,
        omega=omega,
        pdf=1.0 / frame.omega,
        disk_point=disk_point,
        technique=technique,
        newton_iterations=iterations,
    )


def pdf_solid_angle(frame: SphericalEllipseFrame, omega: ArrayLike) -> float:
    """Solid-angle pdf of every map: 1/Omega_D inside the subtended region.

    Membership is decided in world space by intersecting the ray with the
    disk, deliberately not reusing the ellipse-coordinate membership test.
    """
    if ray_disk_hit(frame.light, frame.origin, omega):
        return 1.0 / frame.omega
    return 0.0


# --------------------------------------------------------------------------
# Batch samplers: node-table bracketing + Gauss-Legendre bridge Newton.

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(7)
_NODE_COUNT = 513


def _frame_cache(frame: SphericalEllipseFrame) -> dict:
    cache = getattr(frame, "_map_cache", None)
    if cache is None:
        cache = {}
        frame._map_cache = cache
    return cache


def _parallel_nodes(frame: SphericalEllipseFrame) -> tuple[NDArray, NDArray]:
    cache = _frame_cache(frame)
    if "parallel" not in cache:
        phis = np.linspace(-frame.beta, frame.beta, _NODE_COUNT)
        half = omega_parallel_positive(frame, frame.beta)
        vals = half + np.sign(phis) * omega_parallel_positive(frame, np.abs(phis))
        vals[0] = 0.0
        vals[-1] = frame.omega
        cache["parallel"] = (phis, np.maximum.accumulate(vals))
    return cache["parallel"]


def _radial_nodes(frame: SphericalEllipseFrame) -> tuple[NDArray, NDArray]:
    cache = _frame_cache(frame)
    if "radial" not in cache:
        phis = np.linspace(0.0, 0.5 * math.pi, _NODE_COUNT)
        vals = np.asarray(omega_radial(frame, phis), dtype=np.float64)
        vals[0] = 0.0
        cache["radial"] = (phis, np.maximum.accumulate(vals))
    return cache["radial"]


def _bridge(
    integrand: Callable[[NDArray], NDArray], start: NDArray, x: NDArray
) -> NDArray[np.float64]:
    half = 0.5 * (x - start)
    mid = 0.5 * (x + start)
    pts = mid[:, None] + half[:, None] * _GL_NODES[None, :]
    return half * (integrand(pts) @ _GL_WEIGHTS)


def _batch_invert(
    targets: NDArray[np.float64],
    nodes: NDArray[np.float64],
    node_vals: NDArray[np.float64],
    integrand: Callable[[NDArray], NDArray],
    tol_abs: float,
    max_iterations: int,
    label: str,
) -> tuple[NDArray[np.float64], NDArray[np.intp]]:
    j = np.searchsorted(node_vals, targets, side="right") - 1
    j = np.clip(j, 0, len(nodes) - 2)
    lo = nodes[j]
    hi = nodes[j + 1]
    v_lo = node_vals[j]
    v_hi = node_vals[j + 1]
    frac = np.clip((targets - v_lo) / np.maximum(v_hi - v_lo, 1e-300), 0.0, 1.0)
    x = lo + (hi - lo) * frac
    b_lo = lo.copy()
    b_hi = hi.copy()
    iters = np.zeros(targets.shape, dtype=np.intp)
    active = np.ones(targets.shape, dtype=bool)
    for it in range(max_iterations + 1):
        err = v_lo + _bridge(integrand, lo, x) - targets
        newly_done = active & (np.abs(err) <= tol_abs)
        active &= ~newly_done
        if not np.any(active):
            break
        if it == max_iterations:
            raise NoConvergence(f"{label} batch inversion left lanes unconverged")
        below = active & (err < 0.0)
        above = active & (err > 0.0)
        b_lo = np.where(below, np.maximum(b_lo, x), b_lo)
        b_hi = np.where(above, np.minimum(b_hi, x), b_hi)
        deriv = integrand(x[:, None])[:, 0]
        with np.errstate(divide="ignore", invalid="ignore"):
            x_new = x - err / deriv
        midpoint = 0.5 * (b_lo + b_hi)
        bad = (np.abs(deriv) < 1e-14) | ~np.isfinite(x_new)
        bad |= (x_new <= b_lo) | (x_new >= b_hi)
        x_new = np.where(bad, midpoint, x_new)
        x = np.where(active, x_new, x)
        iters[active] = it + 1
    return x, iters


def sample_parallel_batch(
    frame: SphericalEllipseFrame,
    eps: NDArray[np.float64],
    cfg: NewtonConfig = DEFAULT_NEWTON,
) -> tuple[NDArray, NDArray, NDArray, NDArray]:
    """Vectorized parallel map over an (N, 2) unit-square array.

    Returns (q, omega, pdf, newton_iterations); ``q`` is in ellipse-frame
    coordinates and ``omega`` in world space.
    """
    eps = np.asarray(eps, dtype=np.float64)
    nodes, vals = _parallel_nodes(frame)
    targets = np.clip(eps[:, 0], 0.0, 1.0) * frame.omega

    def integrand(phi: NDArray) -> NDArray:
        return 2.0 * np.asarray(h_parallel(frame, phi), dtype=np.float64)

    phi, iters = _batch_invert(
        targets, nodes, vals, integrand, cfg.tol * frame.omega, cfg.max_iterations, "parallel"
    )
    h = (2.0 * np.clip(eps[:, 1], 0.0, 1.0) - 1.0) * np.asarray(
        h_parallel(frame, phi), dtype=np.float64
    )
    rho = np.sqrt(np.maximum(1.0 - h * h, 0.0))
    q = np.stack([h, rho * np.sin(phi), rho * np.cos(phi)], axis=1)
    omega = ellipse_to_world(frame, q)
    pdf = np.full(q.shape[0], 1.0 / frame.omega)
    return q, omega, pdf, iters


def sample_radial_batch(
    frame: SphericalEllipseFrame,
    eps: NDArray[np.float64],
    cfg: NewtonConfig = DEFAULT_NEWTON,
) -> tuple[NDArray, NDArray, NDArray, NDArray]:
    """Vectorized direct radial map over an (N, 2) unit-square array."""
    eps = np.asarray(eps, dtype=np.float64)
    e1 = np.minimum(np.clip(eps[:, 0], 0.0, 1.0), np.nextafter(1.0, 0.0))
    quadrant = (e1 * 4.0).astype(np.intp)
    e1p = e1 * 4.0 - quadrant
    e2p = np.clip(eps[:, 1], 0.0, 1.0)
    return _radial_quadrant_batch(frame, quadrant, e1p, e2p, cfg)


def sample_ld_radial_batch(
    frame: SphericalEllipseFrame,
    eps: NDArray[np.float64],
    cfg: NewtonConfig = DEFAULT_NEWTON,
) -> tuple[NDArray, NDArray, NDArray, NDArray]:
    """Vectorized low-distortion radial map over an (N, 2) unit-square array."""
    eps = np.asarray(eps, dtype=np.float64)
    r, theta = concentric_map(eps)
    quadrant = _theta_quadrant(theta)
    e1p = _branch_u(theta, quadrant)
    e2p = 1.0 - r * r
    return _radial_quadrant_batch(frame, quadrant, e1p, e2p, cfg)


def _radial_quadrant_batch(
    frame: SphericalEllipseFrame,
    quadrant: NDArray[np.intp],
    e1p: NDArray[np.float64],
    e2p: NDArray[np.float64],
    cfg: NewtonConfig,
) -> tuple[NDArray, NDArray, NDArray, NDArray]:
    nodes, vals = _radial_nodes(frame)
    quarter = vals[-1]
    targets = e1p * quarter

    def integrand(phi: NDArray) -> NDArray:
        return 1.0 - np.asarray(h_radial(frame, phi), dtype=np.float64)

    phi, iters = _batch_invert(
        targets, nodes, vals, integrand, cfg.tol * quarter, cfg.max_iterations, "radial"
    )
    h_b = np.asarray(h_radial(frame, phi), dtype=np.float64)
    h = (1.0 - e2p) * h_b + e2p
    rho = np.sqrt(np.maximum(1.0 - h * h, 0.0))
    q = np.stack(
        [
            _QUADRANT_SIGN_X[quadrant] * rho * np.cos(phi),
            _QUADRANT_SIGN_Y[quadrant] * rho * np.sin(phi),
            h,
        ],
        axis=1,
    )
    omega = ellipse_to_world(frame, q)
    pdf = np.full(q.shape[0], 1.0 / frame.omega)
    return q, omega, pdf, iters
