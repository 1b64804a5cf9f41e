"""Solid angle of a spherical ellipse via two elliptic-integral formulations.

Both formulations express the fractional area swept up to an azimuth angle;
their inverses drive the sampling maps.

* The parallel formulation integrates chord heights along the x_e cylinder
  axis: Omega_p(phi_p) accumulates from -beta to +beta.
* The radial formulation integrates per-quadrant from the ellipse center:
  Omega_r(phi_r) accumulates from 0 to pi/2 and a quarter of the total.

Each is validated against adaptive quadrature of its defining integral and
against the other; the two never share elliptic-integral parameters, which
is what makes the cross-check meaningful.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from disklight.elliptic import DomainError, legendre_f, legendre_pi
from disklight.geometry import SphericalEllipseFrame

_RANGE_SLACK = 1e-12


@dataclass(frozen=True)
class ParallelParams:
    """Elliptic-integral parameters of the parallel (chord) formulation."""

    p: float
    m: float
    c_t: float
    n: float

    @classmethod
    def from_frame(cls, frame: SphericalEllipseFrame) -> "ParallelParams":
        a_t = frame.a_t
        b_t = frame.b_t
        return cls(
            p=1.0 / (b_t * b_t),
            m=(a_t * a_t - b_t * b_t) / (a_t * a_t + 1.0),
            c_t=a_t / math.sqrt(1.0 + a_t * a_t),
            n=-(b_t * b_t),
        )


@dataclass(frozen=True)
class RadialParams:
    """Elliptic-integral parameters of the radial (per-quadrant) formulation."""

    n: float
    m: float
    k: float

    @classmethod
    def from_axes(cls, a: float, b: float) -> "RadialParams":
        a2 = a * a
        b2 = b * b
        return cls(
            n=(a2 - b2) / (a2 * (1.0 - b2)),
            m=(a2 - b2) / (1.0 - b2),
            k=b * (1.0 - a2) / (a * math.sqrt(1.0 - b2)),
        )

    @classmethod
    def from_frame(cls, frame: SphericalEllipseFrame) -> "RadialParams":
        return cls.from_axes(frame.a, frame.b)


def _check_range(phi: NDArray, lo: float, hi: float, what: str) -> NDArray:
    if np.any(phi < lo - _RANGE_SLACK) or np.any(phi > hi + _RANGE_SLACK):
        raise DomainError(f"{what} outside [{lo}, {hi}]")
    return np.clip(phi, lo, hi)


def h_parallel(frame: SphericalEllipseFrame, phi_p: ArrayLike) -> float | NDArray[np.float64]:
    """Half-height of the spherical-ellipse chord at azimuth ``phi_p``.

    This is the integrand (up to the factor 2) of the parallel fractional
    area: the cylinder-unrolled ellipse has height ``2 h_parallel(phi_p)``
    above azimuth ``phi_p`` in [-beta, beta].
    """
    phi = np.asarray(phi_p, dtype=np.float64)
    phi = _check_range(phi, -frame.beta, frame.beta, "parallel azimuth")
    par = ParallelParams.from_frame(frame)
    s2 = np.sin(phi) ** 2
    num = np.maximum(1.0 - (par.p + 1.0) * s2, 0.0)
    den = 1.0 - (par.m * par.p + 1.0) * s2
    out = par.c_t * np.sqrt(num / den)
    return float(out) if np.isscalar(phi_p) or np.ndim(phi_p) == 0 else out


def omega_parallel_positive(
    frame: SphericalEllipseFrame, phi_p: ArrayLike
) -> float | NDArray[np.float64]:
    """Fractional area of the half-ellipse from azimuth 0 up to ``phi_p`` >= 0."""
    phi = np.asarray(phi_p, dtype=np.float64)
    phi = _check_range(phi, 0.0, frame.beta, "parallel azimuth")
    par = ParallelParams.from_frame(frame)
    amp = np.arcsin(np.clip(np.tan(phi) / frame.b_t, 0.0, 1.0))
    value = (2.0 * par.c_t / frame.b_t) * (
        (1.0 - par.n) * legendre_pi(par.n, amp, par.m) - legendre_f(amp, par.m)
    )
    out = np.maximum(np.asarray(value, dtype=np.float64), 0.0)
    return float(out) if np.isscalar(phi_p) or np.ndim(phi_p) == 0 else out


def omega_parallel(
    frame: SphericalEllipseFrame, phi_p: ArrayLike
) -> float | NDArray[np.float64]:
    """Fractional area of the ellipse from azimuth -beta up to ``phi_p``.

    Assembled symmetrically: the positive branch evaluated at |phi_p| is
    added to or subtracted from the half-area, so omega_parallel(-beta) = 0,
    omega_parallel(0) = Omega_D/2, omega_parallel(beta) = Omega_D.
    """
    phi = np.asarray(phi_p, dtype=np.float64)
    phi = _check_range(phi, -frame.beta, frame.beta, "parallel azimuth")
    half = omega_parallel_positive(frame, frame.beta)
    pos = omega_parallel_positive(frame, np.abs(phi))
    out = half + np.sign(phi) * pos
    return float(out) if np.isscalar(phi_p) or np.ndim(phi_p) == 0 else out


def ellipse_radius_from_axes(a: float, b: float, phi_r: ArrayLike) -> float | NDArray[np.float64]:
    """Planar elliptical radius at polar angle ``phi_r`` for semi-axes (a, b)."""
    phi = np.asarray(phi_r, dtype=np.float64)
    out = a * b / np.sqrt((a * np.sin(phi)) ** 2 + (b * np.cos(phi)) ** 2)
    return float(out) if np.isscalar(phi_r) or np.ndim(phi_r) == 0 else out


def ellipse_radius(frame: SphericalEllipseFrame, phi_r: ArrayLike) -> float | NDArray[np.float64]:
    """Elliptical radius of the (parallel-projected) ellipse at polar angle ``phi_r``."""
    return ellipse_radius_from_axes(frame.a, frame.b, phi_r)


def h_radial(frame: SphericalEllipseFrame, phi_r: ArrayLike) -> float | NDArray[np.float64]:
    """Altitude (z_e-coordinate) of the spherical-ellipse boundary at ``phi_r``."""
    r = np.asarray(ellipse_radius(frame, phi_r), dtype=np.float64)
    out = np.sqrt(np.maximum(1.0 - r * r, 0.0))
    return float(out) if np.isscalar(phi_r) or np.ndim(phi_r) == 0 else out


def omega_radial_from_axes(a: float, b: float, phi_r: ArrayLike) -> float | NDArray[np.float64]:
    """Radial fractional area for bare semi-axes (a, b), both sines in (0, 1).

    The table builder evaluates rows at synthetic eccentricities that no
    concrete disk produced, hence this axes-level entry point; frames go
    through ``omega_radial``.
    """
    phi = np.asarray(phi_r, dtype=np.float64)
    phi = _check_range(phi, 0.0, 0.5 * math.pi, "radial azimuth")
    rad = RadialParams.from_axes(a, b)
    ratio = (a / b) * math.sqrt((1.0 - b * b) / (1.0 - a * a))  # tan(alpha)/tan(beta)
    at_end = phi >= 0.5 * math.pi
    safe = np.where(at_end, 0.0, phi)
    amp = np.where(
        at_end,
        0.5 * math.pi,
        np.arctan(ratio * np.tan(safe)),
    )
    out = phi - rad.k * np.asarray(legendre_pi(rad.n, amp, rad.m), dtype=np.float64)
    out = np.maximum(out, 0.0)
    return float(out) if np.isscalar(phi_r) or np.ndim(phi_r) == 0 else out


def omega_radial(frame: SphericalEllipseFrame, phi_r: ArrayLike) -> float | NDArray[np.float64]:
    """Fractional area of one ellipse quadrant swept from 0 up to ``phi_r``.

    ``omega_radial(pi/2)`` is a quarter of the total solid angle.  The
    elliptic amplitude is ``atan((a_t/b_t) tan(phi_r))`` with the removable
    endpoint handled by branch, never through ``tan(pi/2)``.
    """
    return omega_radial_from_axes(frame.a, frame.b, phi_r)


def inside_ellipse(frame: SphericalEllipseFrame, q: ArrayLike) -> bool | NDArray[np.bool_]:
    """Exact spherical-ellipse membership of direction(s) in ellipse-frame coords.

    A direction is inside iff it points into the upper hemisphere and its
    parallel projection lands inside the planar ellipse with semi-axes
    (a, b); this is the same boundary ``ellipse_radius`` parameterizes.
    """
    arr = np.asarray(q, dtype=np.float64)
    x = arr[..., 0]
    y = arr[..., 1]
    z = arr[..., 2]
    inside = (z > 0.0) & ((x / frame.a) ** 2 + (y / frame.b) ** 2 <= 1.0)
    return bool(inside) if arr.ndim == 1 else inside


def total_solid_angle(frame: SphericalEllipseFrame) -> float:
    """Total subtended solid angle, cached on the frame after first use."""
    if math.isnan(frame.omega):
        frame.omega = 4.0 * omega_radial(frame, 0.5 * math.pi)
    return frame.omega
