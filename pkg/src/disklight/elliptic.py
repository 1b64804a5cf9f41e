"""Carlson symmetric elliptic integrals and the Legendre forms built on them.

The two Carlson kernels (RF and RJ) are evaluated by the duplication
recurrence: each step replaces the arguments by ``(arg + lambda) / 4`` which
quarters their relative spread, and once the spread is below tolerance a
fifth-order Taylor tail finishes the job.  Everything accepts scalars or
arrays and broadcasts like a numpy ufunc.

Incomplete Legendre integrals are thin assemblies on top of the kernels:

    F(phi | m)    = sin(phi) * RF(cos^2 phi, 1 - m sin^2 phi, 1)
    Pi(n; phi | m) = F(phi | m)
                   + (n/3) sin^3(phi) * RJ(cos^2 phi, 1 - m sin^2 phi, 1,
                                           1 - n sin^2 phi)

using the "parameter" convention (m = k^2).
"""

from __future__ import annotations

import numpy as np
from numpy.typing import ArrayLike, NDArray


class DomainError(ValueError):
    """An argument lies outside the integral's real domain."""


# Stop the duplication loop once the relative spread of the arguments is
# below this; the Taylor tail then contributes ~spread^3 of relative error.
_SPREAD_TOL = 1e-14
_MAX_DUPLICATIONS = 64


def _as_float_arrays(*args: ArrayLike) -> list[NDArray[np.float64]]:
    arrays = [np.asarray(a, dtype=np.float64) for a in args]
    broadcast = np.broadcast_arrays(*arrays)
    return [np.array(b) for b in broadcast]


def _return_like(out: NDArray[np.float64], *inputs: ArrayLike) -> float | NDArray[np.float64]:
    if all(np.isscalar(a) or np.ndim(a) == 0 for a in inputs):
        return float(out)
    return out


def _check(ok: NDArray[np.bool_] | bool, message: str) -> None:
    if not np.all(ok):
        raise DomainError(message)


def _rf_core(x: NDArray, y: NDArray, z: NDArray) -> NDArray[np.float64]:
    """Duplication loop for RF; arguments are validated, broadcast arrays."""
    xm, ym, zm = x.copy(), y.copy(), z.copy()
    for _ in range(_MAX_DUPLICATIONS):
        mu = (xm + ym + zm) / 3.0
        spread = np.maximum(np.abs(xm - mu), np.maximum(np.abs(ym - mu), np.abs(zm - mu)))
        if np.all(spread <= _SPREAD_TOL * mu):
            break
        sx, sy, sz = np.sqrt(xm), np.sqrt(ym), np.sqrt(zm)
        lam = sx * (sy + sz) + sy * sz
        xm = 0.25 * (xm + lam)
        ym = 0.25 * (ym + lam)
        zm = 0.25 * (zm + lam)
    else:
        raise RuntimeError("RF duplication failed to contract in 64 iterations")
    mu = (xm + ym + zm) / 3.0
    dx = (mu - xm) / mu
    dy = (mu - ym) / mu
    dz = (mu - zm) / mu
    e2 = dx * dy - dz * dz
    e3 = dx * dy * dz
    return (1.0 + (e2 / 24.0 - 0.1 - 3.0 * e3 / 44.0) * e2 + e3 / 14.0) / np.sqrt(mu)


def _rc_core(x: NDArray, y: NDArray) -> NDArray[np.float64]:
    """RC(x, y) = RF(x, y, y) with the Cauchy principal value for y < 0."""
    x = x.copy()
    y = y.copy()
    scale = np.ones_like(x)
    neg = y < 0.0
    if np.any(neg):
        xn = x[neg]
        yn = y[neg]
        scale[neg] = np.sqrt(xn / (xn - yn))
        x[neg] = xn - yn
        y[neg] = -yn
    return scale * _rf_core(x, y, y.copy())


def _rj_core(x: NDArray, y: NDArray, z: NDArray, p: NDArray) -> NDArray[np.float64]:
    """Duplication loop for RJ with p > 0 everywhere (validated upstream)."""
    xm, ym, zm, pm = x.copy(), y.copy(), z.copy(), p.copy()
    total = np.zeros_like(xm)
    fac = np.ones_like(xm)
    for _ in range(_MAX_DUPLICATIONS):
        mu = (xm + ym + zm + 2.0 * pm) / 5.0
        spread = np.maximum(
            np.maximum(np.abs(xm - mu), np.abs(ym - mu)),
            np.maximum(np.abs(zm - mu), np.abs(pm - mu)),
        )
        if np.all(spread <= _SPREAD_TOL * mu):
            break
        sx, sy, sz = np.sqrt(xm), np.sqrt(ym), np.sqrt(zm)
        lam = sx * (sy + sz) + sy * sz
        alpha = (pm * (sx + sy + sz) + sx * sy * sz) ** 2
        beta = pm * (pm + lam) ** 2
        total = total + fac * _rc_core(alpha, beta)
        fac = fac * 0.25
        xm = 0.25 * (xm + lam)
        ym = 0.25 * (ym + lam)
        zm = 0.25 * (zm + lam)
        pm = 0.25 * (pm + lam)
    else:
        raise RuntimeError("RJ duplication failed to contract in 64 iterations")
    mu = (xm + ym + zm + 2.0 * pm) / 5.0
    dx = (mu - xm) / mu
    dy = (mu - ym) / mu
    dz = (mu - zm) / mu
    dp = (mu - pm) / mu
    ea = dx * (dy + dz) + dy * dz
    eb = dx * dy * dz
    ec = dp * dp
    ed = ea - 3.0 * ec
    ee = eb + 2.0 * dp * (ea - ec)
    series = (
        1.0
        + ed * (-3.0 / 14.0 + (9.0 / 88.0) * ed - (9.0 / 52.0) * ee)
        + eb * (1.0 / 6.0 + dp * (-6.0 / 22.0 + dp * (3.0 / 26.0)))
        + dp * ea * (1.0 / 3.0 - dp * 3.0 / 22.0)
        - (1.0 / 3.0) * dp * ec
    )
    return 3.0 * total + fac * series / (mu * np.sqrt(mu))


def carlson_rf(x: ArrayLike, y: ArrayLike, z: ArrayLike) -> float | NDArray[np.float64]:
    """Symmetric integral RF(x, y, z) = (1/2) int_0^inf dt / sqrt((t+x)(t+y)(t+z)).

    Parameters
    ----------
    x, y, z : array_like
        Nonnegative, finite, with at most one of the three equal to zero.
        Scalars and arrays broadcast together.

    Returns
    -------
    float or ndarray
        RF evaluated elementwise; a scalar when all inputs are scalars.
    """
    xa, ya, za = _as_float_arrays(x, y, z)
    _check(np.isfinite(xa) & np.isfinite(ya) & np.isfinite(za), "RF arguments must be finite")
    _check((xa >= 0.0) & (ya >= 0.0) & (za >= 0.0), "RF arguments must be nonnegative")
    zeros = (xa == 0.0).astype(int) + (ya == 0.0).astype(int) + (za == 0.0).astype(int)
    _check(zeros <= 1, "RF allows at most one zero argument")
    return _return_like(_rf_core(xa, ya, za), x, y, z)


def carlson_rj(
    x: ArrayLike, y: ArrayLike, z: ArrayLike, p: ArrayLike
) -> float | NDArray[np.float64]:
    """Symmetric integral RJ(x, y, z, p).

    RJ(x, y, z, p) = (3/2) int_0^inf dt / ((t+p) sqrt((t+x)(t+y)(t+z))).

    Parameters
    ----------
    x, y, z : array_like
        Nonnegative, finite, with at most one of the three equal to zero.
    p : array_like
        Nonzero and finite.  For p < 0 the Cauchy principal value is
        returned, computed through the standard shift to a positive
        fourth argument plus an RC/RF correction.

    Returns
    -------
    float or ndarray
        RJ evaluated elementwise; a scalar when all inputs are scalars.
    """
    xa, ya, za, pa = _as_float_arrays(x, y, z, p)
    _check(
        np.isfinite(xa) & np.isfinite(ya) & np.isfinite(za) & np.isfinite(pa),
        "RJ arguments must be finite",
    )
    _check((xa >= 0.0) & (ya >= 0.0) & (za >= 0.0), "RJ arguments must be nonnegative")
    zeros = (xa == 0.0).astype(int) + (ya == 0.0).astype(int) + (za == 0.0).astype(int)
    _check(zeros <= 1, "RJ allows at most one zero argument")
    _check(pa != 0.0, "RJ requires a nonzero fourth argument")

    out = np.empty_like(xa)
    pos = pa > 0.0
    if np.any(pos):
        out[pos] = _rj_core(xa[pos], ya[pos], za[pos], pa[pos])
    if np.any(~pos):
        # Principal value: sort the first three arguments, shift p across
        # zero, and correct with RC and RF terms.
        xs = np.minimum(np.minimum(xa[~pos], ya[~pos]), za[~pos])
        zs = np.maximum(np.maximum(xa[~pos], ya[~pos]), za[~pos])
        ys = xa[~pos] + ya[~pos] + za[~pos] - xs - zs
        pn = pa[~pos]
        a = 1.0 / (ys - pn)
        b = a * (zs - ys) * (ys - xs)
        pt = ys + b
        rho = xs * zs / ys
        tau = pn * pt / ys
        rcx = _rc_core(rho, tau)
        out[~pos] = a * (b * _rj_core(xs, ys, zs, pt) + 3.0 * (rcx - _rf_core(xs, ys, zs)))
    return _return_like(out, x, y, z, p)


# Slack accepted on the trig-derived quantities so values that sit on a
# domain edge after roundoff (phi from asin, m from a difference of squares)
# do not trip the validation.
_EDGE_SLACK = 1e-9


def _angle_pieces(phi: NDArray, m: NDArray) -> tuple[NDArray, NDArray, NDArray]:
    s = np.clip(np.sin(phi), -1.0, 1.0)
    c2 = np.clip(1.0 - s * s, 0.0, 1.0)
    one_minus_ms2 = 1.0 - m * s * s
    return s, c2, one_minus_ms2


def legendre_f(phi: ArrayLike, m: ArrayLike) -> float | NDArray[np.float64]:
    """Incomplete elliptic integral of the first kind, parameter convention.

    F(phi | m) = int_0^phi dtheta / sqrt(1 - m sin^2 theta)

    Parameters
    ----------
    phi : array_like
        Amplitude in [0, pi/2].
    m : array_like
        Parameter (the squared modulus) in [0, 1).

    Returns
    -------
    float or ndarray
    """
    pa, ma = _as_float_arrays(phi, m)
    _check(np.isfinite(pa) & np.isfinite(ma), "F arguments must be finite")
    _check((pa >= -_EDGE_SLACK) & (pa <= np.pi / 2.0 + _EDGE_SLACK), "F amplitude outside [0, pi/2]")
    _check((ma >= -_EDGE_SLACK) & (ma < 1.0), "F parameter outside [0, 1)")
    pa = np.clip(pa, 0.0, np.pi / 2.0)
    ma = np.clip(ma, 0.0, 1.0)
    s, c2, y = _angle_pieces(pa, ma)
    out = s * _rf_core(c2, y, np.ones_like(c2))
    return _return_like(out, phi, m)


def legendre_pi(n: ArrayLike, phi: ArrayLike, m: ArrayLike) -> float | NDArray[np.float64]:
    """Incomplete elliptic integral of the third kind, parameter convention.

    Pi(n; phi | m) = int_0^phi dtheta / ((1 - n sin^2 theta) sqrt(1 - m sin^2 theta))

    Parameters
    ----------
    n : array_like
        Characteristic; 1 - n sin^2(phi) must stay positive over the range.
        Negative characteristics are fine (the disk maps use them).
    phi : array_like
        Amplitude in [0, pi/2].
    m : array_like
        Parameter in [0, 1).

    Returns
    -------
    float or ndarray
    """
    na, pa, ma = _as_float_arrays(n, phi, m)
    _check(np.isfinite(na) & np.isfinite(pa) & np.isfinite(ma), "Pi arguments must be finite")
    _check((pa >= -_EDGE_SLACK) & (pa <= np.pi / 2.0 + _EDGE_SLACK), "Pi amplitude outside [0, pi/2]")
    _check((ma >= -_EDGE_SLACK) & (ma < 1.0), "Pi parameter outside [0, 1)")
    pa = np.clip(pa, 0.0, np.pi / 2.0)
    ma = np.clip(ma, 0.0, 1.0)
    s, c2, y = _angle_pieces(pa, ma)
    pterm = 1.0 - na * s * s
    _check(pterm > 0.0, "Pi characteristic reaches its pole inside the range")
    out = s * _rf_core(c2, y, np.ones_like(c2))
    if np.any(na != 0.0):
        # The characteristic term vanishes identically where n == 0, so the
        # unconditional add keeps Pi(0; phi | m) == F(phi | m) bit-exact.
        out = out + (na / 3.0) * s**3 * _rj_core(c2, y, np.ones_like(c2), pterm)
    return _return_like(out, n, phi, m)
