"""Disk-light geometry: local frames, spherical-ellipse parameters, back-projection.

An oriented disk seen from a shading point subtends a spherical ellipse on
the unit sphere around that point.  ``build_frames`` constructs two local
frames:

* the disk frame ``R_d`` whose z-axis points from the shading point toward
  the disk plane and whose y-axis carries the in-plane offset of the disk
  center, and
* the ellipse frame ``R_e`` whose z-axis pierces the center of the spherical
  ellipse and whose x-axis coincides with the disk frame's x-axis.

All the ellipse parameters (semi-axes a, b as sines, semi-arcs alpha, beta,
tangent-space semi-axes) are derived here; the subtended solid angle is
filled in through the solid-angle module and cached on the frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray

Vec3 = NDArray[np.float64]

# Scale-invariant cutoff for "shading point sits in the disk plane".
DEGENERACY_TOL = 1e-9
# In-plane offset below this fraction of the radius counts as on-axis.
CIRCULAR_TOL = 1e-9


class DegenerateGeometry(ValueError):
    """The shading point lies (numerically) in the disk's supporting plane."""


class RayParallelToPlane(RuntimeError):
    """A sampled direction failed to point toward the disk plane."""


def _unit(v: ArrayLike, what: str) -> Vec3:
    arr = np.asarray(v, dtype=np.float64).reshape(3)
    norm = float(np.linalg.norm(arr))
    if not np.isfinite(norm) or norm == 0.0:
        raise ValueError(f"{what} must be a finite nonzero 3-vector")
    return arr / norm


@dataclass
class DiskLight:
    """Oriented circular disk emitter.

    Parameters
    ----------
    center : array_like
        Disk center in world coordinates.
    normal : array_like
        Disk plane normal; normalized on construction.
    radius : float
        Disk radius, > 0.
    radiance : float
        Constant emitted radiance.
    double_sided : bool
        Whether the back face emits; the geometry itself is orientation
        agnostic (frames flip the normal toward the shading point), this
        flag is an emission policy consumed by the harness.
    """

    center: Vec3
    normal: Vec3
    radius: float
    radiance: float = 1.0
    double_sided: bool = True

    def __post_init__(self) -> None:
        self.center = np.asarray(self.center, dtype=np.float64).reshape(3)
        self.normal = _unit(self.normal, "disk normal")
        self.radius = float(self.radius)
        self.radiance = float(self.radiance)
        if not np.isfinite(self.radius) or self.radius <= 0.0:
            raise ValueError("disk radius must be positive")

    @property
    def area(self) -> float:
        return math.pi * self.radius * self.radius


@dataclass
class ShadingPoint:
    """Receiver position, with an optional surface normal for shading."""

    position: Vec3
    normal: Vec3 | None = None

    def __post_init__(self) -> None:
        self.position = np.asarray(self.position, dtype=np.float64).reshape(3)
        if self.normal is not None:
            self.normal = _unit(self.normal, "shading normal")


@dataclass
class DiskFrame:
    """Orthonormal frame at the shading point, aligned with the disk.

    ``z_d`` points from the shading point toward the disk plane (so it is
    the flipped disk normal), ``y_d`` carries the in-plane offset of the
    disk center, and ``d`` is the (positive) distance to the plane.
    """

    x_d: Vec3
    y_d: Vec3
    z_d: Vec3
    d: float


@dataclass
class SphericalEllipseFrame:
    """Spherical-ellipse frame plus every derived parameter the maps need.

    The intermediate projected boundary scalars (``yp0``, ``yp1``, ``zp0``,
    ``zp1``, ``y_h``) are retained deliberately: the construction is a
    thicket of sign conventions and white-box tests pin each one.
    """

    x_e: Vec3
    y_e: Vec3
    z_e: Vec3
    a: float
    b: float
    alpha: float
    beta: float
    a_t: float
    b_t: float
    yp0: float
    yp1: float
    zp0: float
    zp1: float
    y_h: float
    circular: bool
    disk_frame: DiskFrame
    origin: Vec3
    light: DiskLight
    omega: float = field(default=math.nan)


def _perpendicular_unit(z: Vec3) -> Vec3:
    # Branchless orthonormal completion (Frisvad-style) for the on-axis
    # case where no in-plane offset direction exists.
    s = math.copysign(1.0, z[2])
    a = -1.0 / (s + z[2])
    b = z[0] * z[1] * a
    return np.array([1.0 + s * z[0] * z[0] * a, s * b, -s * z[0]])


def plane_basis(normal: ArrayLike) -> tuple[Vec3, Vec3]:
    """Deterministic orthonormal basis (e1, e2) of the plane normal to ``normal``."""
    n = _unit(normal, "plane normal")
    e1 = _perpendicular_unit(n)
    e2 = np.cross(n, e1)
    return e1, e2


def build_frames(light: DiskLight, point: ShadingPoint) -> SphericalEllipseFrame:
    """Construct the spherical-ellipse frame for a disk seen from a point.

    Parameters
    ----------
    light : DiskLight
    point : ShadingPoint

    Returns
    -------
    SphericalEllipseFrame
        Fully populated frame with the subtended solid angle cached.

    Raises
    ------
    DegenerateGeometry
        If the shading point lies in the disk plane (zero solid angle).
    """
    o = point.position
    c = light.center
    v = o - c
    side = float(np.dot(light.normal, v))
    if abs(side) / max(float(np.linalg.norm(v)), light.radius) < DEGENERACY_TOL:
        raise DegenerateGeometry(
            "shading point lies in the disk plane; subtended solid angle is zero"
        )
    # Flip the normal toward the shading point so d > 0; emission-side
    # policy is the harness's concern, not the frame's.
    n = light.normal if side > 0.0 else -light.normal
    d = abs(side)
    z_d = -n
    foot = o + d * z_d
    offset = c - foot
    h = float(np.linalg.norm(offset))
    circular = h < CIRCULAR_TOL * light.radius
    if circular:
        y_d = _perpendicular_unit(z_d)
        h = 0.0
    else:
        y_d = offset / h
    x_d = np.cross(y_d, z_d)
    disk_frame = DiskFrame(x_d=x_d, y_d=y_d, z_d=z_d, d=d)

    r = light.radius
    y0 = h - r
    y1 = h + r
    s0 = math.hypot(d, y0)
    s1 = math.hypot(d, y1)
    yp0 = y0 / s0
    zp0 = d / s0
    yp1 = y1 / s1
    zp1 = d / s1
    yhp = 0.5 * (yp0 + yp1)
    zhp = 0.5 * (zp0 + zp1)
    y_h = yhp * d / zhp
    r_h = math.sqrt(max(r * r - (h - y_h) ** 2, 0.0))
    a = r_h / math.sqrt(r_h * r_h + y_h * y_h + d * d)
    b = 0.5 * math.hypot(yp1 - yp0, zp1 - zp0)
    b = min(b, a)  # equality holds on-axis; roundoff must not flip the order

    sn = math.hypot(yhp, zhp)
    sy = yhp / sn
    sz = zhp / sn
    z_e = sy * y_d + sz * z_d
    x_e = x_d
    y_e = np.cross(z_e, x_e)

    alpha = math.asin(min(a, 1.0))
    beta = math.asin(min(b, 1.0))
    frame = SphericalEllipseFrame(
        x_e=x_e,
        y_e=y_e,
        z_e=z_e,
        a=a,
        b=b,
        alpha=alpha,
        beta=beta,
        a_t=a / math.sqrt(max(1.0 - a * a, 1e-300)),
        b_t=b / math.sqrt(max(1.0 - b * b, 1e-300)),
        yp0=yp0,
        yp1=yp1,
        zp0=zp0,
        zp1=zp1,
        y_h=y_h,
        circular=circular,
        disk_frame=disk_frame,
        origin=o.copy(),
        light=light,
    )
    from disklight import solid_angle  # deferred: solid_angle imports this module

    frame.omega = solid_angle.total_solid_angle(frame)
    if not (0.0 < frame.omega < 2.0 * math.pi):
        raise DegenerateGeometry(
            f"computed solid angle {frame.omega} outside (0, 2*pi); geometry is ill-posed"
        )
    return frame


def ellipse_to_world(frame: SphericalEllipseFrame, q: ArrayLike) -> Vec3:
    """Rotate a direction from ellipse-frame coordinates into world space."""
    q = np.asarray(q, dtype=np.float64)
    return q[..., 0, None] * frame.x_e + q[..., 1, None] * frame.y_e + q[..., 2, None] * frame.z_e


def world_to_ellipse(frame: SphericalEllipseFrame, w: ArrayLike) -> Vec3:
    """Rotate a world-space direction into ellipse-frame coordinates."""
    w = np.asarray(w, dtype=np.float64)
    return np.stack(
        [np.dot(w, frame.x_e), np.dot(w, frame.y_e), np.dot(w, frame.z_e)], axis=-1
    )


def direction_to_disk_point(
    frame: SphericalEllipseFrame,
    diskframe: DiskFrame,
    point: ShadingPoint,
    q: ArrayLike,
) -> Vec3:
    """Back-project an ellipse-frame direction onto the disk's plane.

    Parameters
    ----------
    frame, diskframe, point
        The frames and shading point produced together by ``build_frames``.
    q : array_like
        Unit direction(s) in ellipse-frame coordinates, shape (3,) or (N, 3).

    Returns
    -------
    ndarray
        World-space intersection of the ray from the shading point with the
        disk plane, same leading shape as ``q``.

    Raises
    ------
    RayParallelToPlane
        If a direction does not point toward the plane.  Cannot happen for
        directions inside the spherical ellipse; it flags an internal
        invariant violation rather than a user error.
    """
    w = ellipse_to_world(frame, q)
    t_z = np.dot(w, diskframe.z_d)
    if np.any(t_z <= 0.0):
        raise RayParallelToPlane("direction does not point toward the disk plane")
    scale = diskframe.d / t_z
    return point.position + np.expand_dims(scale, -1) * w


def back_project(frame: SphericalEllipseFrame, q: ArrayLike) -> Vec3:
    """``direction_to_disk_point`` using the frames embedded in ``frame``."""
    return direction_to_disk_point(
        frame, frame.disk_frame, ShadingPoint(frame.origin), q
    )


def ray_disk_hit(light: DiskLight, origin: ArrayLike, direction: ArrayLike) -> bool:
    """Test whether a ray from ``origin`` along ``direction`` hits the disk."""
    origin = np.asarray(origin, dtype=np.float64)
    direction = np.asarray(direction, dtype=np.float64)
    denom = float(np.dot(direction, light.normal))
    if abs(denom) < 1e-15:
        return False
    t = float(np.dot(light.center - origin, light.normal)) / denom
    if t <= 0.0:
        return False
    hit = origin + t * direction
    return float(np.linalg.norm(hit - light.center)) <= light.radius


def distance_to_disk(light: DiskLight, points: ArrayLike) -> NDArray[np.float64]:
    """Euclidean distance from ``points`` (shape (..., 3)) to the closed disk.

    Inside the disk's footprint the distance is the plane offset; outside it
    is the hypotenuse of the plane offset and the in-plane overshoot past the
    rim.  Useful for classifying shading points by proximity to the light.
    """
    points = np.asarray(points, dtype=np.float64)
    rel = points - light.center
    z = rel @ light.normal
    in_plane = rel - z[..., None] * light.normal
    rho = np.sqrt(np.einsum("...i,...i->...", in_plane, in_plane))
    excess = np.maximum(rho - light.radius, 0.0)
    return np.sqrt(z * z + excess * excess)


def ray_disk_hit_batch(
    light: DiskLight, origin: ArrayLike, directions: ArrayLike
) -> NDArray[np.bool_]:
    """Vectorized ``ray_disk_hit`` for directions of shape (N, 3)."""
    origin = np.asarray(origin, dtype=np.float64)
    directions = np.asarray(directions, dtype=np.float64)
    denom = directions @ light.normal
    ok = np.abs(denom) >= 1e-15
    t = np.where(ok, np.dot(light.center - origin, light.normal) / np.where(ok, denom, 1.0), -1.0)
    ok &= t > 0.0
    hits = origin + t[:, None] * directions
    dist2 = np.einsum("ij,ij->i", hits - light.center, hits - light.center)
    return ok & (dist2 <= light.radius * light.radius)
