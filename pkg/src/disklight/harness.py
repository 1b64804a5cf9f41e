"""Desk-scale direct-lighting Monte Carlo harness.

One emitting disk over a Lambertian ground plane, a fixed camera, and a
per-pixel estimator that can drive every sampler in the package plus the
uniform-area and cap-rejection baselines, with per-technique error and
cost accounting against a cached high-sample reference image.

Determinism contract: every random draw comes from a counter-based stream
keyed by (seed, purpose, trial, pixel index), so serial and multi-threaded
renders of the same configuration produce bit-identical images.
"""

from __future__ import annotations

import hashlib
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from numpy.typing import ArrayLike, NDArray

from disklight.geometry import (
    DegenerateGeometry,
    DiskLight,
    ShadingPoint,
    SphericalEllipseFrame,
    build_frames,
    ellipse_to_world,
)
from disklight.maps import (
    NoConvergence,
    sample_ld_radial_batch,
    sample_parallel_batch,
    sample_radial_batch,
)
from disklight.oracles import sample_area_batch, sample_cap_rejection_batch
from disklight.tabulation import (
    RadialTable,
    TabSampleStats,
    build_table,
    sample_tabulated_batch,
)

Vec3 = NDArray[np.float64]

TECHNIQUES = ("area", "parallel", "radial", "ld-radial", "tab-radial", "oracle")
PATTERNS = ("independent", "jittered", "ld")

REFERENCE_SPP = 1 << 16
REFERENCE_SEED = 271828
DEFAULT_FAR_FIELD_THRESHOLD = 1e-3

_MASK64 = (1 << 64) - 1
# Stream purposes keep independent uses of the same (seed, pixel, trial)
# from ever touching the same Philox counter sequence.
_PURPOSE_PATTERN = 1
_PURPOSE_SCRAMBLE = 2
_PURPOSE_RETRY = 3
_PURPOSE_ORACLE = 4


def _unit(v: ArrayLike, what: str) -> Vec3:
    arr = np.asarray(v, dtype=np.float64).reshape(3)
    n = float(np.linalg.norm(arr))
    if n == 0.0 or not math.isfinite(n):
        raise ValueError(f"{what} must be a nonzero finite vector")
    return arr / n


# --------------------------------------------------------------------------
# Scene description.


@dataclass(frozen=True)
class Camera:
    """Pinhole or orthographic camera with one primary ray per pixel center."""

    position: Vec3
    look: Vec3
    up: Vec3
    width: int = 64
    height: int = 64
    kind: str = "pinhole"
    fov_y: float = 60.0  # vertical field of view in degrees (pinhole)
    half_width: float = 2.0  # image half-extents in scene units (orthographic)
    half_height: float = 2.0

    def __post_init__(self) -> None:
        if self.kind not in ("pinhole", "orthographic"):
            raise ValueError(f"unknown camera kind {self.kind!r}")
        if self.width < 1 or self.height < 1:
            raise ValueError("camera resolution must be at least 1x1")
        object.__setattr__(self, "position", np.asarray(self.position, dtype=np.float64).reshape(3))
        object.__setattr__(self, "look", _unit(self.look, "camera look"))
        object.__setattr__(self, "up", _unit(self.up, "camera up"))
        right = np.cross(self.look, self.up)
        n = float(np.linalg.norm(right))
        if n < 1e-12:
            raise ValueError("camera look and up are collinear")
        right /= n
        object.__setattr__(self, "_right", right)
        object.__setattr__(self, "_up_ortho", np.cross(right, self.look))

    def primary_ray(self, ix: int, iy: int) -> tuple[Vec3, Vec3]:
        """Ray through the center of pixel (ix, iy); iy = 0 is the top row."""
        sx = 2.0 * (ix + 0.5) / self.width - 1.0
        sy = 1.0 - 2.0 * (iy + 0.5) / self.height
        if self.kind == "pinhole":
            t = math.tan(math.radians(self.fov_y) * 0.5)
            aspect = self.width / self.height
            d = (
                self.look
                + (sx * t * aspect) * self._right
                + (sy * t) * self._up_ortho
            )
            return self.position, d / np.linalg.norm(d)
        origin = (
            self.position
            + (sx * self.half_width) * self._right
            + (sy * self.half_height) * self._up_ortho
        )
        return origin, self.look


@dataclass(frozen=True)
class Scene:
    """Ground plane + one disk light + camera; no occluders."""

    plane_point: Vec3
    plane_normal: Vec3
    albedo: float
    light: DiskLight
    camera: Camera

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "plane_point", np.asarray(self.plane_point, dtype=np.float64).reshape(3)
        )
        object.__setattr__(self, "plane_normal", _unit(self.plane_normal, "plane normal"))
        if not 0.0 <= self.albedo <= 1.0:
            raise ValueError(f"albedo {self.albedo} outside [0, 1]")

    def fingerprint(self) -> str:
        """Canonical text encoding of every field, for cache keys."""

        def v(x) -> str:
            return " ".join(f"{float(c):.17g}" for c in np.atleast_1d(x))

        cam = self.camera
        parts = [
            f"plane {v(self.plane_point)} {v(self.plane_normal)} {self.albedo:.17g}",
            f"light {v(self.light.center)} {v(self.light.normal)} "
            f"{self.light.radius:.17g} {self.light.radiance:.17g} "
            f"{int(self.light.double_sided)}",
            f"camera {cam.kind} {v(cam.position)} {v(cam.look)} {v(cam.up)} "
            f"{cam.fov_y:.17g} {cam.half_width:.17g} {cam.half_height:.17g} "
            f"{cam.width} {cam.height}",
        ]
        return "\n".join(parts)


def reference_scene(width: int = 64, height: int = 64) -> Scene:
    """The fixed benchmark scene.

    A unit-radius, double-sided, upright disk light rests on a Lambertian
    ground plane (y = 0, albedo 0.7), touching it at the origin with its
    normal along +z.  A pinhole camera at (0, 2, 6) looks down -z, so the
    image spans the plane from directly below the camera out past the
    light, covering both near-light and far-field shading points.
    """
    light = DiskLight(
        center=np.array([0.0, 1.0, 0.0]),
        normal=np.array([0.0, 0.0, 1.0]),
        radius=1.0,
        radiance=1.0,
        double_sided=True,
    )
    camera = Camera(
        position=np.array([0.0, 2.0, 6.0]),
        look=np.array([0.0, 0.0, -1.0]),
        up=np.array([0.0, 1.0, 0.0]),
        width=width,
        height=height,
        kind="pinhole",
        fov_y=60.0,
    )
    return Scene(
        plane_point=np.zeros(3),
        plane_normal=np.array([0.0, 1.0, 0.0]),
        albedo=0.7,
        light=light,
        camera=camera,
    )


# --------------------------------------------------------------------------
# Scene text files: line-oriented "key = value", '#' comments, unknown keys
# rejected.  Lengths are scene units, angles degrees.

_SCENE_KEYS = (
    "plane_point",
    "plane_normal",
    "albedo",
    "light_center",
    "light_normal",
    "light_radius",
    "light_radiance",
    "light_double_sided",
    "camera",
    "camera_position",
    "camera_look",
    "camera_up",
    "camera_fov_y",
    "camera_half_width",
    "camera_half_height",
    "width",
    "height",
)


def scene_to_text(scene: Scene) -> str:
    def v(x) -> str:
        return " ".join(f"{float(c):.17g}" for c in np.atleast_1d(x))

    cam = scene.camera
    lines = [
        f"plane_point = {v(scene.plane_point)}",
        f"plane_normal = {v(scene.plane_normal)}",
        f"albedo = {scene.albedo:.17g}",
        f"light_center = {v(scene.light.center)}",
        f"light_normal = {v(scene.light.normal)}",
        f"light_radius = {scene.light.radius:.17g}",
        f"light_radiance = {scene.light.radiance:.17g}",
        f"light_double_sided = {'true' if scene.light.double_sided else 'false'}",
        f"camera = {cam.kind}",
        f"camera_position = {v(cam.position)}",
        f"camera_look = {v(cam.look)}",
        f"camera_up = {v(cam.up)}",
        f"camera_fov_y = {cam.fov_y:.17g}",
        f"camera_half_width = {cam.half_width:.17g}",
        f"camera_half_height = {cam.half_height:.17g}",
        f"width = {cam.width}",
        f"height = {cam.height}",
    ]
    return "\n".join(lines) + "\n"


def parse_scene_text(text: str) -> Scene:
    """Parse scene text; keys absent fall back to the reference scene."""
    base = reference_scene()
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"scene line {lineno}: expected 'key = value', got {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        if key not in _SCENE_KEYS:
            raise ValueError(f"scene line {lineno}: unknown key {key!r}")
        values[key] = val.strip()

    def vec(key: str, default: Vec3) -> Vec3:
        if key not in values:
            return default
        parts = values[key].split()
        if len(parts) != 3:
            raise ValueError(f"scene key {key!r}: expected three numbers")
        return np.array([float(p) for p in parts])

    def num(key: str, default: float) -> float:
        return float(values[key]) if key in values else default

    def integer(key: str, default: int) -> int:
        return int(values[key]) if key in values else default

    def flag(key: str, default: bool) -> bool:
        if key not in values:
            return default
        val = values[key].lower()
        if val in ("true", "1", "yes"):
            return True
        if val in ("false", "0", "no"):
            return False
        raise ValueError(f"scene key {key!r}: expected a boolean, got {values[key]!r}")

    kind = values.get("camera", base.camera.kind)
    light = DiskLight(
        center=vec("light_center", base.light.center),
        normal=vec("light_normal", base.light.normal),
        radius=num("light_radius", base.light.radius),
        radiance=num("light_radiance", base.light.radiance),
        double_sided=flag("light_double_sided", base.light.double_sided),
    )
    camera = Camera(
        position=vec("camera_position", base.camera.position),
        look=vec("camera_look", base.camera.look),
        up=vec("camera_up", base.camera.up),
        width=integer("width", base.camera.width),
        height=integer("height", base.camera.height),
        kind=kind,
        fov_y=num("camera_fov_y", base.camera.fov_y),
        half_width=num("camera_half_width", base.camera.half_width),
        half_height=num("camera_half_height", base.camera.half_height),
    )
    return Scene(
        plane_point=vec("plane_point", base.plane_point),
        plane_normal=vec("plane_normal", base.plane_normal),
        albedo=num("albedo", base.albedo),
        light=light,
        camera=camera,
    )


def load_scene(path: str | Path) -> Scene:
    return parse_scene_text(Path(path).read_text())


def save_scene(scene: Scene, path: str | Path) -> None:
    Path(path).write_text(scene_to_text(scene))


# --------------------------------------------------------------------------
# Unit-square sample patterns.


def _stream(seed: int, purpose: int, pixel_index: int, trial: int) -> np.random.Generator:
    stream_id = (
        (int(purpose) & 0xFF) << 56
        | (int(trial) & 0xFFFF) << 40
        | (int(pixel_index) & ((1 << 40) - 1))
    )
    key = np.array([int(seed) & _MASK64, stream_id], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _bit_reverse32(idx: NDArray[np.uint32]) -> NDArray[np.uint32]:
    v = idx.astype(np.uint32)
    v = ((v >> np.uint32(1)) & np.uint32(0x55555555)) | ((v & np.uint32(0x55555555)) << np.uint32(1))
    v = ((v >> np.uint32(2)) & np.uint32(0x33333333)) | ((v & np.uint32(0x33333333)) << np.uint32(2))
    v = ((v >> np.uint32(4)) & np.uint32(0x0F0F0F0F)) | ((v & np.uint32(0x0F0F0F0F)) << np.uint32(4))
    v = ((v >> np.uint32(8)) & np.uint32(0x00FF00FF)) | ((v & np.uint32(0x00FF00FF)) << np.uint32(8))
    return (v >> np.uint32(16)) | (v << np.uint32(16))


def _radical_inverse_base3(idx: NDArray[np.int64]) -> NDArray[np.float64]:
    rem = idx.astype(np.int64).copy()
    out = np.zeros(rem.shape, dtype=np.float64)
    scale = 1.0 / 3.0
    while np.any(rem > 0):
        out += (rem % 3) * scale
        rem //= 3
        scale /= 3.0
    return out


@dataclass(frozen=True)
class SamplePattern:
    """Deterministic generator of unit-square points for one pixel.

    kind:
      independent -- spp i.i.d. uniform points.
      jittered    -- one point per cell of an n x n grid (spp must be n^2).
      ld          -- scrambled radical-inverse pair: base-2 inverse with a
                     per-pixel XOR scramble, base-3 inverse with a per-pixel
                     toroidal shift.
    """

    kind: str = "independent"
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in PATTERNS:
            raise ValueError(f"unknown sample pattern {self.kind!r}")

    def generate(self, spp: int, pixel_index: int = 0, trial: int = 0) -> NDArray[np.float64]:
        if spp < 0:
            raise ValueError("spp must be nonnegative")
        if spp == 0:
            return np.empty((0, 2))
        if self.kind == "independent":
            rng = _stream(self.seed, _PURPOSE_PATTERN, pixel_index, trial)
            return rng.random((spp, 2))
        if self.kind == "jittered":
            n = math.isqrt(spp)
            if n * n != spp:
                raise ValueError(f"jittered pattern needs a square spp, got {spp}")
            rng = _stream(self.seed, _PURPOSE_PATTERN, pixel_index, trial)
            jit = rng.random((spp, 2))
            i, j = np.divmod(np.arange(spp), n)
            return np.stack([(j + jit[:, 0]) / n, (i + jit[:, 1]) / n], axis=1)
        rng = _stream(self.seed, _PURPOSE_SCRAMBLE, pixel_index, trial)
        scramble = np.uint32(rng.integers(0, 1 << 32, dtype=np.uint32))
        shift = rng.random()
        k = np.arange(spp)
        d0 = (_bit_reverse32(k.astype(np.uint32)) ^ scramble).astype(np.float64) * 2.0**-32
        d1 = (_radical_inverse_base3(k) + shift) % 1.0
        return np.stack([d0, d1], axis=1)


# --------------------------------------------------------------------------
# Per-pixel estimator.


@dataclass
class ErrorCounters:
    """Samples degraded to zero contribution, by cause."""

    degenerate: int = 0
    unconverged: int = 0

    def merge(self, other: "ErrorCounters") -> None:
        self.degenerate += other.degenerate
        self.unconverged += other.unconverged


_FRAME_CACHE: dict[str, list] = {}
_FRAME_CACHE_LIMIT = 4

_DEFAULT_TABLE: RadialTable | None = None


def default_table() -> RadialTable:
    """Shared full-resolution table, built once per process."""
    global _DEFAULT_TABLE
    if _DEFAULT_TABLE is None:
        _DEFAULT_TABLE = build_table((1024, 1024))
    return _DEFAULT_TABLE


def _ray_plane_hit(scene: Scene, origin: Vec3, direction: Vec3) -> Vec3 | None:
    denom = float(np.dot(direction, scene.plane_normal))
    if abs(denom) < 1e-12:
        return None
    t = float(np.dot(scene.plane_point - origin, scene.plane_normal)) / denom
    if t <= 1e-9:
        return None
    return origin + t * direction


def scene_frames(scene: Scene) -> list:
    """Per-pixel (hit point, ellipse frame) pairs, cached per scene.

    Entries are (None, None) for rays that miss the plane and (point, None)
    where frame construction degenerates (shading point in the disk plane).
    The list is read-only shared state; renders of any technique reuse it,
    so the per-frame node caches warm up exactly once.
    """
    key = scene.fingerprint()
    cached = _FRAME_CACHE.get(key)
    if cached is not None:
        return cached
    cam = scene.camera
    frames: list = []
    for iy in range(cam.height):
        for ix in range(cam.width):
            origin, direction = cam.primary_ray(ix, iy)
            hit = _ray_plane_hit(scene, origin, direction)
            if hit is None:
                frames.append((None, None))
                continue
            try:
                frame = build_frames(scene.light, ShadingPoint(position=hit))
            except DegenerateGeometry:
                frames.append((hit, None))
                continue
            frames.append((hit, frame))
    if len(_FRAME_CACHE) >= _FRAME_CACHE_LIMIT:
        _FRAME_CACHE.pop(next(iter(_FRAME_CACHE)))
    _FRAME_CACHE[key] = frames
    return frames


def far_field_switch(
    frame: SphericalEllipseFrame,
    requested: str,
    threshold: float = DEFAULT_FAR_FIELD_THRESHOLD,
) -> str:
    """Fall back to uniform area sampling for distant (small) luminaires.

    Below the solid-angle threshold, map inversion spends its effort on a
    region area sampling already covers with near-constant weight, so the
    cheap baseline wins; both estimators stay unbiased, so switching only
    trades cost.
    """
    if frame.omega < threshold:
        return "area"
    return requested


def _facing_mask(light: DiskLight, omega: NDArray[np.float64]) -> NDArray[np.float64]:
    if light.double_sided:
        return np.ones(omega.shape[0])
    # The emitting face is the one the normal leaves; a receiver sees it
    # when the direction toward the disk runs against the normal.
    return np.where(omega @ light.normal < 0.0, 1.0, 0.0)


def _pixel_contributions(
    scene: Scene,
    pixel_index: int,
    technique: str,
    pattern: SamplePattern,
    spp: int,
    trial: int,
    table: RadialTable | None,
    frames: list,
    counters: ErrorCounters,
    reject: TabSampleStats,
    far_field_threshold: float | None,
) -> tuple[NDArray[np.float64], NDArray[np.int64] | None]:
    """Per-sample radiance contributions for one pixel; iters for Newton maps."""
    zeros = np.zeros(spp)
    hit, frame = frames[pixel_index]
    if hit is None:
        return zeros, None
    light = scene.light
    if light.radiance == 0.0 or scene.albedo == 0.0:
        return zeros, None
    if frame is None:
        counters.degenerate += spp
        return zeros, None
    if far_field_threshold is not None and technique != "area":
        technique = far_field_switch(frame, technique, far_field_threshold)

    point = ShadingPoint(position=hit, normal=scene.plane_normal)
    eps = pattern.generate(spp, pixel_index, trial)
    iters: NDArray[np.int64] | None = None

    if technique == "area":
        _, omega, pdf = sample_area_batch(light, point, eps)
        weight = np.where(np.isfinite(pdf) & (pdf > 0.0), 1.0 / pdf, 0.0)
    elif technique == "oracle":
        rng = _stream(pattern.seed, _PURPOSE_ORACLE, pixel_index, trial)
        q = sample_cap_rejection_batch(frame, rng, spp)
        if q.shape[0] < spp:
            counters.unconverged += spp - q.shape[0]
        omega = ellipse_to_world(frame, q)
        weight = np.full(q.shape[0], frame.omega)
    elif technique == "tab-radial":
        rng = _stream(pattern.seed, _PURPOSE_RETRY, pixel_index, trial)
        q, omega, pdf = sample_tabulated_batch(table, frame, eps, rng, stats=reject)
        weight = 1.0 / pdf
    else:
        sampler = {
            "parallel": sample_parallel_batch,
            "radial": sample_radial_batch,
            "ld-radial": sample_ld_radial_batch,
        }[technique]
        try:
            _, omega, pdf, iters = sampler(frame, eps)
        except NoConvergence:
            counters.unconverged += spp
            return zeros, None
        weight = 1.0 / pdf

    cos_o = np.abs(omega @ scene.plane_normal)
    contrib = (
        light.radiance * (scene.albedo / math.pi) * cos_o * _facing_mask(light, omega) * weight
    )
    if contrib.shape[0] < spp:
        contrib = np.concatenate([contrib, np.zeros(spp - contrib.shape[0])])
    return contrib, iters


def estimate_direct(
    scene: Scene,
    pixel: tuple[int, int],
    technique: str,
    pattern: SamplePattern,
    spp: int,
    *,
    table: RadialTable | None = None,
    trial: int = 0,
    counters: ErrorCounters | None = None,
    far_field_threshold: float | None = None,
) -> float:
    """Mean direct-lighting radiance estimate at one pixel.

    Sampler failures (degenerate geometry, non-convergence, cap shortfall)
    degrade to zero-contribution samples counted in ``counters`` rather
    than propagating, so a render never dies on a single bad pixel.
    """
    if technique == "tabulated-radial":
        technique = "tab-radial"
    if technique not in TECHNIQUES:
        raise ValueError(f"unknown technique {technique!r}")
    ix, iy = pixel
    cam = scene.camera
    if not (0 <= ix < cam.width and 0 <= iy < cam.height):
        raise ValueError(f"pixel {pixel} outside {cam.width}x{cam.height}")
    if technique == "tab-radial" and table is None:
        table = default_table()
    if counters is None:
        counters = ErrorCounters()
    contrib, _ = _pixel_contributions(
        scene,
        iy * cam.width + ix,
        technique,
        pattern,
        spp,
        trial,
        table,
        scene_frames(scene),
        counters,
        TabSampleStats(),
        far_field_threshold,
    )
    return float(contrib.mean()) if spp else 0.0


# --------------------------------------------------------------------------
# Full-frame rendering and reporting.


@dataclass
class EstimatorReport:
    """Per-render accounting: error, cost, solver effort, rejection."""

    technique: str
    spp: int
    image: NDArray[np.float64]
    mse: float
    seconds: float
    newton_histogram: NDArray[np.int64]
    reject: TabSampleStats
    counters: ErrorCounters

    @property
    def newton_p50(self) -> float:
        total = int(self.newton_histogram.sum())
        if total == 0:
            return 0.0
        cum = np.cumsum(self.newton_histogram)
        return float(np.searchsorted(cum, (total + 1) // 2))

    @property
    def newton_max(self) -> int:
        nz = np.nonzero(self.newton_histogram)[0]
        return int(nz[-1]) if nz.size else 0


def _render_rows(
    scene: Scene,
    technique: str,
    pattern: SamplePattern,
    spp: int,
    trial: int,
    table: RadialTable | None,
    frames: list,
    rows: range,
) -> tuple[list, NDArray[np.float64]]:
    cam = scene.camera
    out = np.zeros((len(rows), cam.width))
    iter_chunks: list[NDArray[np.int64]] = []
    counters = ErrorCounters()
    reject = TabSampleStats()
    for row_pos, iy in enumerate(rows):
        for ix in range(cam.width):
            contrib, iters = _pixel_contributions(
                scene,
                iy * cam.width + ix,
                technique,
                pattern,
                spp,
                trial,
                table,
                frames,
                counters,
                reject,
                None,
            )
            out[row_pos, ix] = contrib.mean() if spp else 0.0
            if iters is not None:
                iter_chunks.append(iters)
    return [counters, reject, iter_chunks], out


def _render_image(
    scene: Scene,
    technique: str,
    pattern: SamplePattern,
    spp: int,
    *,
    table: RadialTable | None,
    threads: int,
    trial: int,
) -> tuple[NDArray[np.float64], NDArray[np.int64], TabSampleStats, ErrorCounters]:
    cam = scene.camera
    frames = scene_frames(scene)
    image = np.zeros((cam.height, cam.width))
    all_iters: list[NDArray[np.int64]] = []
    counters = ErrorCounters()
    reject = TabSampleStats()

    row_blocks: list[range] = [
        range(start, min(start + 4, cam.height)) for start in range(0, cam.height, 4)
    ]

    def run_block(rows: range):
        return rows, _render_rows(scene, technique, pattern, spp, trial, table, frames, rows)

    if threads <= 1:
        results = [run_block(rows) for rows in row_blocks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run_block, row_blocks))

    # Aggregation order is fixed by block index, not completion order, so
    # thread count cannot change any output bit.
    results.sort(key=lambda item: item[0].start)
    for rows, ((block_counters, block_reject, iter_chunks), block_image) in results:
        image[rows.start : rows.stop] = block_image
        counters.merge(block_counters)
        reject.accepted += block_reject.accepted
        reject.rejected += block_reject.rejected
        all_iters.extend(iter_chunks)

    if all_iters:
        stacked = np.concatenate(all_iters)
        histogram = np.bincount(stacked, minlength=1).astype(np.int64)
    else:
        histogram = np.zeros(1, dtype=np.int64)
    return image, histogram, reject, counters


def mse(image: NDArray[np.float64], reference: NDArray[np.float64]) -> float:
    image = np.asarray(image, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    if image.shape != reference.shape:
        raise ValueError(f"image shape {image.shape} != reference {reference.shape}")
    return float(np.mean((image - reference) ** 2))


def _cache_dir(cache_dir: str | Path | None) -> Path:
    if cache_dir is not None:
        return Path(cache_dir)
    return Path(os.environ.get("DISKLIGHT_CACHE_DIR", ".disklight_cache"))


def reference_image(
    scene: Scene,
    *,
    spp: int = REFERENCE_SPP,
    cache_dir: str | Path | None = None,
    threads: int = 1,
    force: bool = False,
) -> NDArray[np.float64]:
    """Cap-rejection oracle render, cached to disk by scene fingerprint.

    The oracle is uniform in solid angle but shares no code with the maps
    under test, so comparisons against it are not circular.
    """
    directory = _cache_dir(cache_dir)
    key = hashlib.sha256(
        f"{scene.fingerprint()}|oracle|{spp}|{REFERENCE_SEED}".encode()
    ).hexdigest()[:16]
    path = directory / f"reference_{key}.npy"
    cam = scene.camera
    if path.exists() and not force:
        image = np.load(path)
        if image.shape == (cam.height, cam.width):
            return image
    pattern = SamplePattern(kind="independent", seed=REFERENCE_SEED)
    image, _, _, _ = _render_image(
        scene, "oracle", pattern, spp, table=None, threads=threads, trial=0
    )
    directory.mkdir(parents=True, exist_ok=True)
    np.save(path, image)
    return image


def render(
    scene: Scene,
    technique: str,
    pattern: SamplePattern,
    spp: int,
    *,
    table: RadialTable | None = None,
    threads: int = 1,
    reference: NDArray[np.float64] | None = None,
    cache_dir: str | Path | None = None,
    trial: int = 0,
) -> tuple[NDArray[np.float64], EstimatorReport]:
    """Render the full frame with one technique and report error and cost."""
    if technique == "tabulated-radial":
        technique = "tab-radial"
    if technique not in TECHNIQUES:
        raise ValueError(f"unknown technique {technique!r}")
    if technique == "tab-radial" and table is None:
        table = default_table()
    if reference is None:
        reference = reference_image(scene, cache_dir=cache_dir, threads=threads)

    start = time.perf_counter()
    image, histogram, reject, counters = _render_image(
        scene, technique, pattern, spp, table=table, threads=threads, trial=trial
    )
    seconds = time.perf_counter() - start
    report = EstimatorReport(
        technique=technique,
        spp=spp,
        image=image,
        mse=mse(image, reference),
        seconds=seconds,
        newton_histogram=histogram,
        reject=reject,
        counters=counters,
    )
    return image, report


# --------------------------------------------------------------------------
# Diagnostics used by tests and the CLI.


def floor_hits(scene: Scene) -> NDArray[np.float64]:
    """(H, W, 3) ground hit points; NaN rows where the primary ray misses."""
    cam = scene.camera
    out = np.full((cam.height, cam.width, 3), np.nan)
    frames = scene_frames(scene)
    for iy in range(cam.height):
        for ix in range(cam.width):
            hit, _ = frames[iy * cam.width + ix]
            if hit is not None:
                out[iy, ix] = hit
    return out


def pixel_solid_angles(scene: Scene) -> NDArray[np.float64]:
    """(H, W) subtended solid angle per pixel; NaN for miss or degenerate."""
    cam = scene.camera
    out = np.full((cam.height, cam.width), np.nan)
    frames = scene_frames(scene)
    for iy in range(cam.height):
        for ix in range(cam.width):
            _, frame = frames[iy * cam.width + ix]
            if frame is not None:
                out[iy, ix] = frame.omega
    return out


# --------------------------------------------------------------------------
# Image output.


def write_ppm(path: str | Path, image: NDArray[np.float64], gamma: float = 2.2) -> None:
    """Binary P6, 8-bit, gamma-encoded; grayscale images are replicated."""
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim == 2:
        arr = np.repeat(arr[:, :, None], 3, axis=2)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"expected (H, W) or (H, W, 3) image, got {arr.shape}")
    encoded = np.clip(arr, 0.0, 1.0) ** (1.0 / gamma)
    bytes_img = (encoded * 255.0 + 0.5).astype(np.uint8)
    height, width = arr.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{width} {height}\n255\n".encode())
        fh.write(bytes_img.tobytes())


def write_raw_f64(path: str | Path, image: NDArray[np.float64]) -> None:
    """Headerless little-endian float64 dump, planar channel order."""
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim == 3:
        arr = np.moveaxis(arr, 2, 0)
    with open(path, "wb") as fh:
        fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def read_raw_f64(path: str | Path, shape: tuple[int, ...]) -> NDArray[np.float64]:
    data = np.fromfile(path, dtype="<f8")
    return data.reshape(shape)
