"""Command-line front end for the disk-light sampling toolkit.

Subcommands:
  solid-angle  evaluate the subtended solid angle four independent ways
  points       export unit-square samples and their mapped directions/points
  bench        render the benchmark scene per technique and report error/cost
  table        build, write, and verify a radial quantile table

Exit codes: 0 success, 1 input error, 2 numerical-consistency failure.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path

import numpy as np

from disklight.geometry import (
    DegenerateGeometry,
    DiskLight,
    ShadingPoint,
    back_project,
    build_frames,
    ellipse_to_world,
    ray_disk_hit,
    world_to_ellipse,
)
from disklight.harness import (
    PATTERNS,
    TECHNIQUES,
    SamplePattern,
    default_table,
    load_scene,
    reference_image,
    reference_scene,
    render,
    write_ppm,
    write_raw_f64,
    _stream,
)
from disklight.maps import sample_ld_radial, sample_parallel, sample_radial
from disklight.oracles import (
    adaptive_quadrature,
    estimate_solid_angle_mc,
    sample_area,
)
from disklight.solid_angle import h_radial, omega_parallel, omega_radial
from disklight.tabulation import build_table, read_table, sample_tabulated_loop, write_table

_POINT_PURPOSE = 7


def _fmt(x: float) -> str:
    return f"{float(x):.17g}"


class _Parser(argparse.ArgumentParser):
    """Argument parser whose usage errors exit with code 1, not 2."""

    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _vec3(text: str) -> np.ndarray:
    parts = text.replace(",", " ").split()
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected three numbers, got {text!r}")
    return np.array([float(p) for p in parts])


def _int_list(text: str) -> list[int]:
    try:
        return [int(p) for p in text.split(",") if p.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad integer list {text!r}") from exc


def _geometry_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--center", type=_vec3, default=np.array([0.0, 1.5, 1.0]))
    parser.add_argument("--normal", type=_vec3, default=np.array([0.0, 0.0, -1.0]))
    parser.add_argument("--radius", type=float, default=1.0)
    parser.add_argument("--point", type=_vec3, default=np.zeros(3))


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="disklight", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_sa = sub.add_parser("solid-angle", help="evaluate the subtended solid angle")
    _geometry_args(p_sa)
    p_sa.add_argument("--trials", type=int, default=1_000_000)
    p_sa.add_argument("--seed", type=int, default=0)

    p_pts = sub.add_parser("points", help="export mapped sample points as CSV")
    _geometry_args(p_pts)
    p_pts.add_argument("--technique", choices=TECHNIQUES, default="ld-radial")
    p_pts.add_argument("--pattern", choices=PATTERNS, default="independent")
    p_pts.add_argument("--spp", type=int, default=256, help="number of points")
    p_pts.add_argument("--seed", type=int, default=0)
    p_pts.add_argument("--table", type=Path, default=None)
    p_pts.add_argument("--out", type=Path, required=True)

    p_bench = sub.add_parser("bench", help="render the benchmark scene")
    p_bench.add_argument("--scene", type=Path, default=None)
    p_bench.add_argument(
        "--technique",
        default="area,parallel,radial,ld-radial,tab-radial",
        help="comma-separated technique list",
    )
    p_bench.add_argument("--pattern", choices=PATTERNS, default="independent")
    p_bench.add_argument("--spp", type=_int_list, default=[16], help="comma-separated spp list")
    p_bench.add_argument("--seed", type=int, default=0)
    p_bench.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    p_bench.add_argument("--table", type=Path, default=None)
    p_bench.add_argument("--out", type=Path, default=Path("bench"))

    p_tab = sub.add_parser("table", help="build and verify a radial table file")
    p_tab.add_argument("--resolution", type=int, default=1024)
    p_tab.add_argument("--alpha-ref", type=float, default=0.25 * math.pi)
    p_tab.add_argument("--out", type=Path, required=True)

    return parser


# --------------------------------------------------------------------------


def cmd_solid_angle(args: argparse.Namespace) -> int:
    light = DiskLight(center=args.center, normal=args.normal, radius=args.radius)
    try:
        frame = build_frames(light, ShadingPoint(position=args.point))
    except (DegenerateGeometry, ValueError) as exc:
        print(f"degenerate geometry: {exc}", file=sys.stderr)
        return 1

    omega_p = float(omega_parallel(frame, frame.beta))
    omega_r = 4.0 * float(omega_radial(frame, 0.5 * math.pi))
    quad = 4.0 * adaptive_quadrature(
        lambda phi: 1.0 - float(h_radial(frame, phi)), 0.0, 0.5 * math.pi, tol=1e-13
    )
    rng = np.random.Generator(np.random.Philox(key=np.array([args.seed, 0], dtype=np.uint64)))
    mc = estimate_solid_angle_mc(frame, rng, args.trials)

    print(f"parallel   = {_fmt(omega_p)}")
    print(f"radial     = {_fmt(omega_r)}")
    print(f"quadrature = {_fmt(quad)}")
    print(f"mc         = {_fmt(mc.value)} +/- {_fmt(mc.se)}  ({mc.count} trials)")

    scale = max(abs(omega_r), 1e-300)
    ok = abs(omega_p - omega_r) / scale < 1e-9
    ok &= abs(omega_p - quad) / scale < 1e-8
    ok &= abs(omega_r - quad) / scale < 1e-8
    ok &= abs(mc.value - omega_r) <= 3.0 * mc.se + 1e-12
    if not ok:
        print("solid-angle evaluations disagree beyond tolerance", file=sys.stderr)
        return 2
    return 0


def _point_rows(args: argparse.Namespace, frame, table) -> list[str]:
    pattern = SamplePattern(kind=args.pattern, seed=args.seed)
    eps = pattern.generate(args.spp, pixel_index=0, trial=0)
    rng = _stream(args.seed, _POINT_PURPOSE, 0, 0)
    light = frame.light
    point = ShadingPoint(position=frame.origin)
    rows = []
    for k in range(args.spp):
        u = eps[k]
        if args.technique == "area":
            disk_point, omega, _ = sample_area(light, point, u)
            q = world_to_ellipse(frame, omega)
        elif args.technique == "oracle":
            # Cap-parameter uniforms of the first accepted proposal stand in
            # for the unit-square point; the oracle has no square-to-region
            # map of its own.
            while True:
                u = rng.random(2)
                z = 1.0 - u[0] * (1.0 - math.cos(frame.alpha))
                s = math.sqrt(max(1.0 - z * z, 0.0))
                phi = 2.0 * math.pi * u[1]
                q = np.array([s * math.cos(phi), s * math.sin(phi), z])
                if ray_disk_hit(light, frame.origin, ellipse_to_world(frame, q)):
                    break
            disk_point = back_project(frame, q)
        elif args.technique == "tab-radial":
            sample = sample_tabulated_loop(table, frame, u, rng)
            q, disk_point = sample.q, sample.disk_point
        else:
            sampler = {
                "parallel": sample_parallel,
                "radial": sample_radial,
                "ld-radial": sample_ld_radial,
            }[args.technique]
            sample = sampler(frame, u)
            q, disk_point = sample.q, sample.disk_point
        rows.append(
            ",".join(
                _fmt(v)
                for v in (u[0], u[1], q[0], q[1], q[2], disk_point[0], disk_point[1], disk_point[2])
            )
        )
    return rows


def cmd_points(args: argparse.Namespace) -> int:
    light = DiskLight(center=args.center, normal=args.normal, radius=args.radius)
    try:
        frame = build_frames(light, ShadingPoint(position=args.point))
    except (DegenerateGeometry, ValueError) as exc:
        print(f"degenerate geometry: {exc}", file=sys.stderr)
        return 1
    table = None
    if args.technique == "tab-radial":
        table = read_table(args.table) if args.table else default_table()
    try:
        rows = _point_rows(args, frame, table)
    except ValueError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    args.out.parent.mkdir(parents=True, exist_ok=True)
    with open(args.out, "w") as fh:
        fh.write("eps1,eps2,qx,qy,qz,px,py,pz\n")
        for row in rows:
            fh.write(row + "\n")
    print(f"wrote {len(rows)} points to {args.out}")
    return 0


def cmd_bench(args: argparse.Namespace) -> int:
    try:
        scene = load_scene(args.scene) if args.scene else reference_scene()
    except (ValueError, OSError) as exc:
        print(f"bad scene: {exc}", file=sys.stderr)
        return 1
    techniques = [t.strip() for t in args.technique.split(",") if t.strip()]
    for tech in techniques:
        if tech not in TECHNIQUES:
            print(f"unknown technique {tech!r}", file=sys.stderr)
            return 1
    if not args.spp or any(s < 1 for s in args.spp):
        print("spp list must be positive", file=sys.stderr)
        return 1

    table = None
    if "tab-radial" in techniques:
        table = read_table(args.table) if args.table else default_table()

    reference = reference_image(scene, threads=args.threads)
    pattern = SamplePattern(kind=args.pattern, seed=args.seed)
    args.out.parent.mkdir(parents=True, exist_ok=True)

    lines = ["technique,spp,mse,seconds,newton_p50,newton_max,reject_ratio"]
    for technique in techniques:
        for spp in args.spp:
            image, report = render(
                scene,
                technique,
                pattern,
                spp,
                table=table,
                threads=args.threads,
                reference=reference,
            )
            stem = f"{args.out}_{technique}_{spp}"
            write_ppm(f"{stem}.ppm", image)
            write_raw_f64(f"{stem}.f64", image)
            lines.append(
                ",".join(
                    (
                        technique,
                        str(spp),
                        _fmt(report.mse),
                        _fmt(report.seconds),
                        _fmt(report.newton_p50),
                        str(report.newton_max),
                        _fmt(report.reject.ratio),
                    )
                )
            )
            print(lines[-1])

    csv_path = Path(f"{args.out}_report.csv")
    csv_path.write_text("\n".join(lines) + "\n")
    print(f"wrote {csv_path}")
    return 0


def cmd_table(args: argparse.Namespace) -> int:
    if args.resolution < 2:
        print("resolution must be at least 2", file=sys.stderr)
        return 1
    if not 0.0 < args.alpha_ref < 0.5 * math.pi:
        print("alpha-ref must lie in (0, pi/2)", file=sys.stderr)
        return 1
    table = build_table((args.resolution, args.resolution), alpha_ref=args.alpha_ref)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    write_table(table, args.out)
    back = read_table(args.out)
    if not (
        np.array_equal(back.entries, table.entries)
        and np.array_equal(back.theta_starts, table.theta_starts)
        and back.alpha_ref == table.alpha_ref
    ):
        print("table round trip mismatch", file=sys.stderr)
        return 2
    size = os.path.getsize(args.out)
    print(f"wrote {args.out}: {args.resolution}x{args.resolution}, {size} bytes, reload verified")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    handlers = {
        "solid-angle": cmd_solid_angle,
        "points": cmd_points,
        "bench": cmd_bench,
        "table": cmd_table,
    }
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
