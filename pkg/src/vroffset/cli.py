"""Batch command line for offset crusts.

Subcommands: offset, offset2d, channel, mat-reconstruct, morph, metrics,
oracle, audit.  Exit codes: 0 success, 2 configuration error, 3 unreadable
or invalid input, 4 pipeline failure.  Options beat the key=value config
file, which beats the defaults; outputs are deterministic for a fixed
configuration and seed.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import applications, metrics as metrics_mod, pipeline
from .mesh import (MeshError, Polygon2D, TriangleMesh, load_mesh, quality_report,
                   save_mesh, save_svg)
from .radius import (RadiusError, RadiusField, field_from_expression,
                     interpolate_biharmonic, load_radius_constraints,
                     load_radius_values)
from .refine import RefineError, RefinementConfig
from .sampling import SamplingConfig, SamplingError, Side

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INPUT = 3
EXIT_PIPELINE = 4


class ConfigError(Exception):
    pass


class InputError(Exception):
    pass


_CONFIG_KEYS = {
    "blue_noise": int,
    "rho": float,
    "epsilon": float,
    "sphere_level": int,
    "dihedral": float,
    "seed": int,
    "lam": float,
    "side": str,
    "feature_mode": str,
    "circle_steps": int,
    "resolution": int,
    "samples": int,
}

_DEFAULTS = {
    "blue_noise": 70000,
    "rho": 0.05,
    "epsilon": 1e-6,
    "sphere_level": 642,
    "dihedral": 0.2,
    "seed": 0,
    "lam": 1e-4,
    "side": "outward",
    "feature_mode": "rounded",
    "circle_steps": None,
    "resolution": 128,
    "samples": 100000,
}


def _parse_config_file(path: str) -> dict:
    out = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for ln, line in enumerate(fh, start=1):
                stripped = line.split("#", 1)[0].strip()
                if not stripped:
                    continue
                if "=" not in stripped:
                    raise ConfigError(f"{path}:{ln}: expected key=value")
                key, _, value = stripped.partition("=")
                key = key.strip()
                if key not in _CONFIG_KEYS:
                    raise ConfigError(f"{path}:{ln}: unknown key {key!r}")
                try:
                    out[key] = _CONFIG_KEYS[key](value.strip())
                except ValueError as exc:
                    raise ConfigError(f"{path}:{ln}: bad value for {key}") from exc
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return out


def _merge_settings(args: argparse.Namespace) -> dict:
    merged = dict(_DEFAULTS)
    if getattr(args, "config", None):
        merged.update(_parse_config_file(args.config))
    for key in _CONFIG_KEYS:
        flag = getattr(args, key, None)
        if flag is not None:
            merged[key] = flag
    return merged


def _sampling_config(settings: dict, side: Side | None = None) -> SamplingConfig:
    try:
        return SamplingConfig(
            blue_noise_count=settings["blue_noise"],
            rho=settings["rho"],
            epsilon=settings["epsilon"],
            sphere_level=settings["sphere_level"],
            dihedral_threshold=settings["dihedral"],
            side=side if side is not None else Side(settings["side"]),
            seed=settings["seed"],
            feature_mode=settings["feature_mode"],
        )
    except (SamplingError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _refinement_config(settings: dict) -> RefinementConfig:
    try:
        return RefinementConfig(lam=settings["lam"])
    except RefineError as exc:
        raise ConfigError(str(exc)) from exc


def _load_mesh(path: str) -> TriangleMesh:
    try:
        return load_mesh(path)
    except (MeshError, OSError) as exc:
        raise InputError(f"{path}: {exc}") from exc


def _radius_for_mesh(mesh: TriangleMesh, args: argparse.Namespace):
    """Resolve the mutually exclusive radius options into a scalar or field.
    Returns (radius, inward) where inward reflects a negative distance."""
    sources = [s for s in ("distance", "relative_distance", "radius_expr",
                           "radius_file", "constraints")
               if getattr(args, s, None) is not None]
    if len(sources) != 1:
        raise ConfigError(
            "give exactly one of --distance, --relative-distance, "
            "--radius-expr, --radius-file, --constraints")
    kind = sources[0]
    inward = False
    if kind == "distance":
        d = float(args.distance)
        if d == 0:
            raise ConfigError("--distance must be nonzero")
        if d < 0:
            inward, d = True, -d
        return d, inward
    if kind == "relative_distance":
        delta = float(args.relative_distance)
        if delta == 0:
            raise ConfigError("--relative-distance must be nonzero")
        if delta < 0:
            inward, delta = True, -delta
        scale, _ = pipeline.normalized_frame(mesh)
        lo = mesh.vertices.min(axis=0)
        hi = mesh.vertices.max(axis=0)
        l_diag = float(np.linalg.norm((hi - lo) * scale))
        return delta * l_diag / scale, inward
    try:
        if kind == "radius_expr":
            return field_from_expression(mesh, args.radius_expr), False
        if kind == "radius_file":
            return load_radius_values(args.radius_file, mesh), False
        constraints = load_radius_constraints(args.constraints)
        return interpolate_biharmonic(mesh, constraints), False
    except (RadiusError, OSError) as exc:
        raise InputError(str(exc)) from exc


def _resolve_side(args: argparse.Namespace, settings: dict, inward: bool) -> Side:
    explicit = getattr(args, "side", None)
    side = Side(explicit if explicit is not None else settings["side"])
    if inward:
        if explicit is not None and side is Side.OUTWARD:
            raise ConfigError("negative distance contradicts --side outward")
        if side is not Side.BOTH:
            side = Side.INWARD
    return side


def _print_result(result, args) -> None:
    for line in result.summary_lines():
        print(line)
    if getattr(args, "timings", False):
        for line in result.timings.format_lines():
            print(line)


def _save_result(result, args) -> None:
    if getattr(args, "output", None):
        save_mesh(args.output, result.mesh)
        print(f"wrote {args.output}")
    if getattr(args, "raw_output", None):
        save_mesh(args.raw_output, result.raw_mesh)
        print(f"wrote {args.raw_output}")


def load_polygon(path: str) -> Polygon2D:
    """Read `x y` lines into a CCW polygon (orientation fixed if needed)."""
    pts = []
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for ln, line in enumerate(fh, start=1):
                stripped = line.split("#", 1)[0].strip()
                if not stripped:
                    continue
                parts = stripped.split()
                if len(parts) != 2:
                    raise InputError(f"{path}:{ln}: expected `x y`")
                pts.append([float(parts[0]), float(parts[1])])
    except OSError as exc:
        raise InputError(f"cannot read polygon {path}: {exc}") from exc
    except ValueError as exc:
        raise InputError(f"{path}: bad coordinate") from exc
    if len(pts) < 3:
        raise InputError(f"{path}: a polygon needs at least 3 vertices")
    try:
        poly = Polygon2D(np.array(pts))
        if not poly.is_ccw():
            poly = Polygon2D(np.array(pts[::-1]))
        return poly
    except MeshError as exc:
        raise InputError(f"{path}: {exc}") from exc


def _load_curve(path: str, closed: bool) -> applications.Directrix:
    rows = []
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for ln, line in enumerate(fh, start=1):
                stripped = line.split("#", 1)[0].strip()
                if not stripped:
                    continue
                parts = stripped.split()
                if len(parts) != 4:
                    raise InputError(f"{path}:{ln}: expected `x y z r`")
                rows.append([float(x) for x in parts])
    except OSError as exc:
        raise InputError(f"cannot read curve {path}: {exc}") from exc
    except ValueError as exc:
        raise InputError(f"{path}: bad number") from exc
    if len(rows) < 2:
        raise InputError(f"{path}: a curve needs at least 2 points")
    arr = np.array(rows)
    try:
        return applications.Directrix(points=arr[:, :3], radii=arr[:, 3],
                                      closed=closed)
    except applications.ApplicationError as exc:
        raise InputError(str(exc)) from exc


# ---------------------------------------------------------------------------
# subcommands


def _cmd_offset(args) -> int:
    settings = _merge_settings(args)
    mesh = _load_mesh(args.input)
    radius, inward = _radius_for_mesh(mesh, args)
    side = _resolve_side(args, settings, inward)
    config = _sampling_config(settings, side)
    refinement = _refinement_config(settings)
    result = pipeline.compute_offset(mesh, radius, config, refinement)
    _print_result(result, args)
    _save_result(result, args)
    return EXIT_OK


def _cmd_offset2d(args) -> int:
    settings = _merge_settings(args)
    polygon = load_polygon(args.input)
    if args.distance is not None:
        if args.distance <= 0:
            raise ConfigError("2D offsets use a positive --distance")
        radii = float(args.distance)
    elif args.radius_file is not None:
        try:
            values = np.loadtxt(args.radius_file, ndmin=1)
        except (OSError, ValueError) as exc:
            raise InputError(f"{args.radius_file}: {exc}") from exc
        radii = values
    else:
        raise ConfigError("give --distance or --radius-file")
    config = _sampling_config(settings, Side.OUTWARD)
    refinement = _refinement_config(settings)
    result = pipeline.offset_polygon(polygon, radii, config, refinement)
    print(f"sites {result.site_count} segments {result.crust.segment_count} "
          f"components {result.crust.component_count()}")
    if getattr(args, "timings", False):
        for line in result.timings.format_lines():
            print(line)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            for k, loop in enumerate(result.loop_points()):
                fh.write(f"# loop {k}\n")
                for p in loop:
                    fh.write(f"{p[0]:.9g} {p[1]:.9g}\n")
                fh.write("\n")
        print(f"wrote {args.output}")
    if args.svg:
        save_svg(args.svg, polygons=[polygon.vertices],
                 polylines=result.loop_points())
        print(f"wrote {args.svg}")
    return EXIT_OK


def _cmd_channel(args) -> int:
    settings = _merge_settings(args)
    if (args.preset is None) == (args.curve is None):
        raise ConfigError("give exactly one of --preset or --curve")
    if args.preset is not None:
        try:
            directrix = applications.knot_directrix(args.preset,
                                                    args.curve_samples)
        except applications.ApplicationError as exc:
            raise ConfigError(str(exc)) from exc
    else:
        directrix = _load_curve(args.curve, closed=not args.open)
    config = _sampling_config(settings, Side.OUTWARD)
    refinement = _refinement_config(settings)
    result = applications.channel_surface(directrix, config, refinement,
                                          circle_steps=settings["circle_steps"])
    _print_result(result, args)
    _save_result(result, args)
    return EXIT_OK


def _cmd_mat(args) -> int:
    settings = _merge_settings(args)
    try:
        mat = applications.load_mat(args.input)
    except (applications.ApplicationError, OSError) as exc:
        raise InputError(str(exc)) from exc
    config = _sampling_config(settings, Side.BOTH)
    refinement = _refinement_config(settings)
    result = applications.reconstruct_from_mat(mat, config, refinement)
    _print_result(result, args)
    _save_result(result, args)
    return EXIT_OK


def _cmd_morph(args) -> int:
    settings = _merge_settings(args)
    mesh = _load_mesh(args.input)
    if args.distance <= 0:
        raise ConfigError("--distance must be positive; the op picks the sign")
    config = _sampling_config(settings, Side.OUTWARD)
    refinement = _refinement_config(settings)
    try:
        result = applications.morphological_op(mesh, args.op, args.distance,
                                               config, refinement)
    except applications.ApplicationError as exc:
        raise pipeline.PipelineError(str(exc)) from exc
    _print_result(result, args)
    _save_result(result, args)
    return EXIT_OK


def _cmd_metrics(args) -> int:
    settings = _merge_settings(args)
    mesh_a = _load_mesh(args.mesh_a)
    mesh_b = _load_mesh(args.mesh_b)
    report = metrics_mod.compare_meshes(mesh_a, mesh_b,
                                        count=settings["samples"],
                                        seed=settings["seed"])
    print(report.format_line())
    if args.offset_error is not None:
        err = metrics_mod.one_sided_offset_error(mesh_a, mesh_b,
                                                 args.offset_error,
                                                 seed=settings["seed"])
        print(err.format_line())
    return EXIT_OK


def _cmd_oracle(args) -> int:
    settings = _merge_settings(args)
    mesh = _load_mesh(args.input)
    radius, inward = _radius_for_mesh(mesh, args)
    if inward:
        raise ConfigError("the grid oracle contours the outward offset; "
                          "pass a positive distance")
    if np.isscalar(radius):
        field = RadiusField(mesh, np.full(len(mesh.vertices), float(radius)))
    else:
        field = radius
    try:
        oracle = metrics_mod.brute_force_offset(mesh, field,
                                                resolution=settings["resolution"],
                                                seed=settings["seed"])
    except metrics_mod.MetricsError as exc:
        raise pipeline.PipelineError(str(exc)) from exc
    print(f"oracle vertices {len(oracle.vertices)} faces {len(oracle.faces)}")
    if args.output:
        save_mesh(args.output, oracle)
        print(f"wrote {args.output}")
    return EXIT_OK


def _cmd_audit(args) -> int:
    mesh = _load_mesh(args.input)
    report = quality_report(mesh, check_intersections=not args.no_intersections)
    print(report.format_line())
    print(f"euler characteristic {mesh.euler_characteristic()}")
    print(f"closed manifold {mesh.is_closed_manifold()}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _add_common(p: argparse.ArgumentParser, radius_opts: bool = False) -> None:
    p.add_argument("--config", help="key=value settings file")
    p.add_argument("--blue-noise", dest="blue_noise", type=int)
    p.add_argument("--rho", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--sphere-level", dest="sphere_level", type=int,
                   choices=(162, 642, 2562))
    p.add_argument("--dihedral", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--lam", type=float)
    p.add_argument("--feature-mode", dest="feature_mode",
                   choices=("rounded", "preserved"))
    p.add_argument("--threads", type=int)
    p.add_argument("--timings", action="store_true")
    if radius_opts:
        p.add_argument("--distance", type=float,
                       help="constant offset distance; negative = inward")
        p.add_argument("--relative-distance", dest="relative_distance", type=float,
                       help="offset as a fraction of the normalized diagonal")
        p.add_argument("--radius-expr", dest="radius_expr",
                       help="expression in x, y, z, r")
        p.add_argument("--radius-file", dest="radius_file",
                       help="one radius per vertex")
        p.add_argument("--constraints",
                       help="`vertex_id radius` lines, interpolated biharmonically")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vroffset",
        description="Variable-radius offset surfaces via power-diagram crusts")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("offset", help="offset a closed triangle mesh")
    p.add_argument("input")
    _add_common(p, radius_opts=True)
    p.add_argument("--side", choices=("outward", "inward", "both"))
    p.add_argument("--output", "-o")
    p.add_argument("--raw-output", dest="raw_output",
                   help="crust before refinement")
    p.set_defaults(func=_cmd_offset)

    p = sub.add_parser("offset2d", help="offset a planar polygon")
    p.add_argument("input", help="`x y` vertex lines")
    _add_common(p)
    p.add_argument("--distance", type=float)
    p.add_argument("--radius-file", dest="radius_file")
    p.add_argument("--output", "-o", help="offset loops as text")
    p.add_argument("--svg", help="render input and offset to SVG")
    p.set_defaults(func=_cmd_offset2d)

    p = sub.add_parser("channel", help="envelope of spheres along a curve")
    _add_common(p)
    p.add_argument("--preset", choices=sorted(applications._KNOT_RADII))
    p.add_argument("--curve", help="`x y z r` lines")
    p.add_argument("--open", action="store_true", help="curve is not closed")
    p.add_argument("--curve-samples", dest="curve_samples", type=int, default=300)
    p.add_argument("--circle-steps", dest="circle_steps", type=int)
    p.add_argument("--output", "-o")
    p.add_argument("--raw-output", dest="raw_output")
    p.set_defaults(func=_cmd_channel)

    p = sub.add_parser("mat-reconstruct",
                       help="surface of a medial-axis transform (MATOFF)")
    p.add_argument("input")
    _add_common(p)
    p.add_argument("--output", "-o")
    p.add_argument("--raw-output", dest="raw_output")
    p.set_defaults(func=_cmd_mat)

    p = sub.add_parser("morph", help="dilate, erode, open, or close a solid")
    p.add_argument("input")
    p.add_argument("--op", required=True,
                   choices=("dilate", "erode", "open", "close"))
    p.add_argument("--distance", type=float, required=True)
    _add_common(p)
    p.add_argument("--output", "-o")
    p.set_defaults(func=_cmd_morph)

    p = sub.add_parser("metrics", help="compare two meshes")
    p.add_argument("mesh_a")
    p.add_argument("mesh_b")
    _add_common(p)
    p.add_argument("--samples", type=int)
    p.add_argument("--offset-error", dest="offset_error", type=float,
                   help="also report |distance(mesh_a sample, mesh_b) - d|")
    p.set_defaults(func=_cmd_metrics)

    p = sub.add_parser("oracle", help="brute-force grid offset (marching cubes)")
    p.add_argument("input")
    _add_common(p, radius_opts=True)
    p.add_argument("--resolution", type=int)
    p.add_argument("--output", "-o")
    p.set_defaults(func=_cmd_oracle)

    p = sub.add_parser("audit", help="mesh quality census")
    p.add_argument("input")
    p.add_argument("--no-intersections", dest="no_intersections",
                   action="store_true", help="skip the intersection scan")
    p.set_defaults(func=_cmd_audit)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "threads", None):
        os.environ["VROFFSET_THREADS"] = str(args.threads)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SamplingError, RadiusError, RefineError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except MeshError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except pipeline.PipelineError as exc:
        print(f"pipeline error: {exc}", file=sys.stderr)
        return EXIT_PIPELINE
    except applications.ApplicationError as exc:
        print(f"pipeline error: {exc}", file=sys.stderr)
        return EXIT_PIPELINE


if __name__ == "__main__":
    sys.exit(main())
