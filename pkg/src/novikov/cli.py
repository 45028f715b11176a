"""Command-line interface: ``novikov <command> [options]``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4 I/O
error.  Failures print a one-line JSON error record on stderr.
"""
from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from .fields import FieldError, PlaneEmbedding, PseudoperiodicSpec, load_field, restrict_to_plane
from .gasket import ROOTS, GasketOverflowError, enumerate_gasket, gasket_residual_raster, GASKET_BOX_SIZES
from .io import (RunConfig, fmt, gasket_text, read_map_csv, render_map, trajectory_text, write_map_csv,
                 write_text, write_trajectory)
from .mesh import MeshError, NearCriticalWarning, extract_isosurface, load_mesh, mu_cube_mesh, quotient_topology
from .plane import PlaneError, PlaneWindow, confirm_unbounded, critical_density, euler_density_check
from .stability import (SoulInconsistencyError, SoulRankError, box_dimension, compute_soul, energy_band,
                        exceptional_mask, extract_zones, sweep_chart)
from .tracer import LevelSurface, TraceError, classify, tribonacci_direction, trace_section

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


class ConfigError(ValueError):
    """Invalid command-line configuration."""


# ---------------------------------------------------------------------- argument helpers
def _vector(text: str, n: int | None = 3):
    parts = [p for p in text.replace(";", ",").split(",") if p.strip()]
    if n is not None and len(parts) != n:
        raise ConfigError(f"expected {n} comma-separated numbers, got {text!r}")
    try:
        return [int(p) for p in parts]
    except ValueError:
        try:
            return [float(p) for p in parts]
        except ValueError as exc:
            raise ConfigError(f"not a numeric vector: {text!r}") from exc


def _direction(text: str):
    if text.lower() == "tribonacci":
        return tribonacci_direction().vector
    v = _vector(text)
    if not any(v):
        raise ConfigError("--B must be a nonzero direction")
    return v


def _mesh(spec: str):
    if spec == "mucube":
        return mu_cube_mesh()
    if spec.startswith("muparallelepiped:"):
        try:
            return mu_cube_mesh(_vector(spec.split(":", 1)[1]))
        except MeshError as exc:
            raise ConfigError(str(exc)) from exc
    path = Path(spec)
    if not path.exists():
        raise ConfigError(f"unknown mesh {spec!r} (use mucube, muparallelepiped:a,b,c or a pmesh file)")
    try:
        return load_mesh(path)
    except MeshError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _surface(args):
    """(kind, object) for --mesh or --function/--level."""
    if getattr(args, "mesh", None):
        return "mesh", _mesh(args.mesh)
    if not getattr(args, "function", None):
        raise ConfigError("give --function or --mesh")
    field = load_field(args.function)
    if field.dimension != 3:
        raise ConfigError("surface commands need a three-variable field")
    return "field", field


def _plane_function(args):
    field = load_field(args.function)
    if args.plane:
        pieces = [_vector(p, 3) for p in args.plane.split(";")]
        if len(pieces) != 3:
            raise ConfigError("--plane needs 'base;u;v'")
        return restrict_to_plane(field, PlaneEmbedding.plane(*pieces))
    if field.dimension != 2:
        raise ConfigError("plane commands need a two-variable field or --plane")
    if args.linear:
        return PseudoperiodicSpec(np.array(_vector(args.linear, 2), dtype=float), field)
    return field


_POSITIVE = {"n": 2, "depth": 0, "raster": 8, "resolution": 2, "budget": 0, "window": 0, "grid": 1, "jobs": 1}


def _check_ranges(args) -> None:
    for key, low in _POSITIVE.items():
        v = getattr(args, key, None)
        if v is not None and not v >= low:
            raise ConfigError(f"--{key} must be at least {low}, got {v}")


def _config(args) -> RunConfig:
    params = {k: v for k, v in sorted(vars(args).items()) if k not in ("command", "handler")}
    return RunConfig(args.command, params)


def _out(args, default: str) -> Path:
    return Path(args.out or default)


# ---------------------------------------------------------------------- commands
def cmd_topo(args, cfg):
    kind, surf = _surface(args)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NearCriticalWarning)
        mesh = surf if kind == "mesh" else extract_isosurface(surf, args.level, args.resolution)
    topo = mesh.topology()
    print(f"genus {topo.genus} rank {topo.rank}")
    print(f"components {topo.n_components} genera {','.join(map(str, topo.genera))}")
    if kind == "field":
        q = quotient_topology(surf, mesh)
        if q.genera != topo.genera:
            print(f"smallest period torus: genus {q.genus} components {q.n_components}")


def cmd_soul(args, cfg):
    kind, surf = _surface(args)
    B = _direction(args.B)
    if kind == "field" and args.level is None:
        raise ConfigError("--level is required with --function")
    r = compute_soul(surf, B, args.level, args.resolution)
    print(r.label)
    if r.note:
        print(f"note {r.note}")


def cmd_band(args, cfg):
    field = load_field(args.function)
    band = energy_band(field, _direction(args.B), args.tolerance, args.resolution)
    soul = "" if band.soul is None else " soul " + ",".join(map(str, band.soul))
    print(f"e1 {fmt(band.e1)} e2 {fmt(band.e2)}{soul}")
    if band.uncertain:
        print("uncertain " + " ".join(fmt(c) for c in band.uncertain))


def cmd_trace(args, cfg):
    kind, surf = _surface(args)
    B = _direction(args.B)
    if kind == "field":
        if args.level is None:
            raise ConfigError("--level is required with --function")
        surf = LevelSurface(surf, args.level)
    traj = trace_section(surf, B, args.offset, budget=args.budget)

    def retrace(budget):
        return trace_section(surf, B, args.offset, budget=budget)

    cl = classify(traj, retrace if args.follow_up else None)
    out = _out(args, "trace.txt")
    write_trajectory(traj, out, cfg)
    line = f"{cl.kind}"
    if cl.translation is not None:
        line += " translation " + ",".join(map(str, cl.translation))
    if cl.direction is not None:
        line += " direction " + ",".join(fmt(x) for x in cl.direction)
    print(line)


def _sweep(args):
    kind, surf = _surface(args)
    if kind == "field":
        level = 0.0 if args.level is None else args.level
        return sweep_chart(surf, args.chart, args.n, level, args.resolution, args.jobs)
    return sweep_chart(surf, args.chart, args.n, jobs=args.jobs)


def cmd_stereomap(args, cfg):
    m = _sweep(args)
    m.provenance["budget"] = args.budget
    out = _out(args, "map")
    write_map_csv(m, out.with_suffix(".csv"), cfg)
    render_map(m, out.with_suffix(".ppm"), cfg)
    print(f"samples {len(m.samples)} souls {len(m.souls())}")


def cmd_zones(args, cfg):
    m = read_map_csv(args.map)
    zones = extract_zones(m)
    body = "soul_x soul_y soul_z samples area\n" + "".join(
        f"{z.soul[0]} {z.soul[1]} {z.soul[2]} {len(z.directions)} {fmt(z.area)}\n" for z in zones)
    write_text(_out(args, "zones.txt"), body, cfg)
    print(f"zones {len(zones)}")


def cmd_boxdim(args, cfg):
    if args.map:
        m = read_map_csv(args.map)
        mask = exceptional_mask(m, None if m.chart == "sphere" else m.chart)
        sizes = None
    else:
        mask, _ = gasket_residual_raster(args.depth, args.raster)
        sizes = GASKET_BOX_SIZES
    if args.sizes:
        sizes = [int(x) for x in _vector(args.sizes, None)]
    bd = box_dimension(mask, sizes)
    print(f"dimension {fmt(bd.dimension)} r2 {fmt(bd.r_squared)}")
    print("sizes " + " ".join(map(str, bd.sizes)) + " counts " + " ".join(map(str, bd.counts)))


def cmd_gasket(args, cfg):
    tris = enumerate_gasket(ROOTS[args.root], args.depth, order=args.order)
    body = gasket_text(tris)
    if args.out:
        write_text(args.out, body, cfg)
    else:
        sys.stdout.write(body)


def cmd_levels(args, cfg):
    f = _plane_function(args)
    comps = confirm_unbounded(f, args.level, PlaneWindow((0.0, 0.0), args.window, args.grid))
    out = _out(args, "levels.txt")
    parts = []
    for k, cp in enumerate(comps):
        status = "confirmed" if cp.confirmed_unbounded else ("candidate" if cp.unbounded_candidate else "closed")
        parts.append(trajectory_text(cp.points, f"component{k}", args.level, status))
    write_text(out, "".join(parts), cfg)
    print(f"components {len(comps)} candidates {sum(c.unbounded_candidate for c in comps)} "
          f"unbounded {sum(c.confirmed_unbounded for c in comps)}")


def cmd_density(args, cfg):
    f = _plane_function(args)
    radii = [float(x) for x in _vector(args.radii, None)]
    for k in (0, 1, 2):
        d = critical_density(f, args.level, k, radii)
        print(f"N{k} " + " ".join(fmt(x) for x in d.densities) + f" change {fmt(d.relative_change)}")
    e = euler_density_check(f, args.level, radii[-1])
    print(f"euler alternating {fmt(e.alternating)} direct {fmt(e.direct)} discrepancy {fmt(e.discrepancy)}")


# ---------------------------------------------------------------------- parser
def _surface_args(p, level_default=None):
    p.add_argument("--function", help="built-in field name (cos3, cos3d) or field file")
    p.add_argument("--mesh", help="mucube, muparallelepiped:a,b,c or a pmesh file")
    p.add_argument("--level", type=float, default=level_default, help="level c of the field")
    p.add_argument("--resolution", type=int, default=32, help="mesh grid cells per period")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="novikov", description="Plane sections of triply periodic surfaces.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("topo", help="genus and rank of a level surface")
    _surface_args(p)
    p.set_defaults(handler=cmd_topo)

    p = sub.add_parser("soul", help="soul of a rational direction")
    _surface_args(p)
    p.add_argument("--B", required=True, help="integer direction, e.g. 1,1,4")
    p.set_defaults(handler=cmd_soul)

    p = sub.add_parser("band", help="energy band of a rational direction")
    p.add_argument("--function", required=True)
    p.add_argument("--B", required=True)
    p.add_argument("--tolerance", type=float, default=1e-3, help="bisection resolution in c")
    p.add_argument("--resolution", type=int, default=32)
    p.set_defaults(handler=cmd_band)

    p = sub.add_parser("trace", help="trace one section and classify it")
    _surface_args(p)
    p.add_argument("--B", required=True, help="direction: numbers or 'tribonacci'")
    p.add_argument("--offset", type=float, default=0.0, help="plane offset s in <B, x> = s")
    p.add_argument("--budget", type=float, default=100.0, help="arc-length budget")
    p.add_argument("--no-follow-up", dest="follow_up", action="store_false",
                   help="skip the budget doublings used to classify open traces")
    p.add_argument("--out", help="trajectory dump path")
    p.set_defaults(handler=cmd_trace)

    p = sub.add_parser("stereomap", help="sweep a lattice of directions")
    _surface_args(p)
    p.add_argument("--chart", choices=("x", "y", "z", "sphere"), default="z")
    p.add_argument("--n", type=int, required=True, help="lattice size per side")
    p.add_argument("--budget", type=float, default=100.0, help="recorded trace budget")
    p.add_argument("--jobs", type=int, default=None, help="worker processes (default NOVIKOV_JOBS or 1)")
    p.add_argument("--out", help="output prefix for .csv and .ppm")
    p.set_defaults(handler=cmd_stereomap)

    p = sub.add_parser("zones", help="stability zones of a map CSV")
    p.add_argument("--map", required=True)
    p.add_argument("--out")
    p.set_defaults(handler=cmd_zones)

    p = sub.add_parser("boxdim", help="box-counting dimension")
    p.add_argument("--map", help="map CSV: use cells outside zone interiors")
    p.add_argument("--depth", type=int, default=8, help="gasket depth when no map is given")
    p.add_argument("--raster", type=int, default=2048, help="gasket raster size")
    p.add_argument("--sizes", help="box sizes in cells, comma-separated")
    p.set_defaults(handler=cmd_boxdim)

    p = sub.add_parser("gasket", help="removed triangles of the gasket")
    p.add_argument("--depth", type=int, required=True)
    p.add_argument("--root", choices=sorted(ROOTS), default="unit")
    p.add_argument("--order", choices=("depth", "generation"), default="depth")
    p.add_argument("--out")
    p.set_defaults(handler=cmd_gasket)

    for name, handler, hlp in (("levels", cmd_levels, "level components in a plane window"),
                               ("density", cmd_density, "critical point densities")):
        p = sub.add_parser(name, help=hlp)
        p.add_argument("--function", required=True, help="field name or file")
        p.add_argument("--plane", help="restrict a 3-variable field to 'base;u;v'")
        p.add_argument("--linear", help="linear part a,b added to a 2-variable field")
        p.add_argument("--level", type=float, required=True)
        p.set_defaults(handler=handler)
    sub.choices["levels"].add_argument("--window", type=float, default=8.0, help="window half-width")
    sub.choices["levels"].add_argument("--grid", type=int, default=16, help="grid nodes per unit length")
    sub.choices["levels"].add_argument("--out")
    sub.choices["density"].add_argument("--radii", default="50,100", help="disk radii, comma-separated")
    return ap


def _fail(code: int, exc: BaseException) -> int:
    sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc), "exit": code}) + "\n")
    return code


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _check_ranges(args)
        cfg = _config(args)
        args.handler(args, cfg)
    except (ConfigError, FieldError, PlaneError, KeyError) as exc:
        return _fail(EXIT_CONFIG, exc)
    except (TraceError, SoulRankError, SoulInconsistencyError, MeshError, GasketOverflowError,
            FloatingPointError, np.linalg.LinAlgError) as exc:
        return _fail(EXIT_NUMERIC, exc)
    except OSError as exc:
        return _fail(EXIT_IO, exc)
    except ValueError as exc:
        return _fail(EXIT_NUMERIC, exc)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
