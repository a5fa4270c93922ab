"""Command-line entry point: ``levity run | baseline | adapt-only``."""

import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .config import parse_config
from .driver import max_aspect_ratio, run_fixed, run_levity
from .errors import LevityError, RunAborted
from .fileio import read_vtk, write_history_csv, write_outputs, write_vtk
from .remesh import AdaptParams, adapt_mesh

logger = logging.getLogger("levity")

EXIT_CONVERGED, EXIT_ERROR, EXIT_KMAX = 0, 1, 2


def parse_metric_spec(spec, mesh, point_data):
    """Nodal metric from a command-line description.

    ``uniform:H`` gives ``I / H^2``; ``aniso:HX,HY[,DEG]`` a constant
    anisotropic metric with sizes HX, HY along axes rotated by DEG degrees;
    ``field:NAME`` the 2x2 tensor point field NAME stored in the mesh file.
    """
    kind, _, arg = spec.partition(":")
    n = mesh.n_vertices
    try:
        if kind == "uniform":
            h = float(arg)
            return np.repeat((np.eye(2) / h**2)[None], n, axis=0)
        if kind == "aniso":
            vals = [float(x) for x in arg.split(",")]
            hx, hy = vals[:2]
            a = math.radians(vals[2]) if len(vals) > 2 else 0.0
            R = np.array([[math.cos(a), -math.sin(a)], [math.sin(a), math.cos(a)]])
            M = R @ np.diag([1 / hx**2, 1 / hy**2]) @ R.T
            return np.repeat(M[None], n, axis=0)
        if kind == "field":
            if arg not in point_data or np.shape(point_data[arg]) != (n, 2, 2):
                raise LevityError(f"mesh file has no 2x2 tensor point field {arg!r}")
            return point_data[arg]
    except (ValueError, IndexError):
        pass
    raise LevityError(f"cannot parse metric specification {spec!r}")


def _trace_callback(out_dir):
    trace = Path(out_dir) / "trace"
    trace.mkdir(parents=True, exist_ok=True)

    def callback(k, state, history):
        write_vtk(trace / f"iter_{k:04d}.vtk", state.mesh,
                  point_data={"phi": state.phi, "chi": state.chi, "displacement": state.u})
        write_history_csv(trace / "history.csv", history)

    return callback


def _optimize(args, runner):
    cfg = parse_config(args.config)
    out = Path(args.out or cfg.out_dir or "levity_out")
    callback = _trace_callback(out) if args.trace else None
    try:
        result = runner(cfg, callback=callback)
    except RunAborted as exc:
        if exc.history is not None and len(exc.history):
            out.mkdir(parents=True, exist_ok=True)
            write_history_csv(out / "history.csv", exc.history)
        raise
    write_outputs(result, out, domain=result.config.benchmark().domain)
    h = result.history
    print(f"iterations {h.iterations}  compliance {result.layout.compliance:.6g}  "
          f"volume fraction {h.last.volume_fraction:.4f}  elements {result.mesh.n_triangles}  "
          f"max aspect ratio {max_aspect_ratio(result.mesh):.2f}  "
          f"{'converged' if result.converged else 'kmax reached'}")
    print(f"outputs written to {out}")
    return EXIT_CONVERGED if result.converged else EXIT_KMAX


def _adapt_only(args):
    mesh, point_data = read_vtk(args.mesh)
    metric = parse_metric_spec(args.metric, mesh, point_data)
    new, report = adapt_mesh(mesh, metric, AdaptParams(), report=True)
    out = Path(args.out or "levity_out")
    out.mkdir(parents=True, exist_ok=True)
    write_vtk(out / "adapted.vtk", new)
    print(f"elements {mesh.n_triangles} -> {new.n_triangles}  passes {report.passes}  "
          f"unit-length edges {100 * report.unit_fraction:.1f}%  "
          f"max aspect ratio {max_aspect_ratio(new):.2f}")
    print(f"adapted mesh written to {out / 'adapted.vtk'}")
    return EXIT_CONVERGED if report.converged else EXIT_KMAX


def build_parser():
    parser = argparse.ArgumentParser(prog="levity", description="Level-set topology optimization "
                                     "with anisotropic mesh adaptation.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log every iteration")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (("run", "optimization with mesh adaptation"),
                            ("baseline", "optimization on the fixed initial mesh")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config", help="key = value configuration file")
        p.add_argument("--out", help="output directory (overrides out_dir)")
        p.add_argument("--trace", action="store_true", help="dump the state at every iteration")
    p = sub.add_parser("adapt-only", help="remesh a VTK mesh for a given metric")
    p.add_argument("mesh", help="legacy VTK mesh")
    p.add_argument("metric", help="uniform:H | aniso:HX,HY[,DEG] | field:NAME")
    p.add_argument("--out", help="output directory")
    p.add_argument("--trace", action="store_true", help=argparse.SUPPRESS)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.command == "run":
            return _optimize(args, run_levity)
        if args.command == "baseline":
            return _optimize(args, run_fixed)
        return _adapt_only(args)
    except LevityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
