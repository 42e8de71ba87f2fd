"""Command line interface: ``wgbf run | convergence | cavity``.

Exit codes: 0 success, 1 configuration error, 2 solver nonconvergence or
failure, 3 I/O error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .cases import CaseError
from .config import parse_config
from .experiments import ExperimentSpec, run_cavity, run_convergence, run_single, write_trajectory_csv
from .io import write_vtk
from .mesh import MeshError
from .solver import ConfigError, SolverError

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_IO = 0, 1, 2, 3

log = logging.getLogger("wgbf")


def _meshes(text: str) -> list[int]:
    try:
        out = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad mesh list {text!r}") from None
    if not out or min(out) < 1:
        raise argparse.ArgumentTypeError("mesh sizes must be positive integers")
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wgbf", description="Divergence-free weak Galerkin solver "
                                "for unsteady convective Brinkman-Forchheimer flow")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a configured problem")
    r.add_argument("--config", required=True)

    c = sub.add_parser("convergence", help="mesh-refinement study for a manufactured case")
    c.add_argument("--case", choices=["ex81", "ex82"], required=True)
    c.add_argument("--m", type=int, required=True)
    c.add_argument("--l", type=int, default=None)
    c.add_argument("--meshes", type=_meshes, default=[4, 8, 16])
    c.add_argument("--dt-rule", choices=["h2", "h3"], default=None)
    c.add_argument("--output", default=None, help="directory for convergence.csv")

    v = sub.add_parser("cavity", help="lid-driven cavity")
    v.add_argument("--config", required=True)
    return p


def _cmd_run(args) -> int:
    cfg = parse_config(args.config)
    if cfg.case == "cavity":
        return _cavity(cfg)
    traj, state, report, solver = run_single(cfg)
    print(f"steps {len(traj.records)}  max Picard iterations {max(traj.iterations)}  "
          f"div_sup {traj.div_sup:.3e}  max normal jump {traj.max_normal_jump:.3e}")
    if report is not None:
        print(json.dumps(report.as_dict(), indent=2))
    if cfg.output_dir:
        out = Path(cfg.output_dir)
        write_trajectory_csv(traj, out / "diagnostics.csv")
        write_vtk(state, solver.cache, out / "final.vtk")
    return EXIT_OK


def _cavity(cfg) -> int:
    res = run_cavity(cfg)
    tr = res.trajectory
    print(f"steps {len(tr.records)}  final energy {tr.energies[-1]:.6e}  "
          f"div_sup {tr.div_sup:.3e}  max normal jump {tr.max_normal_jump:.3e}")
    for f in res.vtk_files:
        print(f"wrote {f}")
    return EXIT_OK


def _cmd_cavity(args) -> int:
    cfg = parse_config(args.config)
    if cfg.case != "cavity":
        raise ConfigError(f"cavity command needs case = cavity, got {cfg.case!r}")
    return _cavity(cfg)


def _cmd_convergence(args) -> int:
    l = args.m if args.l is None else args.l
    if l not in (args.m - 1, args.m):
        raise ConfigError(f"l must be m-1 or m (m={args.m}), got {l}")
    spec = ExperimentSpec(case=args.case, meshes=args.meshes, m=args.m, l=l,
                          dt_rule=args.dt_rule, output_dir=args.output)

    def show(row):
        print(f"{row['mesh']:>7}  steps {row['steps']:>5}  u {row['rel_L2_velocity']:.4e}  "
              f"grad u {row['rel_brokenH1_velocity']:.4e}  grad_w u {row['rel_weakgrad_velocity']:.4e}  "
              f"p {row['rel_L2_pressure']:.4e}  "
              f"div {row['div_sup']:.1e}", flush=True)

    rows = run_convergence(spec, progress=show)
    if len(rows) > 1:
        print("rates:")
        for row in rows[1:]:
            print(f"{row['mesh']:>7}  {row['rate_L2_velocity']:.2f}  "
                  f"{row['rate_brokenH1_velocity']:.2f}  {row['rate_weakgrad_velocity']:.2f}  "
                  f"{row['rate_L2_pressure']:.2f}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=[logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)],
                        format="%(levelname)s %(name)s: %(message)s")
    handler = {"run": _cmd_run, "convergence": _cmd_convergence, "cavity": _cmd_cavity}[args.command]
    try:
        return handler(args)
    except (ConfigError, CaseError, MeshError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
