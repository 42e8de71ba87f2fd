"""Problem construction, convergence sweeps and the cavity demo."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cases import CavityProblem, registry
from .config import parse_dt_rule
from .diagnostics import convergence_rates, errors_vs_exact, stability_monitor
from .io import write_csv, write_vtk
from .mesh import generate_uniform, import_mesh
from .solver import (ConfigError, Problem, RunConfig, SolverError, TransientSolver,
                     steps_for_rule)

log = logging.getLogger(__name__)


def build_problem(config: RunConfig) -> Problem:
    """Mesh and data for ``config.case`` ('ex81', 'ex82', 'cavity' or 'file')."""
    if config.case == "file":
        if not config.mesh_file:
            raise ConfigError("case 'file' needs mesh_file")
        mesh = import_mesh(config.mesh_file, config.mesh_format)
    else:
        mesh = generate_uniform(config.nx, config.ny)
    if config.case in ("cavity", "file"):
        cav = CavityProblem(lid=config.lid)
        return Problem(mesh, cav.u0, cav.f, cav.boundary, forced=False)
    case = registry(config.case).with_params(nu=config.nu, alpha=config.alpha, r=config.r)
    return Problem(mesh, case.u0, case.f, case.boundary, exact=case)


@dataclass
class ExperimentSpec:
    case: str
    meshes: list
    m: int
    l: int
    dt_rule: str | None = None
    dt: float | None = None
    output_dir: str | None = None
    params: dict = field(default_factory=dict)
    reuse_factorization: bool = True

    def __post_init__(self):
        if not self.meshes:
            raise ConfigError("at least one mesh size is required")
        if self.dt_rule is None and self.dt is None:
            self.dt_rule = f"h^{self.m + 1}"


_COLUMNS = ["mesh", "h", "steps", "dt", "rel_L2_velocity", "rate_L2_velocity",
            "rel_brokenH1_velocity", "rate_brokenH1_velocity", "rel_weakgrad_velocity",
            "rate_weakgrad_velocity", "rel_L2_pressure", "rate_L2_pressure", "div_sup",
            "max_normal_jump", "picard_mean", "picard_max", "picard_ratio_max", "seconds"]


def run_convergence(spec: ExperimentSpec, progress=None) -> list[dict]:
    """One row per mesh with final-time relative errors, observed rates and
    Picard statistics; written to ``<output_dir>/convergence.csv`` if set."""
    case = registry(spec.case)
    params = {"nu": case.nu, "alpha": case.alpha, "r": case.r, "T": case.T}
    params.update(spec.params)
    rows = []
    for n in spec.meshes:
        mesh = generate_uniform(n, n)
        T = params["T"]
        if spec.dt is not None:
            steps = max(1, round(T / spec.dt))
        else:
            steps = steps_for_rule(mesh.h, T, parse_dt_rule(spec.dt_rule))
        cfg = RunConfig(m=spec.m, l=spec.l, dt=T / steps, case=spec.case, nx=n, ny=n,
                        reuse_factorization=spec.reuse_factorization, **params)
        t0 = time.perf_counter()
        exact = case.with_params(**{k: v for k, v in params.items() if k != "T"})
        solver = TransientSolver(cfg, Problem(mesh, exact.u0, exact.f, exact.boundary, exact=exact))
        try:
            traj, state = solver.run()
        except SolverError as exc:
            raise type(exc)(f"mesh {n}x{n}: {exc}") from exc
        err = errors_vs_exact(state, solver.cache, exact, T)
        its = traj.iterations
        rows.append({
            "mesh": f"{n}x{n}", "h": mesh.h, "steps": steps, "dt": cfg.dt,
            "rel_L2_velocity": err.rel_L2_velocity,
            "rel_brokenH1_velocity": err.rel_brokenH1_velocity,
            "rel_weakgrad_velocity": err.rel_weakgrad_velocity,
            "rel_L2_pressure": err.rel_L2_pressure,
            "div_sup": traj.div_sup, "max_normal_jump": traj.max_normal_jump,
            "picard_mean": float(np.mean(its)), "picard_max": int(max(its)),
            # worst last-iteration increment ratio over all steps
            "picard_ratio_max": max((rec.contraction[-1] for rec in traj.records if rec.contraction),
                                    default=float("nan")),
            "seconds": time.perf_counter() - t0,
        })
        if progress is not None:
            progress(rows[-1])
        log.info("mesh %dx%d done in %.1fs", n, n, rows[-1]["seconds"])
    hs = [r["h"] for r in rows]
    for key in ("L2_velocity", "brokenH1_velocity", "weakgrad_velocity", "L2_pressure"):
        rates = convergence_rates(hs, [r["rel_" + key] for r in rows]) if len(rows) > 1 else []
        for r, v in zip(rows, [float("nan")] + list(rates)):
            r["rate_" + key] = v
    if spec.output_dir:
        write_csv(rows, Path(spec.output_dir) / "convergence.csv", _COLUMNS)
    return rows


@dataclass
class CavityResult:
    trajectory: object
    state: object
    vtk_files: list
    csv_file: Path | None
    stable: bool


def run_cavity(config: RunConfig) -> CavityResult:
    """Lid-driven cavity up to ``config.T``; VTK every ``vtk_every`` steps (and
    at the end when an output directory is set) plus a per-step diagnostics CSV."""
    problem = build_problem(config)
    solver = TransientSolver(config, problem)
    out = Path(config.output_dir) if config.output_dir else None
    vtk_files = []

    def snapshot(k, state):
        if out is None:
            return
        every = config.vtk_every
        if (every and k % every == 0) or k == config.steps:
            vtk_files.append(write_vtk(state, solver.cache, out / f"cavity_{k:05d}.vtk"))

    traj, state = solver.run(callback=snapshot)
    csv_file = None
    if out is not None:
        csv_file = write_trajectory_csv(traj, out / "diagnostics.csv")
    # the lid is not homogeneous data, so monotonicity is only expected when it is zero
    stable = stability_monitor(traj).passed if config.lid == 0 else bool(np.all(np.isfinite(traj.energies)))
    return CavityResult(traj, state, vtk_files, csv_file, stable)


def write_trajectory_csv(traj, path) -> Path:
    rows = [{"step": r.k, "t": r.t, "picard_iterations": r.iterations,
             "last_increment": r.increments[-1], "energy": r.energy, "div_sup": r.div_sup,
             "max_normal_jump": r.max_normal_jump, "nonlinear_residual": r.nonlinear_residual}
            for r in traj.records]
    return write_csv(rows, path)


def run_single(config: RunConfig):
    """Generic run; returns (trajectory, state, ErrorReport or None, solver)."""
    problem = build_problem(config)
    solver = TransientSolver(config, problem)
    traj, state = solver.run()
    report = None
    if problem.exact is not None:
        report = errors_vs_exact(state, solver.cache, problem.exact, config.T)
    return traj, state, report, solver
