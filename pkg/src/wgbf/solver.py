"""Backward-Euler time stepping with Picard (Oseen-type) linearization.

Each Picard iterate solves the linear saddle-point system

    [M/dt + A + C(k) + D(k)   B    0 ] [u]   [F + M u_prev/dt]
    [B^T                      0    Z^T] [p] = [0              ]
    [0                        Z    0 ] [l]   [0              ]

after eliminating the Dirichlet trace unknowns.  The global sparsity pattern
is fixed, so every iterate only refills the CSR data array from cellwise
dense blocks.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import (DofMap, FieldState, boundary_values, local_c, local_d, local_load)
from .diagnostics import divergence_check, l2_norm_interior
from .mesh import Mesh
from .weak import LocalOperatorCache, l2_project_edge, rt_project, rt_to_pm, l2_project_element

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    """Base class for failures of the discrete solve."""


class SingularSystemError(SolverError):
    pass


class PicardNonconvergence(SolverError):
    def __init__(self, msg, increment=None, step=None):
        super().__init__(msg)
        self.increment = increment
        self.step = step


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    """Scheme parameters, time grid, solver tolerances and problem selection."""

    m: int = 1
    l: int | None = None
    nu: float = 1.0
    alpha: float = 1.0
    r: float = 5.0
    dt: float = 0.01
    T: float = 1.0
    picard_tol: float = 1e-8
    picard_max: int = 50
    quad_degree: int | None = None
    convection: bool = True
    # problem selection
    case: str = "ex81"
    nx: int = 8
    ny: int = 8
    mesh_file: str | None = None
    mesh_format: str = "vc"
    lid: float = 1.0
    # output
    output_dir: str | None = None
    vtk_every: int = 0
    store_states: bool = False
    # keep one LU and use it to precondition GMRES until it stops paying off
    reuse_factorization: bool = False

    def __post_init__(self):
        if self.l is None:
            self.l = self.m
        self.validate()

    def validate(self) -> None:
        if int(self.m) != self.m or self.m < 1:
            raise ConfigError(f"m must be an integer >= 1, got {self.m}")
        if self.l not in (self.m - 1, self.m):
            raise ConfigError(f"l must be m-1 or m (m={self.m}), got {self.l}")
        if not self.nu > 0:
            raise ConfigError(f"nu must be positive, got {self.nu}")
        if not self.alpha >= 0:
            raise ConfigError(f"alpha must be nonnegative, got {self.alpha}")
        if not self.r >= 3:
            raise ConfigError(f"r must be >= 3, got {self.r}")
        if not (self.dt > 0 and self.T > 0):
            raise ConfigError("dt and T must be positive")
        n = round(self.T / self.dt)
        if n < 1 or abs(n * self.dt - self.T) > 1e-12 * max(1.0, self.T):
            raise ConfigError(f"T/dt must be an integer (T={self.T}, dt={self.dt})")
        if self.picard_tol <= 0 or self.picard_max < 1:
            raise ConfigError("picard_tol must be positive and picard_max >= 1")

    @property
    def steps(self) -> int:
        return round(self.T / self.dt)


@dataclass
class StepRecord:
    k: int
    t: float
    iterations: int
    increments: list
    energy: float
    div_sup: float
    max_normal_jump: float
    nonlinear_residual: float = float("nan")

    @property
    def contraction(self) -> list:
        inc = self.increments
        return [b / a for a, b in zip(inc, inc[1:]) if a > 0]


@dataclass
class Trajectory:
    records: list = field(default_factory=list)
    initial_energy: float = 0.0
    states: list = field(default_factory=list)

    @property
    def times(self):
        return [0.0] + [r.t for r in self.records]

    @property
    def energies(self):
        return [self.initial_energy] + [r.energy for r in self.records]

    @property
    def iterations(self):
        return [r.iterations for r in self.records]

    @property
    def div_sup(self):
        return max((r.div_sup for r in self.records), default=0.0)

    @property
    def max_normal_jump(self):
        return max((r.max_normal_jump for r in self.records), default=0.0)


@dataclass
class Problem:
    """Data of one run: initial velocity u0(x, y), forcing f(x, y, t),
    Dirichlet velocity g(x, y, t); functions return arrays of shape (2, ...)."""

    mesh: Mesh
    u0: object
    f: object
    g: object
    exact: object = None
    forced: bool = True


def project_initial(u0, cache: LocalOperatorCache, dofs: DofMap, tol: float = 1e-8) -> FieldState:
    """Interior velocity from the RT projection (re-expressed in [P_m]^2),
    traces from the edge L2 projection; pressure zero."""
    state = FieldState.zeros(dofs)
    coeffs, resid = rt_to_pm(cache, rt_project(u0, cache))
    if not np.isfinite(resid) or resid > tol:
        warnings.warn(f"initial velocity is not divergence-free (RT re-expression residual "
                      f"{resid:.2e}); using the componentwise L2 projection", RuntimeWarning,
                      stacklevel=2)
        coeffs = l2_project_element(u0, cache, cache.m, ncomp=2)
    state.set_velocity(interior=coeffs, trace=l2_project_edge(u0, cache, ncomp=2))
    return state


def solve_saddle(matrix, rhs, rtol: float = 1e-10, factor=None):
    """Sparse direct solve with a residual check.

    Returns ``(x, lu)``; raises :class:`SingularSystemError` for singular
    factorizations and :class:`SolverError` if the relative residual exceeds ``rtol``.
    """
    matrix = sp.csc_matrix(matrix)
    rhs = np.asarray(rhs, dtype=float)
    if matrix.shape[0] != matrix.shape[1] or matrix.shape[0] != len(rhs):
        raise ValueError("system must be square and match the right-hand side")
    if factor is None:
        try:
            factor = spla.splu(matrix, permc_spec="COLAMD")
        except RuntimeError as exc:
            raise SingularSystemError(f"factorization failed: {exc}") from exc
    x = factor.solve(rhs)
    if not np.all(np.isfinite(x)):
        raise SingularSystemError("non-finite solution (rank-deficient system)")
    bn = np.linalg.norm(rhs)
    res = np.linalg.norm(matrix @ x - rhs)
    if bn > 0 and res / bn > rtol:
        # one step of iterative refinement before giving up
        x = x + factor.solve(rhs - matrix @ x)
        res = np.linalg.norm(matrix @ x - rhs)
    if (res / bn if bn > 0 else res) > rtol:
        raise SolverError(f"relative residual {res / max(bn, 1e-300):.2e} above {rtol:.0e}")
    return x, factor


class FactorReuse:
    """Linear solver that keeps an LU factorization across nearby matrices.

    The stale factor preconditions restarted GMRES; when GMRES misses the
    residual target within ``max_inner`` iterations the matrix is refactorized.
    The returned solution always satisfies the same residual test as
    :func:`solve_saddle`.
    """

    def __init__(self, rtol: float = 1e-10, max_inner: int = 25):
        self.rtol = rtol
        self.max_inner = max_inner
        self.lu = None
        self.factorizations = 0
        self.inner_iterations = 0

    def _factor(self, matrix):
        try:
            x_lu = spla.splu(sp.csc_matrix(matrix), permc_spec="COLAMD")
        except RuntimeError as exc:
            raise SingularSystemError(f"factorization failed: {exc}") from exc
        self.lu = x_lu
        self.factorizations += 1

    def solve(self, matrix, rhs, x0=None):
        if self.lu is not None:
            bn = np.linalg.norm(rhs)
            prec = spla.LinearOperator(matrix.shape, self.lu.solve)
            count = [0]

            def tick(_):
                count[0] += 1
            x, info = spla.gmres(matrix, rhs, x0=x0, M=prec, rtol=0.05 * self.rtol, atol=0.0,
                                 restart=self.max_inner, maxiter=1, callback=tick,
                                 callback_type="pr_norm")
            self.inner_iterations += count[0]
            if np.all(np.isfinite(x)) and np.linalg.norm(matrix @ x - rhs) <= self.rtol * bn:
                return x
        self._factor(matrix)
        x, _ = solve_saddle(matrix, rhs, self.rtol, factor=self.lu)
        return x


class SaddleSystem:
    """Fixed-pattern assembler of the reduced (Dirichlet-eliminated) system."""

    def __init__(self, cache: LocalOperatorCache, dofs: DofMap, nu: float, dt: float):
        self.cache = cache
        self.dofs = dofs
        self.dt = dt
        nc = cache.mesh.n_cells
        n_loc, n_p = cache.n_loc, cache.n_p
        nvl = 2 * n_loc
        self.nvl = nvl
        self.gidx = np.concatenate([dofs.cell_u[:, 0], dofs.cell_u[:, 1], dofs.cell_p], axis=1)
        L = self.gidx.shape[1]

        const = np.zeros((nc, L, L))
        a = nu * cache.local_stiffness
        for c in range(2):
            s = slice(c * n_loc, (c + 1) * n_loc)
            const[:, s, s] = a
            const[:, c * n_loc + np.arange(n_p), c * n_loc + np.arange(n_p)] += 1.0 / dt
            rows = c * n_loc + np.arange(n_p)
            bl = cache.grad_p[:, c * n_p:(c + 1) * n_p]             # (nc, n_p, np_loc)
            const[:, rows[:, None], nvl + np.arange(bl.shape[2])[None, :]] = bl
            const[:, nvl + np.arange(bl.shape[2])[:, None], rows[None, :]] = np.swapaxes(bl, 1, 2)
        self.const = const

        fixed = np.zeros(dofs.total, dtype=bool)
        fixed[dofs.boundary_u] = True
        self.fixed_idx = dofs.boundary_u
        self.free = np.flatnonzero(~fixed)
        red = -np.ones(dofs.total, dtype=np.int64)
        red[self.free] = np.arange(len(self.free))
        self.red = red
        n = len(self.free)
        self.n = n

        rr = red[np.broadcast_to(self.gidx[:, :, None], (nc, L, L))]
        cc_glob = np.broadcast_to(self.gidx[:, None, :], (nc, L, L))
        cr = red[cc_glob]
        self.ff = ((rr >= 0) & (cr >= 0)).ravel()
        self.fc = ((rr >= 0) & (cr < 0)).ravel()
        self.fc_rows = rr.ravel()[self.fc]
        self.fc_cols = cc_glob.ravel()[self.fc]

        # multiplier couplings
        zr = np.full(dofs.pi.size, red[dofs.lam])
        zc = red[dofs.pi.ravel()]
        zv = cache.pressure_mean.ravel()
        rows = np.concatenate([rr.ravel()[self.ff], zr, zc])
        cols = np.concatenate([cr.ravel()[self.ff], zc, zr])
        keys = rows * n + cols
        uniq, inv = np.unique(keys, return_inverse=True)
        self.inv = inv.ravel()
        self.n_ff = int(self.ff.sum())
        self.z_vals = np.concatenate([zv, zv])
        self.indices = (uniq % n).astype(np.int32)
        counts = np.bincount(uniq // n, minlength=n)
        self.indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int32)
        self.nnz = len(uniq)

    def local_variable(self, kappa: FieldState, alpha: float, r: float, convection: bool) -> np.ndarray:
        cache = self.cache
        nc, n_loc, n_p = cache.mesh.n_cells, cache.n_loc, cache.n_p
        var = np.zeros((nc, self.nvl, self.nvl))
        blk = local_d(cache, kappa) if convection else np.zeros((nc, n_loc, n_loc))
        if alpha != 0.0:
            blk[:, :n_p, :n_p] += local_c(cache, kappa, alpha, r)
        var[:, :n_loc, :n_loc] = blk
        var[:, n_loc:, n_loc:] = blk
        return var

    def matrix(self, var: np.ndarray | None) -> sp.csr_matrix:
        vals = self.const.copy()
        if var is not None:
            vals[:, :self.nvl, :self.nvl] += var
        flat = vals.ravel()
        w = np.concatenate([flat[self.ff], self.z_vals])
        data = np.bincount(self.inv, weights=w, minlength=self.nnz)
        self._last_local = flat
        return sp.csr_matrix((data, self.indices, self.indptr), shape=(self.n, self.n))

    def rhs(self, load: np.ndarray, fixed_values: np.ndarray) -> np.ndarray:
        """Reduced right-hand side; ``load`` is a full-length vector.
        Uses the local values of the most recent :meth:`matrix` call."""
        g = np.zeros(self.dofs.total)
        g[self.fixed_idx] = fixed_values
        out = load[self.free].copy()
        corr = self._last_local[self.fc] * g[self.fc_cols]
        out -= np.bincount(self.fc_rows, weights=corr, minlength=self.n)
        return out

    def expand(self, x: np.ndarray, fixed_values: np.ndarray) -> np.ndarray:
        full = np.zeros(self.dofs.total)
        full[self.free] = x
        full[self.fixed_idx] = fixed_values
        return full


class TransientSolver:
    """Owns mesh-dependent data for one run and advances the scheme."""

    def __init__(self, config: RunConfig, problem: Problem):
        self.config = config
        self.problem = problem
        self.mesh = problem.mesh
        self.cache = LocalOperatorCache(self.mesh, config.m, config.l, config.quad_degree)
        self.dofs = DofMap(self.mesh, config.m)
        self.system = SaddleSystem(self.cache, self.dofs, config.nu, config.dt)
        self.linear = config.alpha == 0.0 and not config.convection
        self.reuse = FactorReuse() if config.reuse_factorization else None

    def initial_state(self) -> FieldState:
        return project_initial(self.problem.u0, self.cache, self.dofs)

    def _load(self, t: float, u_prev: FieldState) -> np.ndarray:
        load = np.zeros(self.dofs.total)
        if self.problem.forced:
            load[self.dofs.ui] = local_load(self.cache, self.problem.f, t)
        load[self.dofs.ui] += u_prev.vector[self.dofs.ui] / self.config.dt
        return load

    def picard_step(self, prev: FieldState, t: float, k: int = 0):
        """Advance from ``prev`` to time ``t``; returns (state, StepRecord)."""
        cfg = self.config
        system = self.system
        gvals = boundary_values(self.cache, self.dofs, self.problem.g, t)
        load = self._load(t, prev)
        kappa = prev
        increments = []
        it = 0
        while True:
            it += 1
            var = None if self.linear else system.local_variable(kappa, cfg.alpha, cfg.r, cfg.convection)
            mat = system.matrix(var)
            rhs = system.rhs(load, gvals)
            if self.reuse is not None:
                x = self.reuse.solve(mat, rhs, x0=kappa.vector[system.free])
            else:
                x, _ = solve_saddle(mat, rhs)
            new = FieldState(self.dofs, system.expand(x, gvals), t)
            inc = float(np.linalg.norm(new.vector[self.dofs.ui] - kappa.vector[self.dofs.ui]))
            increments.append(inc)
            if self.linear or inc < cfg.picard_tol:
                break
            if it >= cfg.picard_max:
                raise PicardNonconvergence(
                    f"step {k}: Picard iteration did not converge in {cfg.picard_max} "
                    f"iterations (last increment {inc:.3e})", increment=inc, step=k)
            kappa = new
        resid = self.nonlinear_residual(new, load, gvals) if not self.linear else 0.0
        div = divergence_check(new, self.cache)
        rec = StepRecord(k=k, t=t, iterations=it, increments=increments,
                         energy=l2_norm_interior(new), div_sup=div["div_sup"],
                         max_normal_jump=div["max_normal_jump"], nonlinear_residual=resid)
        return new, rec

    def nonlinear_residual(self, state: FieldState, load: np.ndarray, gvals: np.ndarray) -> float:
        """Norm of the interior-velocity rows of the fully nonlinear residual,
        i.e. an L2-dual norm since the interior basis is orthonormal."""
        cfg = self.config
        var = self.system.local_variable(state, cfg.alpha, cfg.r, cfg.convection)
        mat = self.system.matrix(var)
        rhs = self.system.rhs(load, gvals)
        res = mat @ state.vector[self.system.free] - rhs
        rows = self.system.red[self.dofs.ui.ravel()]
        return float(np.linalg.norm(res[rows]))

    def run(self, callback=None):
        cfg = self.config
        state = self.initial_state()
        traj = Trajectory(initial_energy=l2_norm_interior(state))
        if cfg.store_states:
            traj.states.append(state.copy())
        if callback is not None:
            callback(0, state)
        for k in range(1, cfg.steps + 1):
            t = k * cfg.dt
            try:
                state, rec = self.picard_step(state, t, k)
            except SolverError as exc:
                if isinstance(exc, PicardNonconvergence):
                    raise
                raise type(exc)(f"step {k} (t={t:.6g}): {exc}") from exc
            traj.records.append(rec)
            if cfg.store_states:
                traj.states.append(state.copy())
            if callback is not None:
                callback(k, state)
            log.debug("step %d t=%.5f iters=%d inc=%s", k, t, rec.iterations,
                      ", ".join(f"{v:.2e}" for v in rec.increments))
        return traj, state


def run_transient(config: RunConfig, problem: Problem | None = None, callback=None):
    """Run the full time loop; returns ``(Trajectory, final FieldState)``."""
    if problem is None:
        from .experiments import build_problem
        problem = build_problem(config)
    return TransientSolver(config, problem).run(callback=callback)


def steps_for_rule(h: float, T: float, power: int) -> int:
    """Smallest N with T/N <= h**power."""
    return max(1, math.ceil(T / h ** power * (1 - 1e-12)))
