"""Norms, errors against exact solutions, convergence rates and the
divergence / energy monitors."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .assembly import FieldState
from .basis import map_triangle, triangle_quadrature
from .weak import LocalOperatorCache


def energy_norm(state: FieldState, cache: LocalOperatorCache) -> float:
    """|||v_h|||_V with the weak gradient of degree ``cache.l``."""
    loc = state.vector[state.dofs.cell_u]                       # (nc, 2, n_loc)
    val = np.einsum("cdi,cij,cdj->", loc, cache.local_stiffness, loc)
    return float(np.sqrt(max(val, 0.0)))


def pressure_norm(state: FieldState, cache: LocalOperatorCache) -> float:
    """|||q_h|||_Q = (||q_i||^2 + sum h_K^2 ||grad_{w,m} q||_K^2)^(1/2)."""
    loc = state.vector[state.dofs.cell_p]
    g = np.einsum("cij,cj->ci", cache.grad_p, loc)
    val = np.sum(state.p_interior ** 2) + np.sum(cache.mesh.h_cell ** 2 * np.sum(g ** 2, axis=1))
    return float(np.sqrt(val))


def l2_norm_interior(state: FieldState) -> float:
    """||u_hi||_0; the interior basis is orthonormal."""
    return float(np.linalg.norm(state.vector[state.dofs.ui]))


def divergence_check(state: FieldState, cache: LocalOperatorCache) -> dict:
    """Sup of |div u_hi| over cell quadrature nodes and the largest jump of
    u_hi . n_e across interior edges (over edge quadrature nodes)."""
    u = state.u_interior                                          # (nc, n_p, 2)
    div = np.einsum("cqjd,cjd->cq", cache.dphi, u)
    tr = cache.eval_cell_edges(u)                                 # (nc, 3, nqe, 2)
    mesh = cache.mesh
    inner = mesh.interior_edges
    jump = 0.0
    if len(inner):
        loc = cache.edge_local[inner]
        c0, c1 = mesh.edge_cells[inner, 0], mesh.edge_cells[inner, 1]
        diff = tr[c0, loc[:, 0]] - tr[c1, loc[:, 1]]              # (ni, nqe, 2)
        jump = float(np.abs(np.einsum("eqd,ed->eq", diff, mesh.edge_normals[inner])).max())
    return {"div_sup": float(np.abs(div).max()), "max_normal_jump": jump}


@dataclass
class ErrorReport:
    rel_L2_velocity: float
    rel_brokenH1_velocity: float
    rel_L2_pressure: float
    rel_weakgrad_velocity: float
    div_sup: float
    energy_norm: float
    pressure_Q_norm: float
    absolute: bool = False

    def as_dict(self) -> dict:
        return asdict(self)


def _ratio(num, den):
    return num / den if den > 0 else num


def errors_vs_exact(state: FieldState, cache: LocalOperatorCache, exact, t: float,
                    quadrature_boost: int = 4) -> ErrorReport:
    """Relative errors of u_hi, grad_h u_hi and p_hi against ``exact`` (an
    object with ``u``, ``grad_u`` and ``p`` methods of (x, y, t)).

    ``rel_weakgrad_velocity`` measures grad u - grad_{w,l} u_h instead of the
    broken gradient of u_hi; published WG tables are usually this quantity.

    If an exact norm vanishes the corresponding error is reported in absolute
    terms and ``absolute`` is set.
    """
    mesh = cache.mesh
    rule = triangle_quadrature(min(cache.quad_degree + quadrature_boost, 20))
    pts = map_triangle(mesh.vertices[mesh.cells], rule.points)
    w = 2.0 * mesh.areas[:, None] * rule.weights[None, :]
    phi = cache.basis.eval(pts)
    dphi = cache.basis.grad(pts)
    x, y = pts[..., 0], pts[..., 1]

    u = state.u_interior
    uh = np.einsum("cqj,cjd->dcq", phi, u)
    guh = np.einsum("cqje,cjd->decq", dphi, u)
    ph = np.einsum("cqj,cj->cq", phi[..., :cache.n_pm1], state.p_interior)
    n_pl = (cache.l + 1) * (cache.l + 2) // 2
    gw = np.einsum("cki,cdi->cdk", cache.grad_u, state.vector[state.dofs.cell_u])
    gw = gw.reshape(mesh.n_cells, 2, 2, n_pl)                     # (cell, component, direction, basis)
    gwh = np.einsum("cqj,cdej->decq", phi[..., :n_pl], gw)

    ue = np.asarray(exact.u(x, y, t))
    ge = np.asarray(exact.grad_u(x, y, t))
    pe = np.asarray(exact.p(x, y, t)) + np.zeros_like(x)

    def norm(v):
        return float(np.sqrt(np.sum(w * v ** 2)))

    nu, ng, npr = norm(ue), norm(ge), norm(pe)
    div = np.abs(guh[0, 0] + guh[1, 1])
    return ErrorReport(
        rel_L2_velocity=_ratio(norm(ue - uh), nu),
        rel_brokenH1_velocity=_ratio(norm(ge - guh), ng),
        rel_L2_pressure=_ratio(norm(pe - ph), npr),
        rel_weakgrad_velocity=_ratio(norm(ge - gwh), ng),
        div_sup=float(div.max()),
        energy_norm=energy_norm(state, cache),
        pressure_Q_norm=pressure_norm(state, cache),
        absolute=min(nu, ng, npr) == 0.0,
    )


def convergence_rates(h, e) -> list[float]:
    """Observed orders log(e_{i-1}/e_i) / log(h_{i-1}/h_i)."""
    h = np.asarray(h, dtype=float)
    e = np.asarray(e, dtype=float)
    if len(h) < 2 or len(h) != len(e):
        raise ValueError("need at least two (h, error) pairs")
    if np.any(np.diff(h) >= 0):
        raise ValueError("mesh sizes must be strictly decreasing")
    return list(np.log(e[:-1] / e[1:]) / np.log(h[:-1] / h[1:]))


@dataclass
class StabilityReport:
    energies: list
    passed: bool | None
    lhs: list | None = None
    rhs: list | None = None


def stability_monitor(trajectory, forced: bool = False, rtol: float = 1e-12) -> StabilityReport:
    """Check ||u_hi^k||_0 <= ||u_hi^{k-1}||_0 for unforced runs.

    With forcing the hidden constant of the bound is unknown; only the two
    sides (discrete energy and accumulated data) are reported.
    """
    energies = [float(v) for v in trajectory.energies]
    if forced:
        lhs = [e * e for e in energies]
        rhs = list(np.cumsum([0.0] + list(trajectory.forcing_norms))) if hasattr(trajectory, "forcing_norms") else None
        return StabilityReport(energies, None, lhs, rhs)
    ok = all(b <= a * (1 + rtol) + 1e-300 for a, b in zip(energies, energies[1:]))
    return StabilityReport(energies, ok)


def inf_sup_constant(cache: LocalOperatorCache, dofs, nu: float = 1.0) -> float:
    """Smallest value of sup_v b_h(v, q) / (|||v|||_V |||q|||_Q) over q in Q_h^0.

    Dense generalized eigenproblem on interior (non-boundary) velocity DOFs;
    intended for small meshes only.
    """
    import scipy.linalg as sla
    from .assembly import assemble_constant_blocks

    mesh = cache.mesh
    blocks = assemble_constant_blocks(mesh, cache, dofs, 1.0)
    nv = dofs.n_velocity
    free = np.setdiff1d(np.arange(nv), dofs.boundary_u)
    A = blocks.A.toarray()[np.ix_(free, free)]
    pidx = np.arange(nv, dofs.lam)
    B = blocks.B.toarray()[np.ix_(free, pidx)]

    # Q-norm Gram: identity on p_i plus sum h_K^2 G_p^T G_p
    G = np.zeros((len(pidx), len(pidx)))
    loc = dofs.cell_p - nv
    gp = cache.grad_p
    for c in range(mesh.n_cells):
        G[np.ix_(loc[c], loc[c])] += mesh.h_cell[c] ** 2 * gp[c].T @ gp[c]
    ip = dofs.pi.ravel() - nv
    G[ip, ip] += 1.0
    # restrict to mean-zero interior pressure
    z = np.zeros(len(pidx))
    z[ip] = cache.pressure_mean.ravel()
    basis = sla.null_space(z[None, :])
    S = basis.T @ B.T @ np.linalg.solve(A, B) @ basis
    Gq = basis.T @ G @ basis
    ev = sla.eigh(S, Gq, eigvals_only=True)
    return float(np.sqrt(max(ev.min(), 0.0)))
