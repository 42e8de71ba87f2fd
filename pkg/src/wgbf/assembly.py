"""Global DOF numbering and assembly of the WG forms.

Global unknown ordering: interior velocity (cell, component, coefficient),
trace velocity (edge, component, coefficient), interior pressure, trace
pressure, and finally one Lagrange multiplier enforcing a zero mean of the
interior pressure.

Every form is produced cellwise as a dense local array (``local_*``) and then
scattered; the time stepper reuses the local arrays directly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .basis import dim_p
from .mesh import Mesh
from .weak import LocalOperatorCache, l2_project_edge


class DofMap:
    """Index arrays for every block of unknowns."""

    def __init__(self, mesh: Mesh, m: int):
        if m < 1:
            raise ValueError(f"m must be >= 1, got {m}")
        self.mesh = mesh
        self.m = m
        self.n_p = dim_p(m)
        self.n_pm1 = dim_p(m - 1)
        self.n_e = m + 1
        nc, ne = mesh.n_cells, mesh.n_edges
        off = 0
        self.ui = (off + np.arange(nc * 2 * self.n_p)).reshape(nc, 2, self.n_p)
        off += nc * 2 * self.n_p
        self.ub = (off + np.arange(ne * 2 * self.n_e)).reshape(ne, 2, self.n_e)
        off += ne * 2 * self.n_e
        self.n_velocity = off
        self.pi = (off + np.arange(nc * self.n_pm1)).reshape(nc, self.n_pm1)
        off += nc * self.n_pm1
        self.pb = (off + np.arange(ne * self.n_e)).reshape(ne, self.n_e)
        off += ne * self.n_e
        self.lam = off
        self.total = off + 1

        ce = mesh.cell_edges
        # local scalar velocity dofs per component: interior then 3 edges
        self.cell_u = np.stack(
            [np.concatenate([self.ui[:, c], self.ub[ce, c].reshape(nc, -1)], axis=1) for c in range(2)],
            axis=1)                                                   # (nc, 2, n_loc)
        self.cell_p = np.concatenate([self.pi, self.pb[ce].reshape(nc, -1)], axis=1)
        self.boundary_u = self.ub[mesh.boundary_edges].ravel()

    @staticmethod
    def expected_total(n_cells: int, n_edges: int, m: int) -> int:
        return n_cells * (2 * dim_p(m) + dim_p(m - 1)) + n_edges * 3 * (m + 1) + 1


def build_dof_map(mesh: Mesh, m: int) -> DofMap:
    return DofMap(mesh, m)


@dataclass
class FieldState:
    """Coefficient vector of (u_hi, u_hb, p_hi, p_hb, multiplier) at time ``t``."""

    dofs: DofMap
    vector: np.ndarray
    t: float = 0.0

    @classmethod
    def zeros(cls, dofs: DofMap, t: float = 0.0) -> "FieldState":
        return cls(dofs, np.zeros(dofs.total), t)

    def copy(self) -> "FieldState":
        return FieldState(self.dofs, self.vector.copy(), self.t)

    @property
    def u_interior(self) -> np.ndarray:
        """(nc, dim P_m, 2)"""
        return np.moveaxis(self.vector[self.dofs.ui], 1, 2)

    @property
    def u_trace(self) -> np.ndarray:
        """(ne, m+1, 2)"""
        return np.moveaxis(self.vector[self.dofs.ub], 1, 2)

    @property
    def p_interior(self) -> np.ndarray:
        return self.vector[self.dofs.pi]

    @property
    def p_trace(self) -> np.ndarray:
        return self.vector[self.dofs.pb]

    def set_velocity(self, interior=None, trace=None) -> None:
        if interior is not None:
            self.vector[self.dofs.ui] = np.moveaxis(np.asarray(interior), 2, 1)
        if trace is not None:
            self.vector[self.dofs.ub] = np.moveaxis(np.asarray(trace), 2, 1)


def scatter(local: np.ndarray, rows: np.ndarray, cols: np.ndarray, n: int) -> sp.csr_matrix:
    """Sum cellwise dense blocks local[c] into an n x n sparse matrix."""
    r = np.broadcast_to(rows[:, :, None], local.shape).ravel()
    c = np.broadcast_to(cols[:, None, :], local.shape).ravel()
    return sp.coo_matrix((local.ravel(), (r, c)), shape=(n, n)).tocsr()


def _per_component(local: np.ndarray, idx: np.ndarray, n: int) -> sp.csr_matrix:
    """Scatter the same scalar block for both velocity components."""
    out = scatter(local, idx[:, 0], idx[:, 0], n)
    return out + scatter(local, idx[:, 1], idx[:, 1], n)


@dataclass
class SystemBlocks:
    """Constant blocks, all sized ``dofs.total`` square."""

    M: sp.csr_matrix
    A: sp.csr_matrix
    B: sp.csr_matrix
    Z: sp.csr_matrix


def assemble_constant_blocks(mesh: Mesh, cache: LocalOperatorCache, dofs: DofMap, nu: float) -> SystemBlocks:
    """Mass M, viscous form A = nu (a_h incl. stabilization), coupling B with
    ``v^T B q = b_h(v, q)``, and mean-constraint Z (multiplier row)."""
    n = dofs.total
    ui = dofs.ui.reshape(mesh.n_cells, -1)
    eye = np.ones(len(ui.ravel()))
    M = sp.csr_matrix((eye, (ui.ravel(), ui.ravel())), shape=(n, n))
    A = _per_component(nu * cache.local_stiffness, dofs.cell_u, n)
    B = scatter(cache.grad_p, ui, dofs.cell_p, n)
    zr = np.full(dofs.pi.size, dofs.lam)
    Z = sp.csr_matrix((cache.pressure_mean.ravel(), (zr, dofs.pi.ravel())), shape=(n, n))
    return SystemBlocks(M=M, A=A, B=B, Z=Z)


def velocity_samples(cache: LocalOperatorCache, state: FieldState):
    """u_i at cell quadrature points (nc, nq, 2) and u_b . n_K on cell edges (nc, 3, nqe)."""
    ui = cache.eval_cells(state.u_interior)
    ub = cache.eval_edges(state.u_trace)[cache.mesh.cell_edges]       # (nc, 3, nqe, 2)
    flux = np.einsum("ceqd,ced->ceq", ub, cache.normals)
    return ui, flux


def local_c(cache: LocalOperatorCache, kappa: FieldState, alpha: float, r: float) -> np.ndarray:
    """alpha (|kappa_i|^{r-2} u, v) on P_m x P_m per component, (nc, n_p, n_p)."""
    if alpha == 0.0:
        return np.zeros((cache.mesh.n_cells, cache.n_p, cache.n_p))
    ki = cache.eval_cells(kappa.u_interior)
    mag = np.sqrt(np.einsum("cqd,cqd->cq", ki, ki))
    wgt = alpha * cache.weights * np.where(mag > 0, mag, 0.0) ** (r - 2.0)
    return np.einsum("cq,cqj,cqk->cjk", wgt, cache.phi, cache.phi)


def local_d(cache: LocalOperatorCache, kappa: FieldState) -> np.ndarray:
    """Skew convection form per component on the local scalar layout, (nc, n_loc, n_loc).

    Entry [test, trial].  Interior-interior part is
    1/2[(v kappa . grad u) - (u kappa . grad v)], the edge parts are
    +-1/2 <(kappa_b . n) u_b, v_i> and its negative transpose.
    """
    n_p, n_e = cache.n_p, cache.n_e
    nc = cache.mesh.n_cells
    ki, flux = velocity_samples(cache, kappa)
    adv = np.einsum("cqd,cqjd->cqj", ki, cache.dphi)                  # kappa . grad phi_j
    x = np.einsum("cq,cqk,cqj->ckj", cache.weights, cache.phi, adv)
    y = np.einsum("ceq,ceq,ceqk,ceqs->ckes", cache.w_edge, flux, cache.phi_edge, cache.mu_edge)
    y = y.reshape(nc, n_p, 3 * n_e)
    out = np.zeros((nc, cache.n_loc, cache.n_loc))
    out[:, :n_p, :n_p] = 0.5 * (x - np.swapaxes(x, 1, 2))
    out[:, :n_p, n_p:] = 0.5 * y
    out[:, n_p:, :n_p] = -0.5 * np.swapaxes(y, 1, 2)
    return out


def assemble_c(mesh: Mesh, cache: LocalOperatorCache, dofs: DofMap, kappa: FieldState,
               alpha: float, r: float) -> sp.csr_matrix:
    loc = local_c(cache, kappa, alpha, r)
    return _per_component(loc, dofs.ui, dofs.total)


def assemble_d(mesh: Mesh, cache: LocalOperatorCache, dofs: DofMap, kappa: FieldState) -> sp.csr_matrix:
    return _per_component(local_d(cache, kappa), dofs.cell_u, dofs.total)


def local_load(cache: LocalOperatorCache, f, t: float) -> np.ndarray:
    """(f(., t), phi_j) per cell and component, (nc, 2, n_p)."""
    x = cache.points[..., 0]
    y = cache.points[..., 1]
    vals = np.asarray(f(x, y, t), dtype=float)                         # (2, nc, nq)
    vals = np.broadcast_to(vals.reshape((2,) + (1,) * (3 - vals.ndim) + vals.shape[1:]), (2,) + x.shape)
    return np.einsum("cq,dcq,cqj->cdj", cache.weights, vals, cache.phi)


def assemble_load(mesh: Mesh, cache: LocalOperatorCache, dofs: DofMap, f, t: float) -> np.ndarray:
    out = np.zeros(dofs.total)
    out[dofs.ui] = local_load(cache, f, t)
    return out


def boundary_values(cache: LocalOperatorCache, dofs: DofMap, g, t: float) -> np.ndarray:
    """Edge L2 projection of the Dirichlet data on boundary edges, ordered as
    ``dofs.boundary_u``."""
    bnd = cache.mesh.boundary_edges
    coeffs = l2_project_edge(lambda x, y: g(x, y, t), cache, ncomp=2, edges=bnd)   # (nb, n_e, 2)
    return np.moveaxis(coeffs, 2, 1).ravel()


def apply_dirichlet(matrix: sp.spmatrix, rhs: np.ndarray, fixed: np.ndarray, values: np.ndarray):
    """Eliminate fixed unknowns.

    Returns the reduced matrix, reduced right-hand side and the free index set.
    """
    matrix = sp.csr_matrix(matrix)
    mask = np.ones(matrix.shape[0], dtype=bool)
    mask[fixed] = False
    free = np.flatnonzero(mask)
    rows = matrix[free]
    red = rows[:, free].tocsc()
    rhs_red = rhs[free] - rows[:, fixed] @ values
    return red, rhs_red, free
