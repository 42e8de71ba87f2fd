"""Discrete weak gradient/divergence and the element, edge and RT projections.

All per-cell quantities are stored as batched arrays over the cells of a mesh.
Local scalar DOF layout on a cell: ``dim P_k`` interior coefficients followed
by ``m+1`` trace coefficients for each of the three local edges.  Trace
coefficients live on the global edge and are parametrized in its canonical
direction, so neighbouring cells see the same trace function.
"""
from __future__ import annotations

from functools import cached_property

import numpy as np

from .basis import (EdgeBasis, RTBasis, ScalarBasis, dim_p, edge_quadrature,
                    map_triangle, triangle_quadrature)
from .mesh import Mesh


def default_quad_degree(m: int) -> int:
    return 3 * m + 4


class LocalOperatorCache:
    """Quadrature data, bases and weak-operator matrices for every cell.

    ``m`` is the velocity degree, ``l`` (``m-1`` or ``m``) the degree of the
    velocity weak gradient.  Pressure uses P_{m-1} inside and P_m on edges,
    with weak gradient of degree ``m``.
    """

    def __init__(self, mesh: Mesh, m: int, l: int | None = None, quad_degree: int | None = None):
        if m < 1:
            raise ValueError(f"m must be >= 1, got {m}")
        l = m if l is None else l
        if l not in (m - 1, m):
            raise ValueError(f"l must be m-1 or m, got l={l} for m={m}")
        self.mesh = mesh
        self.m = m
        self.l = l
        self.quad_degree = quad_degree or default_quad_degree(m)
        self.n_p = dim_p(m)
        self.n_pm1 = dim_p(m - 1)
        self.n_pl = dim_p(l)
        self.n_e = m + 1
        self.n_loc = self.n_p + 3 * self.n_e

        cell_vertices = mesh.vertices[mesh.cells]
        self.rule = triangle_quadrature(self.quad_degree)
        self.edge_rule = edge_quadrature(self.quad_degree)
        self.points = map_triangle(cell_vertices, self.rule.points)
        self.weights = 2.0 * mesh.areas[:, None] * self.rule.weights[None, :]

        self.basis = ScalarBasis(m, cell_vertices, quad_degree=self.quad_degree)
        self.phi = self.basis.eval(self.points)
        self.dphi = self.basis.grad(self.points)

        s = self.edge_rule.points
        a = mesh.vertices[mesh.edges[:, 0]]
        b = mesh.vertices[mesh.edges[:, 1]]
        self.edge_points = a[:, None, :] + s[None, :, None] * (b - a)[:, None, :]
        self.edge_weights = mesh.h_edge[:, None] * self.edge_rule.weights[None, :]
        self.edge_basis = EdgeBasis(m, mesh.h_edge)
        self.mu = self.edge_basis.eval(s)                     # (ne, nqe, m+1)

        ce = mesh.cell_edges
        self.normals = mesh.outward_normals()                 # (nc, 3, 2)
        nc, nqe = mesh.n_cells, len(self.edge_rule)
        pts = self.edge_points[ce].reshape(nc, 3 * nqe, 2)
        self.phi_edge = self.basis.eval(pts).reshape(nc, 3, nqe, self.n_p)
        self.w_edge = self.edge_weights[ce]                   # (nc, 3, nqe)
        self.mu_edge = self.mu[ce]                            # (nc, 3, nqe, m+1)
        # <psi_a, mu_s>_e for every cell edge, psi in P_m
        self.edge_moments = np.einsum("ceq,ceqa,ceqs->ceas", self.w_edge, self.phi_edge, self.mu_edge)

        self.grad_u = self.weak_gradient_matrix(l, m)
        self.grad_p = self.weak_gradient_matrix(m, m - 1)
        self.stab = self._stabilization()

    # -- weak operators -------------------------------------------------
    def weak_gradient_matrix(self, gamma: int, interior_deg: int) -> np.ndarray:
        """Map from local scalar DOFs (interior in P_interior_deg, traces in P_m(e))
        to weak-gradient coefficients in [P_gamma]^2, shape
        (nc, 2*dim P_gamma, dim P_interior_deg + 3(m+1)); rows ordered (component, a)."""
        if gamma > self.m:
            raise ValueError("weak gradient degree above basis degree")
        ng, ni = dim_p(gamma), dim_p(interior_deg)
        nc = self.mesh.n_cells
        gi = -np.einsum("cq,cqj,cqad->cdaj", self.weights, self.phi[..., :ni], self.dphi[:, :, :ng])
        gb = np.einsum("ced,ceas->cdaes", self.normals, self.edge_moments[:, :, :ng])
        out = np.empty((nc, 2, ng, ni + 3 * self.n_e))
        out[..., :ni] = gi
        out[..., ni:] = gb.reshape(nc, 2, ng, 3 * self.n_e)
        return out.reshape(nc, 2 * ng, ni + 3 * self.n_e)

    def _stabilization(self) -> np.ndarray:
        """h_K^{-1} <v_i - v_b, w_i - w_b>_{dK} as a local scalar matrix."""
        nc, n_p, n_e = self.mesh.n_cells, self.n_p, self.n_e
        nqe = len(self.edge_rule)
        diff = np.zeros((nc, 3, nqe, self.n_loc))
        diff[..., :n_p] = self.phi_edge
        for e in range(3):
            diff[:, e, :, n_p + e * n_e: n_p + (e + 1) * n_e] = -self.mu_edge[:, e]
        s = np.einsum("ceq,ceqi,ceqj->cij", self.w_edge, diff, diff)
        return s / self.mesh.h_cell[:, None, None]

    @cached_property
    def local_stiffness(self) -> np.ndarray:
        """(grad_w u, grad_w v) + s-term for one velocity component (no nu)."""
        g = self.grad_u
        return np.einsum("cki,ckj->cij", g, g) + self.stab

    @cached_property
    def pressure_mean(self) -> np.ndarray:
        """Integrals of the interior pressure basis, (nc, dim P_{m-1})."""
        return np.einsum("cq,cqj->cj", self.weights, self.phi[..., :self.n_pm1])

    @cached_property
    def edge_local(self) -> np.ndarray:
        """Local index of each edge within its neighbouring cells, (ne, 2); -1 if absent."""
        mesh = self.mesh
        out = -np.ones((mesh.n_edges, 2), dtype=np.int64)
        for side in range(2):
            sel = np.flatnonzero(mesh.edge_cells[:, side] >= 0)
            cells = mesh.edge_cells[sel, side]
            out[sel, side] = np.argmax(mesh.cell_edges[cells] == sel[:, None], axis=1)
        return out

    @cached_property
    def rt(self) -> RTBasis:
        # moments of smooth (non-polynomial) data need a rich rule to keep the
        # interpolant discretely divergence-free to round-off
        return RTBasis(self.m, self.mesh.vertices[self.mesh.cells], quad_degree=20)

    # -- evaluation helpers ----------------------------------------------
    def eval_cells(self, coeffs: np.ndarray) -> np.ndarray:
        """Interior field at cell quadrature points; coeffs (nc, k[, ...])."""
        k = coeffs.shape[1]
        return np.einsum("cqj,cj...->cq...", self.phi[..., :k], coeffs)

    def eval_cell_edges(self, coeffs: np.ndarray) -> np.ndarray:
        """Interior field traced on each cell's edges, (nc, 3, nqe[, ...])."""
        k = coeffs.shape[1]
        return np.einsum("ceqj,cj...->ceq...", self.phi_edge[..., :k], coeffs)

    def eval_edges(self, coeffs: np.ndarray) -> np.ndarray:
        """Trace field at edge quadrature points; coeffs (ne, m+1[, ...])."""
        return np.einsum("eqs,es...->eq...", self.mu, coeffs)


def _field_values(f, points, ncomp=None):
    vals = np.asarray(f(points[..., 0], points[..., 1]), dtype=float)
    if ncomp is not None and vals.shape[0] == ncomp and vals.shape[1:] == points.shape[:-1]:
        vals = np.moveaxis(vals, 0, -1)
    return vals


def weak_gradient(cache: LocalOperatorCache, gamma: int, interior, traces) -> np.ndarray:
    """Weak gradient in [P_gamma(K)]^2 for every cell.

    ``interior``: values of v_i at cell quadrature points (nc, nq).
    ``traces``: values of v_b at each cell's edge quadrature points (nc, 3, nqe).
    Returns coefficients (nc, 2, dim P_gamma).
    """
    ng = dim_p(gamma)
    interior = np.asarray(interior, dtype=float)
    traces = np.asarray(traces, dtype=float)
    if interior.shape != cache.weights.shape or traces.shape != cache.w_edge.shape:
        raise ValueError("DOF/sample shapes do not match the cache")
    vol = -np.einsum("cq,cq,cqad->cda", cache.weights, interior, cache.dphi[:, :, :ng])
    bnd = np.einsum("ceq,ceq,ceqa,ced->cda", cache.w_edge, traces, cache.phi_edge[..., :ng], cache.normals)
    return vol + bnd


def weak_gradient_coeffs(cache: LocalOperatorCache, gamma: int, interior_deg: int,
                         interior_coeffs, trace_coeffs) -> np.ndarray:
    """Coefficient version: interior (nc, dim P_k), traces (ne, m+1) on global edges."""
    interior_coeffs = np.asarray(interior_coeffs, dtype=float)
    trace_coeffs = np.asarray(trace_coeffs, dtype=float)
    if interior_coeffs.shape != (cache.mesh.n_cells, dim_p(interior_deg)) or \
            trace_coeffs.shape != (cache.mesh.n_edges, cache.n_e):
        raise ValueError("mismatched DOF lengths")
    g = cache.weak_gradient_matrix(gamma, interior_deg)
    loc = np.concatenate([interior_coeffs, trace_coeffs[cache.mesh.cell_edges].reshape(cache.mesh.n_cells, -1)], axis=1)
    return np.einsum("cij,cj->ci", g, loc).reshape(cache.mesh.n_cells, 2, dim_p(gamma))


def weak_divergence(cache: LocalOperatorCache, gamma: int, interior, normal_flux) -> np.ndarray:
    """Weak divergence in P_gamma(K) for every cell.

    ``interior``: w_i at cell quadrature points (nc, nq, 2).
    ``normal_flux``: w_b . n_K at each cell's edge quadrature points (nc, 3, nqe),
    e.g. products of trace polynomials sampled pointwise.
    Returns (nc, dim P_gamma).
    """
    ng = dim_p(gamma)
    interior = np.asarray(interior, dtype=float)
    normal_flux = np.asarray(normal_flux, dtype=float)
    if interior.shape != cache.weights.shape + (2,) or normal_flux.shape != cache.w_edge.shape:
        raise ValueError("DOF/sample shapes do not match the cache")
    vol = -np.einsum("cq,cqd,cqad->ca", cache.weights, interior, cache.dphi[:, :, :ng])
    bnd = np.einsum("ceq,ceq,ceqa->ca", cache.w_edge, normal_flux, cache.phi_edge[..., :ng])
    return vol + bnd


def l2_project_element(f, cache: LocalOperatorCache, j: int, ncomp: int | None = None) -> np.ndarray:
    """Cellwise L2 projection onto P_j (j <= m) of a point function ``f(x, y)``.

    Vector fields return ``(ncomp, ...)``-shaped arrays; result is (nc, dim P_j[, ncomp]).
    """
    if not 0 <= j <= cache.m:
        raise ValueError(f"projection degree {j} outside [0, {cache.m}]")
    vals = _field_values(f, cache.points, ncomp)
    return np.einsum("cq,cqj,cq...->cj...", cache.weights, cache.phi[..., :dim_p(j)], vals)


def l2_project_edge(f, cache: LocalOperatorCache, j: int | None = None, ncomp: int | None = None,
                    edges=None) -> np.ndarray:
    """Edgewise L2 projection onto P_j(e); result (ne, j+1[, ncomp])."""
    j = cache.m if j is None else j
    if not 0 <= j <= cache.m:
        raise ValueError(f"projection degree {j} outside [0, {cache.m}]")
    sel = slice(None) if edges is None else np.asarray(edges)
    pts = cache.edge_points[sel]
    vals = _field_values(f, pts, ncomp)
    return np.einsum("eq,eqs,eq...->es...", cache.edge_weights[sel], cache.mu[sel][..., :j + 1], vals)


def rt_project(f, cache: LocalOperatorCache) -> np.ndarray:
    """RT_m interpolant of a vector field ``f(x, y) -> (2, ...)``; coefficients (nc, dim RT_m)."""
    def field(points):
        return _field_values(f, points, 2)
    return cache.rt.interpolate(field)


def rt_to_pm(cache: LocalOperatorCache, rt_coeffs: np.ndarray):
    """Re-express RT fields in the orthonormal [P_m]^2 basis.

    Returns coefficients (nc, dim P_m, 2) and the relative L2 residual of the
    re-expression (nonzero when the field has a degree m+1 component).
    """
    vals = cache.rt.evaluate(rt_coeffs, cache.points)
    coeffs = np.einsum("cq,cqj,cqd->cjd", cache.weights, cache.phi, vals)
    back = np.einsum("cqj,cjd->cqd", cache.phi, coeffs)
    num = np.sqrt(np.einsum("cq,cqd->", cache.weights, (vals - back) ** 2))
    den = np.sqrt(np.einsum("cq,cqd->", cache.weights, vals ** 2))
    return coeffs, (num / den if den > 0 else 0.0)
