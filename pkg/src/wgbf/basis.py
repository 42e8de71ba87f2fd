"""Quadrature rules and orthonormal polynomial bases on triangles and edges.

Cell bases are orthonormalized per physical cell (Cholesky of the monomial Gram
matrix in centred, ``h_K``-scaled coordinates).  Monomials are ordered by total
degree, so the first ``dim P_k`` members of a degree-``m`` basis span ``P_k``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi

MAX_DEGREE = 20


def dim_p(k: int) -> int:
    """Dimension of P_k in two variables (0 for k < 0)."""
    return (k + 1) * (k + 2) // 2 if k >= 0 else 0


def monomial_exponents(k: int) -> np.ndarray:
    """Exponent pairs (a, b) of x^a y^b, graded by total degree."""
    return np.array([(d - j, j) for d in range(k + 1) for j in range(d + 1)], dtype=int).reshape(-1, 2)


@dataclass(frozen=True)
class QuadratureRule:
    """Rule on the reference triangle (barycentric ``points``, shape (n, 3)) or
    on [0, 1] (``points`` shape (n,))."""

    points: np.ndarray
    weights: np.ndarray
    exact_degree: int

    def __len__(self):
        return len(self.weights)


@lru_cache(maxsize=None)
def triangle_quadrature(exact_degree: int) -> QuadratureRule:
    """Positive, fully symmetric rule on the unit triangle, exact to ``exact_degree``.

    A collapsed Gauss-Jacobi x Gauss-Legendre product rule averaged over the six
    vertex permutations; coincident nodes are merged.
    """
    if not 1 <= exact_degree <= MAX_DEGREE:
        raise ValueError(f"triangle quadrature degree must be in [1, {MAX_DEGREE}], got {exact_degree}")
    n = (exact_degree + 2) // 2
    xj, wj = roots_jacobi(n, 1.0, 0.0)
    xl, wl = np.polynomial.legendre.leggauss(n)
    s = 0.5 * (1.0 + xj)
    t = 0.5 * (1.0 + xl)
    S, T = np.meshgrid(s, t, indexing="ij")
    x = S.ravel()
    y = (T * (1.0 - S)).ravel()
    w = (np.outer(wj, wl) / 8.0).ravel()
    bary = np.column_stack([1.0 - x - y, x, y])

    pts = np.concatenate([bary[:, list(p)] for p in itertools.permutations(range(3))])
    wts = np.tile(w, 6) / 6.0
    key = np.round(pts, 13)
    uniq, inv = np.unique(key, axis=0, return_inverse=True)
    inv = inv.ravel()
    merged_w = np.bincount(inv, weights=wts)
    merged_p = np.zeros((len(uniq), 3))
    np.add.at(merged_p, inv, pts)
    merged_p /= np.bincount(inv)[:, None]
    return QuadratureRule(merged_p, merged_w, exact_degree)


@lru_cache(maxsize=None)
def edge_quadrature(exact_degree: int) -> QuadratureRule:
    """Gauss-Legendre rule on [0, 1] exact to ``exact_degree``."""
    if not 1 <= exact_degree <= 2 * MAX_DEGREE + 1:
        raise ValueError(f"edge quadrature degree must be in [1, {2 * MAX_DEGREE + 1}], got {exact_degree}")
    n = (exact_degree + 2) // 2
    x, w = np.polynomial.legendre.leggauss(n)
    return QuadratureRule(0.5 * (x + 1.0), 0.5 * w, exact_degree)


def monomials(xi, eta, k: int):
    """Values and gradients of graded monomials of degree <= k.

    Returns arrays of shape ``xi.shape + (dim_p(k),)`` and ``... + (dim_p(k), 2)``.
    """
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    ex = monomial_exponents(k)
    px = np.stack([xi ** i for i in range(k + 1)], axis=-1)
    py = np.stack([eta ** i for i in range(k + 1)], axis=-1)
    vals = px[..., ex[:, 0]] * py[..., ex[:, 1]]
    a = ex[:, 0]
    b = ex[:, 1]
    dx = np.where(a > 0, a, 0) * px[..., np.maximum(a - 1, 0)] * py[..., b]
    dy = np.where(b > 0, b, 0) * px[..., a] * py[..., np.maximum(b - 1, 0)]
    return vals, np.stack([dx, dy], axis=-1)


def map_triangle(vertices: np.ndarray, bary: np.ndarray) -> np.ndarray:
    """Physical points for barycentric coordinates; vertices (nc, 3, 2) -> (nc, nq, 2)."""
    return np.einsum("qi,cid->cqd", bary, vertices)


class ScalarBasis:
    """Orthonormal basis of P_m on a batch of cells.

    ``coeffs[c]`` is lower-triangular: basis function ``j`` of cell ``c`` is
    ``sum_k coeffs[c, j, k] * mono_k((x - center) / scale)``.
    """

    def __init__(self, m: int, vertices: np.ndarray, quad_degree: int | None = None):
        vertices = np.asarray(vertices, dtype=float)
        if vertices.ndim == 2:
            vertices = vertices[None]
        if m < 0:
            raise ValueError("degree must be nonnegative")
        self.m = m
        self.dim = dim_p(m)
        self.center = vertices.mean(axis=1)
        d = vertices[:, [1, 2, 0]] - vertices[:, [2, 0, 1]]
        self.scale = np.hypot(d[..., 0], d[..., 1]).max(axis=1)
        d1 = vertices[:, 1] - vertices[:, 0]
        d2 = vertices[:, 2] - vertices[:, 0]
        area = 0.5 * np.abs(d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
        if np.any(area <= 1e-14 * self.scale ** 2):
            raise ValueError("degenerate cell (zero area)")
        rule = triangle_quadrature(max(quad_degree or 0, 2 * m, 1))
        pts = map_triangle(vertices, rule.points)
        w = 2.0 * area[:, None] * rule.weights[None, :]
        mono, _ = self._mono(pts)
        gram = np.einsum("cq,cqi,cqj->cij", w, mono, mono)
        chol = np.linalg.cholesky(gram)
        eye = np.broadcast_to(np.eye(self.dim), gram.shape)
        self.coeffs = np.linalg.solve(chol, eye)

    def _mono(self, points):
        xi = (points[..., 0] - self.center[:, None, 0]) / self.scale[:, None]
        eta = (points[..., 1] - self.center[:, None, 1]) / self.scale[:, None]
        return monomials(xi, eta, self.m)

    def eval(self, points: np.ndarray, deg: int | None = None) -> np.ndarray:
        """Values at points of shape (nc, np, 2) -> (nc, np, dim)."""
        vals, _ = self._mono(points)
        n = self.dim if deg is None else dim_p(deg)
        return np.einsum("cqk,cjk->cqj", vals, self.coeffs[:, :n])

    def grad(self, points: np.ndarray, deg: int | None = None) -> np.ndarray:
        """Gradients, shape (nc, np, dim, 2)."""
        _, grads = self._mono(points)
        n = self.dim if deg is None else dim_p(deg)
        return np.einsum("cqkd,cjk->cqjd", grads, self.coeffs[:, :n]) / self.scale[:, None, None, None]


def build_scalar_basis(m: int, cell_vertices) -> ScalarBasis:
    return ScalarBasis(m, np.asarray(cell_vertices, dtype=float).reshape(-1, 3, 2))


class EdgeBasis:
    """Orthonormal Legendre basis of P_m(e) w.r.t. arclength, on a batch of edges.

    The edge parameter ``s`` in [0, 1] runs from the first to the second stored
    vertex of the edge.
    """

    def __init__(self, m: int, lengths):
        self.m = m
        self.dim = m + 1
        self.lengths = np.atleast_1d(np.asarray(lengths, dtype=float))
        if np.any(self.lengths <= 0):
            raise ValueError("degenerate edge (zero length)")

    def eval(self, s) -> np.ndarray:
        """Values at reference parameters ``s`` -> (ne, ns, m+1)."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        leg = np.polynomial.legendre.legvander(2.0 * s - 1.0, self.m)
        norm = np.sqrt(2.0 * np.arange(self.m + 1) + 1.0)
        return leg[None] * norm / np.sqrt(self.lengths)[:, None, None]


def build_edge_basis(m: int, length: float) -> EdgeBasis:
    return EdgeBasis(m, [length])


class RTBasis:
    """Raviart-Thomas space RT_m = [P_m]^2 + x P_m on a batch of cells.

    Members are expressed over vector monomials in the cell's scaled
    coordinates; columns ``0 .. 2*dim P_m - 1`` are (mono, 0) and (0, mono),
    the last ``m+1`` are X * h for homogeneous monomials h of degree m.
    ``dof_matrix`` holds the moments (normal moments against P_m(e) on each
    local edge, then interior moments against [P_{m-1}]^2) of every member.
    """

    def __init__(self, m: int, vertices: np.ndarray, quad_degree: int | None = None):
        if m < 1:
            raise ValueError("RT basis requires m >= 1")
        vertices = np.asarray(vertices, dtype=float)
        if vertices.ndim == 2:
            vertices = vertices[None]
        self.m = m
        self.dim = (m + 1) * (m + 3)
        self.vertices = vertices
        qd = quad_degree or (2 * m + 2)
        self.pbasis = ScalarBasis(m - 1, vertices, quad_degree=qd)
        self.center = self.pbasis.center
        self.scale = self.pbasis.scale
        self.cell_rule = triangle_quadrature(qd)
        self.edge_rule = edge_quadrature(qd)
        self.dof_matrix = self._moments(self.eval)
        self.condition = np.linalg.cond(self.dof_matrix)
        if np.any(~np.isfinite(self.condition)) or np.any(self.condition > 1e12):
            raise np.linalg.LinAlgError("singular RT moment matrix (degenerate cell?)")

    def _local(self, points):
        xi = (points[..., 0] - self.center[:, None, 0]) / self.scale[:, None]
        eta = (points[..., 1] - self.center[:, None, 1]) / self.scale[:, None]
        return xi, eta

    def eval(self, points: np.ndarray) -> np.ndarray:
        """Basis values at points (nc, np, 2) -> (nc, np, dim, 2)."""
        m = self.m
        xi, eta = self._local(points)
        vals, _ = monomials(xi, eta, m)
        nm = vals.shape[-1]
        out = np.zeros(points.shape[:2] + (self.dim, 2))
        out[..., :nm, 0] = vals
        out[..., nm:2 * nm, 1] = vals
        hom = vals[..., nm - (m + 1):]
        out[..., 2 * nm:, 0] = xi[..., None] * hom
        out[..., 2 * nm:, 1] = eta[..., None] * hom
        return out

    def divergence(self, points: np.ndarray) -> np.ndarray:
        """Divergence of each basis member, (nc, np, dim)."""
        m = self.m
        xi, eta = self._local(points)
        vals, grads = monomials(xi, eta, m)
        nm = vals.shape[-1]
        out = np.zeros(points.shape[:2] + (self.dim,))
        out[..., :nm] = grads[..., 0]
        out[..., nm:2 * nm] = grads[..., 1]
        out[..., 2 * nm:] = (m + 2) * vals[..., nm - (m + 1):]
        return out / self.scale[:, None, None]

    def _edge_geometry(self):
        v = self.vertices
        a = v[:, [1, 2, 0]]
        b = v[:, [2, 0, 1]]
        s = self.edge_rule.points
        pts = a[:, :, None, :] + s[None, None, :, None] * (b - a)[:, :, None, :]
        t = b - a
        length = np.hypot(t[..., 0], t[..., 1])
        normal = np.stack([t[..., 1], -t[..., 0]], axis=-1) / length[..., None]
        return pts, length, normal

    def _moments(self, field) -> np.ndarray:
        """Moments of a vector field evaluator ``field(points) -> (nc, np, ..., 2)``."""
        m = self.m
        nc = len(self.vertices)
        pts, length, normal = self._edge_geometry()
        nqe = len(self.edge_rule)
        s = self.edge_rule.points
        leg = EdgeBasis(m, np.ones(1)).eval(s)[0]          # (nqe, m+1), unit length
        vals = field(pts.reshape(nc, 3 * nqe, 2))
        vals = vals.reshape((nc, 3, nqe) + vals.shape[2:])
        flux = np.einsum("ceq...d,ced->ceq...", vals, normal)
        wq = self.edge_rule.weights[None, None, :] * np.sqrt(length)[..., None]
        edge_m = np.einsum("ceq...,ceq,qs->ces...", flux, wq, leg)
        edge_m = edge_m.reshape((nc, 3 * (m + 1)) + edge_m.shape[3:])

        cpts = map_triangle(self.vertices, self.cell_rule.points)
        area = self.pbasis_area()
        cw = 2.0 * area[:, None] * self.cell_rule.weights[None, :]
        psi = self.pbasis.eval(cpts)                          # (nc, nq, dimP_{m-1})
        cv = field(cpts)
        int_m = np.einsum("cq...d,cq,cqa->cda...", cv, cw, psi)
        int_m = int_m.reshape((nc, -1) + int_m.shape[3:])
        return np.concatenate([edge_m, int_m], axis=1)

    def pbasis_area(self):
        v = self.vertices
        d1 = v[:, 1] - v[:, 0]
        d2 = v[:, 2] - v[:, 0]
        return 0.5 * np.abs(d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def interpolate(self, field) -> np.ndarray:
        """RT coefficients reproducing the moments of ``field(points) -> (nc, np, 2)``."""
        rhs = self._moments(field)
        return np.linalg.solve(self.dof_matrix, rhs[..., None])[..., 0]

    def evaluate(self, coeffs: np.ndarray, points: np.ndarray) -> np.ndarray:
        return np.einsum("cqjd,cj->cqd", self.eval(points), coeffs)


def build_rt_basis(m: int, cell_vertices) -> RTBasis:
    return RTBasis(m, np.asarray(cell_vertices, dtype=float).reshape(-1, 3, 2))
