from math import factorial

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wgbf.basis import (RTBasis, ScalarBasis, build_edge_basis, build_rt_basis,
                        build_scalar_basis, dim_p, edge_quadrature, map_triangle,
                        triangle_quadrature)

TRI = np.array([[[0.1, 0.2], [1.3, 0.4], [0.5, 1.1]]])


def test_low_degree_triangle_integrals():
    r1 = triangle_quadrature(1)
    assert r1.weights.sum() == pytest.approx(0.5, rel=1e-15)
    r2 = triangle_quadrature(2)
    x = r2.points[:, 1]
    assert np.dot(r2.weights, x) == pytest.approx(1 / 6, rel=1e-14)
    assert np.dot(r2.weights, x * x) == pytest.approx(1 / 12, rel=1e-14)


@pytest.mark.parametrize("d", range(1, 21))
def test_triangle_rule_factorial_oracle(d):
    rule = triangle_quadrature(d)
    assert np.all(rule.weights > 0)
    assert np.allclose(rule.points.sum(axis=1), 1.0)
    assert np.all(rule.points > -1e-14)
    x, y = rule.points[:, 1], rule.points[:, 2]
    for a in range(d + 1):
        for b in range(d + 1 - a):
            exact = factorial(a) * factorial(b) / factorial(a + b + 2)
            assert np.dot(rule.weights, x ** a * y ** b) == pytest.approx(exact, rel=1e-13, abs=1e-16)


def test_triangle_rule_symmetric():
    rule = triangle_quadrature(7)
    pts = {tuple(np.round(p, 12)): w for p, w in zip(rule.points, rule.weights)}
    for p, w in zip(rule.points, rule.weights):
        q = tuple(np.round(p[[1, 2, 0]], 12))
        assert pts[q] == pytest.approx(w, rel=1e-12)


def test_triangle_rule_limits():
    with pytest.raises(ValueError):
        triangle_quadrature(21)
    with pytest.raises(ValueError):
        triangle_quadrature(0)


@pytest.mark.parametrize("d", range(1, 30))
def test_edge_rule(d):
    rule = edge_quadrature(d)
    assert rule.weights.sum() == pytest.approx(1.0, rel=1e-14)
    for k in range(d + 1):
        assert np.dot(rule.weights, rule.points ** k) == pytest.approx(1 / (k + 1), rel=1e-13)


def test_edge_rule_two_points():
    rule = edge_quadrature(3)
    assert len(rule) == 2
    assert np.dot(rule.weights, rule.points ** 3) == pytest.approx(0.25, rel=1e-14)
    assert len(edge_quadrature(1)) == 1


def _gram(basis, vertices, degree=None):
    rule = triangle_quadrature(degree or 2 * basis.m + 2)
    pts = map_triangle(vertices, rule.points)
    phi = basis.eval(pts)
    d1, d2 = vertices[:, 1] - vertices[:, 0], vertices[:, 2] - vertices[:, 0]
    area = 0.5 * np.abs(d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
    w = 2 * area[:, None] * rule.weights
    return np.einsum("cq,cqi,cqj->cij", w, phi, phi)


@pytest.mark.parametrize("m", [0, 1, 2, 3, 4])
def test_scalar_basis_orthonormal(m):
    b = build_scalar_basis(m, TRI)
    assert b.dim == dim_p(m)
    assert np.abs(_gram(b, TRI, 20) - np.eye(dim_p(m))).max() < 1e-10


def test_scalar_basis_dims():
    assert build_scalar_basis(1, TRI).dim == 3
    assert build_scalar_basis(2, TRI).dim == 6


def test_hierarchical_prefix():
    b2 = ScalarBasis(2, TRI)
    b1 = ScalarBasis(1, TRI)
    pts = map_triangle(TRI, triangle_quadrature(5).points)
    assert np.allclose(b2.eval(pts)[..., :3], b1.eval(pts), atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=6, max_size=6), st.integers(1, 3))
def test_gradient_finite_differences(coords, m):
    v = np.array(coords).reshape(1, 3, 2)
    d1, d2 = v[0, 1] - v[0, 0], v[0, 2] - v[0, 0]
    area = 0.5 * abs(d1[0] * d2[1] - d1[1] * d2[0])
    diam = max(np.linalg.norm(v[0, i] - v[0, j]) for i in range(3) for j in range(i))
    if diam < 1e-3 or area < 0.05 * diam ** 2:
        return
    b = ScalarBasis(m, v)
    pts = map_triangle(v, triangle_quadrature(4).points)
    g = b.grad(pts)
    step = 1e-6
    for d in range(2):
        e = np.zeros(2)
        e[d] = step
        fd = (b.eval(pts + e) - b.eval(pts - e)) / (2 * step)
        scale = np.abs(g[..., d]).max()
        assert np.abs(fd - g[..., d]).max() < 1e-6 * max(scale, 1.0)


def test_degenerate_cell_rejected():
    flat = np.array([[[0, 0], [1, 0], [2, 0]]], dtype=float)
    with pytest.raises((ValueError, np.linalg.LinAlgError)):
        ScalarBasis(1, flat)


@pytest.mark.parametrize("m", [0, 1, 2, 4])
def test_edge_basis_orthonormal(m):
    length = 0.37
    eb = build_edge_basis(m, length)
    rule = edge_quadrature(2 * m + 2)
    mu = eb.eval(rule.points)[0]
    gram = length * np.einsum("q,qi,qj->ij", rule.weights, mu, mu)
    assert eb.dim == m + 1
    assert np.abs(gram - np.eye(m + 1)).max() < 1e-12


@pytest.mark.parametrize("m", [1, 2, 3])
def test_rt_dimension_and_unisolvence(m):
    rt = build_rt_basis(m, TRI)
    assert rt.dim == (m + 1) * (m + 3)
    assert rt.dof_matrix.shape == (1, rt.dim, rt.dim)
    assert rt.condition[0] < 1e8


def test_rt_m1_dim_8():
    assert build_rt_basis(1, TRI).dim == 8


@pytest.mark.parametrize("m", [1, 2])
def test_rt_reproduces_constant(m):
    rt = RTBasis(m, TRI)
    coeffs = rt.interpolate(lambda p: np.broadcast_to([1.0, 0.0], p.shape))
    pts = map_triangle(TRI, triangle_quadrature(6).points)
    vals = rt.evaluate(coeffs, pts)
    assert np.abs(vals - [1.0, 0.0]).max() < 1e-12


@pytest.mark.parametrize("m", [1, 2, 3])
def test_rt_reproduces_random_member(m, rng):
    rt = RTBasis(m, TRI)
    c = rng.standard_normal((1, rt.dim))
    coeffs = rt.interpolate(lambda p: rt.evaluate(c, p))
    assert np.abs(coeffs - c).max() < 1e-10


@pytest.mark.parametrize("m", [1, 2, 3])
def test_rt_divergence_in_pm(m):
    """Fit each member's divergence with P_m at many points; residual ~ 0,
    and the analytic divergence agrees with finite differences."""
    rt = RTBasis(m, TRI)
    pts = map_triangle(TRI, triangle_quadrature(12).points)
    div = rt.divergence(pts)[0]
    b = ScalarBasis(m, TRI)
    phi = b.eval(pts)[0]
    coef, *_ = np.linalg.lstsq(phi, div, rcond=None)
    assert np.abs(phi @ coef - div).max() < 1e-12 * max(1.0, np.abs(div).max())
    step = 1e-6
    ex = np.array([step, 0.0])
    ey = np.array([0.0, step])
    fd = ((rt.eval(pts + ex)[..., 0] - rt.eval(pts - ex)[..., 0])
          + (rt.eval(pts + ey)[..., 1] - rt.eval(pts - ey)[..., 1])) / (2 * step)
    assert np.abs(fd[0] - div).max() < 1e-6 * max(1.0, np.abs(div).max())


def test_rt_degenerate():
    flat = np.array([[[0, 0], [1, 0], [2, 1e-14]]], dtype=float)
    with pytest.raises((ValueError, np.linalg.LinAlgError)):
        RTBasis(1, flat)
