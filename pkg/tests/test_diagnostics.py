import numpy as np
import pytest

from conftest import curl_potential, make_cache, random_state
from wgbf.assembly import FieldState, assemble_constant_blocks, build_dof_map
from wgbf.cases import registry
from wgbf.diagnostics import (convergence_rates, divergence_check, energy_norm, errors_vs_exact,
                              inf_sup_constant, stability_monitor)
from wgbf.mesh import compute_topology, generate_uniform
from wgbf.solver import Trajectory, project_initial
from wgbf.weak import l2_project_edge, l2_project_element


def test_energy_norm_zero_and_matrix_crosscheck(rng):
    mesh = generate_uniform(3, 3)
    for m, l in ((1, 0), (2, 2)):
        cache = make_cache(mesh, m, l)
        dofs = build_dof_map(mesh, m)
        assert energy_norm(FieldState.zeros(dofs), cache) == 0.0
        A = assemble_constant_blocks(mesh, cache, dofs, 2.5).A
        for _ in range(5):
            v = random_state(dofs, rng, homogeneous=False)
            v.vector[dofs.n_velocity:] = 0
            assert energy_norm(v, cache) ** 2 == pytest.approx(v.vector @ (A @ v.vector) / 2.5, rel=1e-10)


@pytest.mark.parametrize("m", [1, 2])
def test_energy_norm_of_linear_field(m):
    """v_i = v_b = a global linear field with l = m: the norm is ||grad v||_0."""
    mesh = generate_uniform(3, 2)
    cache = make_cache(mesh, m, m)
    dofs = build_dof_map(mesh, m)

    def f(x, y):
        return np.stack([2 * x - y, 0.5 * x + 3 * y])
    st = FieldState.zeros(dofs)
    st.set_velocity(l2_project_element(f, cache, m, ncomp=2), l2_project_edge(f, cache, ncomp=2))
    assert energy_norm(st, cache) == pytest.approx(np.sqrt(4 + 1 + 0.25 + 9), rel=1e-12)


def test_div_check_linear_field_one_cell():
    mesh = compute_topology([(0, 0), (1, 0), (0, 1)], [(0, 1, 2)])
    cache = make_cache(mesh, 1)
    st = FieldState.zeros(build_dof_map(mesh, 1))
    st.set_velocity(interior=l2_project_element(lambda x, y: np.stack([x, 0 * y]), cache, 1, ncomp=2))
    d = divergence_check(st, cache)
    assert d["div_sup"] == pytest.approx(1.0, rel=1e-12)
    assert d["max_normal_jump"] == 0.0


def test_div_check_detects_jump():
    mesh = generate_uniform(1, 1)
    cache = make_cache(mesh, 1)
    st = FieldState.zeros(build_dof_map(mesh, 1))
    interior = np.zeros((2, 3, 2))
    interior[0, 0] = np.sqrt(mesh.areas[0]) * np.array([1.0, 0.0])    # constant (1, 0) on one cell only
    st.set_velocity(interior=interior)
    d = divergence_check(st, cache)
    assert d["div_sup"] < 1e-14
    assert d["max_normal_jump"] == pytest.approx(1 / np.sqrt(2), rel=1e-12)


@pytest.mark.parametrize("m", [1, 2])
def test_div_check_projected_field(m, rng):
    mesh = generate_uniform(4, 4)
    cache = make_cache(mesh, m)
    st = project_initial(curl_potential(*rng.uniform(-2, 2, 3)), cache, build_dof_map(mesh, m))
    d = divergence_check(st, cache)
    assert d["div_sup"] < 1e-10 and d["max_normal_jump"] < 1e-10


def test_rates():
    assert convergence_rates([1, 0.5], [1, 0.25]) == pytest.approx([2.0])
    h = 1 / np.array([4, 8, 16, 32])
    e = [6.1174e-01, 1.6218e-01, 4.2348e-02, 1.0847e-02]
    assert convergence_rates(h, e) == pytest.approx([1.92, 1.94, 1.97], abs=0.01)
    with pytest.raises(ValueError):
        convergence_rates([1.0], [1.0])
    with pytest.raises(ValueError):
        convergence_rates([0.5, 1.0], [1.0, 2.0])


def test_errors_zero_exact_guard():
    class Zero:
        def u(self, x, y, t):
            return np.zeros((2,) + x.shape)

        def grad_u(self, x, y, t):
            return np.zeros((2, 2) + x.shape)

        def p(self, x, y, t):
            return np.zeros(x.shape)
    mesh = generate_uniform(2, 2)
    cache = make_cache(mesh, 1)
    rep = errors_vs_exact(FieldState.zeros(build_dof_map(mesh, 1)), cache, Zero(), 0.0)
    assert rep.absolute
    assert rep.rel_L2_velocity == rep.rel_brokenH1_velocity == rep.rel_L2_pressure == 0.0


@pytest.mark.parametrize("m", [1, 2])
def test_projection_error_baseline_and_boost(m):
    """Projected exact solution: errors at projection level, rates of order m+1 / m,
    insensitive to extra quadrature (from 8x8 on; the coarsest m=1 mesh moves by ~1e-8)."""
    ex = registry("ex81")
    errs = []
    for n in (8, 16):
        mesh = generate_uniform(n, n)
        cache = make_cache(mesh, m)
        dofs = build_dof_map(mesh, m)
        st = project_initial(ex.u0, cache, dofs)
        st.vector[dofs.pi] = l2_project_element(lambda x, y: ex.p(x, y, 0.0) + 0 * x, cache, m - 1)
        a = errors_vs_exact(st, cache, ex, 0.0)
        b = errors_vs_exact(st, cache, ex, 0.0, quadrature_boost=8)
        for k in ("rel_L2_velocity", "rel_brokenH1_velocity", "rel_L2_pressure"):
            assert getattr(a, k) == pytest.approx(getattr(b, k), rel=1e-8)
        errs.append(a)
    h = [1 / 8, 1 / 16]
    assert convergence_rates(h, [e.rel_L2_velocity for e in errs])[0] > m + 0.7
    assert convergence_rates(h, [e.rel_brokenH1_velocity for e in errs])[0] > m - 0.3


def test_stability_monitor():
    traj = Trajectory(initial_energy=0.0)
    assert stability_monitor(traj).passed

    class T:
        energies = [1.0, 0.9, 0.95]
    assert not stability_monitor(T()).passed
    rep = stability_monitor(T(), forced=True)
    assert rep.passed is None and rep.lhs == pytest.approx([1.0, 0.81, 0.9025])


def test_inf_sup_bounded_below():
    vals = []
    for n in (2, 4):
        mesh = generate_uniform(n, n)
        cache = make_cache(mesh, 1, 0)
        vals.append(inf_sup_constant(cache, build_dof_map(mesh, 1)))
    assert all(v > 0.05 for v in vals)


@pytest.mark.parametrize("m, l", [(1, 0), (2, 1), (2, 2)])
def test_weak_gradient_error_of_linear_field(m, l):
    """Projections of a global linear field: both gradient errors vanish."""
    class Linear:
        def u(self, x, y, t):
            return np.stack([2 * x - y, 0.5 * x + 3 * y])

        def grad_u(self, x, y, t):
            one = np.ones_like(x)
            return np.stack([np.stack([2 * one, -one]), np.stack([0.5 * one, 3 * one])])

        def p(self, x, y, t):
            return 1.0 + 0 * x
    mesh = generate_uniform(3, 3)
    cache = make_cache(mesh, m, l)
    ex = Linear()
    st = FieldState.zeros(build_dof_map(mesh, m))
    st.set_velocity(l2_project_element(lambda x, y: ex.u(x, y, 0), cache, m, ncomp=2),
                    l2_project_edge(lambda x, y: ex.u(x, y, 0), cache, ncomp=2))
    rep = errors_vs_exact(st, cache, ex, 0.0)
    assert rep.rel_weakgrad_velocity < 1e-12 and rep.rel_brokenH1_velocity < 1e-12
    # a trace mismatch shows up in the weak gradient only
    st.vector[st.dofs.ub] += 0.1
    rep = errors_vs_exact(st, cache, ex, 0.0)
    assert rep.rel_weakgrad_velocity > 1e-3 and rep.rel_brokenH1_velocity < 1e-12
