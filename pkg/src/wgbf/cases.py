"""Manufactured solutions and benchmark problems on the unit square.

Both manufactured velocities derive from a stream function
``psi = amp/2 * a(x) a(y) g(t)`` with ``a(s) = s^2 (s-1)^2``, so
``u = (a(x) a'(y), -a'(x) a(y)) * amp/2 * g(t)`` is solenoidal and vanishes
on the boundary.  The forcing is evaluated from closed-form derivatives:
``f = u_t - nu lap u + (u . grad) u + alpha |u|^{r-2} u + grad p``.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np


def _a(s):
    return s * s * (s - 1.0) ** 2


def _a1(s):
    return 4 * s ** 3 - 6 * s * s + 2 * s


def _a2(s):
    return 12 * s * s - 12 * s + 2


def _a3(s):
    return 24 * s - 12


class CaseError(ValueError):
    pass


@dataclass(frozen=True)
class ManufacturedCase:
    """Exact solution with its derivatives and the matching forcing."""

    name: str
    amplitude: float
    g: Callable
    dg: Callable
    p_fn: Callable
    grad_p_fn: Callable
    nu: float
    alpha: float
    r: float
    T: float = 1.0

    def with_params(self, **kw) -> "ManufacturedCase":
        return replace(self, **kw)

    def u(self, x, y, t):
        c = 0.5 * self.amplitude * self.g(t)
        return np.stack([c * _a(x) * _a1(y), -c * _a1(x) * _a(y)])

    def u_t(self, x, y, t):
        c = 0.5 * self.amplitude * self.dg(t)
        return np.stack([c * _a(x) * _a1(y), -c * _a1(x) * _a(y)])

    def grad_u(self, x, y, t):
        """[i, j] = d u_i / d x_j, shape (2, 2, ...)."""
        c = 0.5 * self.amplitude * self.g(t)
        return np.stack([
            np.stack([c * _a1(x) * _a1(y), c * _a(x) * _a2(y)]),
            np.stack([-c * _a2(x) * _a(y), -c * _a1(x) * _a1(y)]),
        ])

    def laplace_u(self, x, y, t):
        c = 0.5 * self.amplitude * self.g(t)
        return np.stack([c * (_a2(x) * _a1(y) + _a(x) * _a3(y)),
                         -c * (_a3(x) * _a(y) + _a1(x) * _a2(y))])

    def p(self, x, y, t):
        return self.p_fn(x, y, t)

    def grad_p(self, x, y, t):
        return self.grad_p_fn(x, y, t)

    def f(self, x, y, t):
        u = self.u(x, y, t)
        gu = self.grad_u(x, y, t)
        conv = np.einsum("j...,ij...->i...", u, gu)
        mag = np.sqrt(u[0] ** 2 + u[1] ** 2)
        damp = self.alpha * mag ** (self.r - 2.0) * u
        return (self.u_t(x, y, t) - self.nu * self.laplace_u(x, y, t) + conv + damp
                + self.grad_p(x, y, t))

    def u0(self, x, y):
        return self.u(x, y, 0.0)

    def boundary(self, x, y, t):
        return self.u(x, y, t)

    def verify(self, n: int = 1000, seed: int = 0) -> None:
        """Sampled checks: zero divergence and zero boundary trace."""
        rng = np.random.default_rng(seed)
        x, y = rng.random(n), rng.random(n)
        t = rng.random(n) * self.T
        gu = self.grad_u(x, y, t)
        div = np.abs(gu[0, 0] + gu[1, 1]).max()
        if div > 1e-12:
            raise CaseError(f"{self.name}: divergence {div:.3e} at sample points")
        s = rng.random(n)
        edges = [(s, 0 * s), (s, 0 * s + 1), (0 * s, s), (0 * s + 1, s)]
        bmax = max(np.abs(self.u(bx, by, t)).max() for bx, by in edges)
        if bmax > 1e-14:
            raise CaseError(f"{self.name}: nonzero boundary velocity {bmax:.3e}")
        x, y, t = x[:100], y[:100], t[:100]
        f = self.f(x, y, t)
        err = np.abs(f - fd_residual(self, x, y, t)).max() / np.abs(f).max()
        if err > 1e-4:
            raise CaseError(f"{self.name}: forcing disagrees with finite differences ({err:.3e})")


def _ex81() -> ManufacturedCase:
    return ManufacturedCase(
        name="ex81", amplitude=5.0, g=np.cos, dg=lambda t: -np.sin(t),
        p_fn=lambda x, y, t: 10.0 * (2 * x - 1) * (2 * y - 1) * np.cos(t),
        grad_p_fn=lambda x, y, t: np.stack([20.0 * (2 * y - 1) * np.cos(t) + 0 * x,
                                            20.0 * (2 * x - 1) * np.cos(t) + 0 * y]),
        nu=1.0, alpha=1.0, r=5.0, T=1.0)


def _ex82() -> ManufacturedCase:
    return ManufacturedCase(
        name="ex82", amplitude=1.0, g=lambda t: np.exp(-t), dg=lambda t: -np.exp(-t),
        p_fn=lambda x, y, t: (x * x - y * y) * np.exp(-t),
        grad_p_fn=lambda x, y, t: np.stack([2 * x * np.exp(-t) + 0 * y, -2 * y * np.exp(-t) + 0 * x]),
        nu=1.0, alpha=0.1, r=3.5, T=1.0)


CASES = {"ex81": _ex81, "ex82": _ex82}


def fd_residual(case: ManufacturedCase, x, y, t, step: float = 1e-5):
    """PDE left-hand side with every derivative replaced by central differences."""
    def u(xx, yy, tt):
        return case.u(xx, yy, tt)

    ut = (u(x, y, t + step) - u(x, y, t - step)) / (2 * step)
    c = u(x, y, t)
    lap = (u(x + step, y, t) + u(x - step, y, t) + u(x, y + step, t) + u(x, y - step, t) - 4 * c) / step ** 2
    # div(u (x) u), row i: d_x(u_i u_1) + d_y(u_i u_2)
    def flux(xx, yy, j):
        v = u(xx, yy, t)
        return v * v[j]
    conv = ((flux(x + step, y, 0) - flux(x - step, y, 0)) + (flux(x, y + step, 1) - flux(x, y - step, 1))) / (2 * step)
    px = (case.p(x + step, y, t) - case.p(x - step, y, t)) / (2 * step)
    py = (case.p(x, y + step, t) - case.p(x, y - step, t)) / (2 * step)
    mag = np.sqrt(c[0] ** 2 + c[1] ** 2)
    return ut - case.nu * lap + conv + case.alpha * mag ** (case.r - 2) * c + np.stack([px, py])


def registry(name: str, verify: bool = True) -> ManufacturedCase:
    """Look up a manufactured case by name ('ex81' or 'ex82')."""
    try:
        case = CASES[name]()
    except KeyError:
        raise CaseError(f"unknown case {name!r}; expected one of {sorted(CASES)}") from None
    if verify:
        case.verify()
    return case


@dataclass(frozen=True)
class CavityProblem:
    """Lid-driven cavity on the unit square: u = (lid, 0) on y = 1, zero elsewhere, f = 0."""

    lid: float = 1.0
    nu: float = 0.1
    alpha: float = 0.0
    r: float = 3.0
    T: float = 0.5
    name: str = "cavity"

    def u0(self, x, y):
        return np.zeros((2,) + np.shape(x))

    def f(self, x, y, t):
        return np.zeros((2,) + np.shape(x))

    def boundary(self, x, y, t):
        top = np.asarray(y) >= 1.0 - 1e-12
        return np.stack([np.where(top, self.lid, 0.0), np.zeros(np.shape(y))])
