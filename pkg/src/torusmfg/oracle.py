"""Closed-form and semi-analytic reference solutions.

For P = 0 the minimiser is u = 0 with m(x) = (G*)'(V(x) - Hbar), the
normalisation constant fixed by unit mass.  For critical congestion
(alpha = 1, P != 0) u is constant and m solves a strictly decreasing scalar
equation per node, again with an outer scalar solve for Hbar.  Both outer
mass functions are strictly decreasing in Hbar, so a bracketed root find is
exact business.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .grid import GridFunction, integrate
from .model import ProblemSpec
from .variational import (
    DiscreteObjective,
    FeasiblePoint,
    apriori_diagnostics,
    estimate_Hbar,
)
from .optimizer import SolveResult


class BracketError(RuntimeError):
    """Raised when the outer scalar solve cannot bracket a root."""


def _expand_bracket(fn, lo, hi, want_sign_change=True, max_expand=200):
    """Widen [lo, hi] geometrically until fn changes sign across it."""
    flo, fhi = fn(lo), fn(hi)
    width = max(hi - lo, 1.0)
    for _ in range(max_expand):
        if flo == 0.0:
            return lo, lo
        if fhi == 0.0:
            return hi, hi
        if np.sign(flo) != np.sign(fhi):
            return lo, hi
        width *= 2.0
        lo -= width
        hi += width
        flo, fhi = fn(lo), fn(hi)
    raise BracketError("could not bracket the mass equation root")


def _result_from_point(spec: ProblemSpec, u: GridFunction, m: GridFunction,
                       hbar: float) -> SolveResult:
    obj = DiscreteObjective(spec)
    point = FeasiblePoint(u, m)
    _, hstd = estimate_Hbar(point, obj)
    objective = obj.value(point) if spec.alpha > 1.0 else float("nan")
    return SolveResult(
        u=u,
        m=m,
        Hbar=hbar,
        Hbar_std=hstd,
        objective=objective,
        iters=0,
        converged=True,
        diagnostics=apriori_diagnostics(point, obj),
        gradmap=0.0,
    )


def solve_P0(spec: ProblemSpec, mass_tol: float = 1e-12) -> SolveResult:
    """Explicit minimiser for P = 0: u = 0, m = (G*)'(V - Hbar)."""
    if spec.P_norm != 0.0:
        raise ValueError("closed-form path requires P = 0")
    grid = spec.grid
    V = spec.V.values
    hd = grid.h**grid.dim

    def mass_minus_one(hbar):
        return hd * spec.coupling.conjugate_deriv(V - hbar).sum() - 1.0

    lo = float(V.min()) - float(spec.coupling.g(1.0)) - 1.0  # mass >= 1 here
    hi = float(V.max())                                      # mass = 0 here
    lo, hi = _expand_bracket(mass_minus_one, lo, hi)
    hbar = brentq(mass_minus_one, lo, hi, xtol=1e-14, rtol=8.9e-16) if lo != hi else lo
    m = spec.coupling.conjugate_deriv(V - hbar)
    if abs(hd * m.sum() - 1.0) > mass_tol:
        raise BracketError("mass normalisation did not converge to tolerance")
    return _result_from_point(spec, grid.zeros(), GridFunction(grid, m), float(hbar))


def continuum_Hbar_P0(spec: ProblemSpec, potential, n_fine: int | None = None) -> float:
    """Normalisation constant of the closed form in the continuum limit.

    Resolves h^d sum (G*)'(V - Hbar) = 1 on a much finer sampling of the
    same potential, removing the O(h^2) quadrature bias of the coarse grid
    at the free boundary of m.
    """
    if n_fine is None:
        n_fine = 200_000 if spec.dim == 1 else 2048
    from .grid import TorusGrid

    fine = TorusGrid(spec.dim, n_fine)
    Vf = potential.sample(fine).values
    hd = fine.h**fine.dim

    def mass_minus_one(hbar):
        return hd * spec.coupling.conjugate_deriv(Vf - hbar).sum() - 1.0

    lo = float(Vf.min()) - float(spec.coupling.g(1.0)) - 1.0
    hi = float(Vf.max())
    lo, hi = _expand_bracket(mass_minus_one, lo, hi)
    return float(brentq(mass_minus_one, lo, hi, xtol=1e-13, rtol=8.9e-16))


def _critical_m_given_hbar(spec: ProblemSpec, hbar: float) -> np.ndarray:
    """Nodewise positive root of |P|^g/(g m) - g(m) = Hbar - V(x).

    The left side decreases strictly from +inf to -inf on m > 0, so the
    root is unique; vectorised bisection plus a Newton polish.
    """
    kinetic = spec.P_norm**spec.gamma / spec.gamma
    rhs = hbar - spec.V.values

    def phi(m):
        return kinetic / m - spec.coupling.g(m) - rhs

    lo = np.full(spec.grid.shape, 1e-14)
    hi = np.ones(spec.grid.shape)
    for _ in range(200):
        need = phi(hi) > 0.0
        if not need.any():
            break
        hi[need] *= 2.0
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        pos = phi(mid) > 0.0
        lo = np.where(pos, mid, lo)
        hi = np.where(pos, hi, mid)
    m = 0.5 * (lo + hi)
    for _ in range(4):
        deriv = -kinetic / m**2 - spec.coupling.g_prime(m)
        m = m - phi(m) / deriv
        m = np.maximum(m, 1e-300)
    return m


def solve_critical(spec: ProblemSpec, residual_tol: float = 1e-10) -> SolveResult:
    """Critical congestion alpha = 1: u constant, m from the algebraic solve."""
    if spec.alpha != 1.0:
        raise ValueError("critical path requires alpha = 1")
    if spec.P_norm == 0.0:
        raise ValueError("critical path requires P != 0 (nodewise solvability)")
    grid = spec.grid
    hd = grid.h**grid.dim

    def mass_minus_one(hbar):
        return hd * _critical_m_given_hbar(spec, hbar).sum() - 1.0

    vmax, vmin = float(spec.V.values.max()), float(spec.V.values.min())
    lo = vmin - float(spec.coupling.g(1.0)) - spec.P_norm**spec.gamma / spec.gamma - 1.0
    hi = vmax + spec.P_norm**spec.gamma / spec.gamma + float(spec.coupling.g(1.0)) + 1.0
    lo, hi = _expand_bracket(mass_minus_one, lo, hi)
    hbar = brentq(mass_minus_one, lo, hi, xtol=1e-13, rtol=8.9e-16) if lo != hi else lo
    m = _critical_m_given_hbar(spec, float(hbar))

    kinetic = spec.P_norm**spec.gamma / spec.gamma
    residual = kinetic / m - spec.coupling.g(m) - (hbar - spec.V.values)
    if np.max(np.abs(residual)) > residual_tol:
        raise BracketError("nodewise algebraic residual above tolerance")
    if abs(hd * m.sum() - 1.0) > residual_tol:
        raise BracketError("critical mass normalisation above tolerance")
    u = grid.zeros()
    mgf = GridFunction(grid, m)
    point = FeasiblePoint(u, mgf)
    obj = DiscreteObjective(spec)  # J_h itself is undefined at alpha = 1
    _, hstd = estimate_Hbar(point, obj)
    return SolveResult(
        u=u,
        m=mgf,
        Hbar=float(hbar),
        Hbar_std=hstd,
        objective=float("nan"),
        iters=0,
        converged=True,
        diagnostics=apriori_diagnostics(point, obj),
        gradmap=0.0,
    )


@dataclass
class ClassicalExistence:
    """Outcome of the quadratic-coupling existence check m = 1 + V."""

    m_formula: GridFunction
    min_value: float
    classical_exists: bool


def classical_existence_check(spec: ProblemSpec) -> ClassicalExistence:
    """For P=0, gamma=2, g(m)=m: the candidate classical solution is
    m = 1 + V (V normalised to mean zero); classical iff it stays positive."""
    if spec.P_norm != 0.0:
        raise ValueError("existence check requires P = 0")
    if spec.gamma != 2.0:
        raise ValueError("existence check requires gamma = 2")
    if spec.coupling.terms != ((0.5, 2.0),):
        raise ValueError("existence check requires the quadratic coupling g(m) = m")
    V0 = spec.V.values - integrate(spec.V)
    m = GridFunction(spec.grid, 1.0 + V0)
    mn = float(m.values.min())
    return ClassicalExistence(m_formula=m, min_value=mn, classical_exists=mn > 0.0)
