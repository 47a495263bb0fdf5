import numpy as np
import pytest

from torusmfg.grid import GridFunction, TorusGrid, integrate
from torusmfg.model import CouplingG, ProblemSpec
from torusmfg.optimizer import SolveOptions, minimize
from torusmfg.oracle import (
    classical_existence_check,
    continuum_Hbar_P0,
    solve_critical,
    solve_P0,
)
from torusmfg.variational import DiscreteObjective

QUAD = CouplingG.quadratic()


def make_spec(n=64, dim=1, alpha=1.5, gamma=2.0, P=None, V_fn=None, coupling=QUAD):
    g = TorusGrid(dim, n)
    V = g.zeros() if V_fn is None else g.from_callable(V_fn)
    if P is None:
        P = (0.0,) * dim
    return ProblemSpec(dim, n, alpha, gamma, P, V, coupling)


class TestSolveP0:
    def test_smooth_case_closed_form(self):
        spec = make_spec(n=200, V_fn=lambda x: 0.5 * np.cos(2 * np.pi * (x - 0.25)))
        res = solve_P0(spec)
        assert np.allclose(res.m.values, spec.V.values + 1.0, atol=1e-10)
        assert res.Hbar == pytest.approx(-1.0, abs=1e-10)
        assert np.all(res.u.values == 0.0)

    def test_steep_case_mass_and_vanishing_region(self):
        spec = make_spec(n=200, V_fn=lambda x: 10 * np.cos(2 * np.pi * (x - 0.25)))
        res = solve_P0(spec)
        assert abs(integrate(res.m) - 1.0) <= 1e-12
        assert np.any(res.m.values == 0.0)
        expected = np.maximum(spec.V.values - res.Hbar, 0.0)
        assert np.allclose(res.m.values, expected, atol=1e-12)

    def test_flat_potential_gives_uniform_mass(self):
        for coupling in (QUAD, CouplingG(((1.0, 3.0),)), CouplingG(((0.5, 2.0), (1.0, 3.0)))):
            spec = make_spec(n=32, coupling=coupling)
            res = solve_P0(spec)
            assert np.allclose(res.m.values, 1.0, atol=1e-10)
            assert res.Hbar == pytest.approx(-float(coupling.g(1.0)), abs=1e-9)

    def test_requires_zero_drift(self):
        spec = make_spec(n=16, P=(1.0,))
        with pytest.raises(ValueError):
            solve_P0(spec)

    def test_oracle_mass_invariant(self):
        rng = np.random.default_rng(0)
        for seed in range(4):
            g = TorusGrid(1, 48)
            vals = rng.normal(scale=2.0, size=48)
            vals = np.convolve(np.tile(vals, 3), np.ones(5) / 5, "same")[48:96]
            spec = ProblemSpec(1, 48, 1.5, 2.0, (0.0,),
                               GridFunction(g, vals), QUAD)
            res = solve_P0(spec)
            assert abs(integrate(res.m) - 1.0) <= 1e-10

    def test_monotone_dependence_on_potential(self):
        spec = make_spec(n=64, V_fn=lambda x: np.sin(2 * np.pi * x))
        res = solve_P0(spec)
        bumped_vals = spec.V.values.copy()
        region = slice(10, 20)
        bumped_vals[region] += 0.5
        spec2 = ProblemSpec(1, 64, 1.5, 2.0, (0.0,),
                            GridFunction(spec.grid, bumped_vals), QUAD)
        res2 = solve_P0(spec2)
        assert np.all(res2.m.values[region] >= res.m.values[region] - 1e-12)

    def test_matches_minimizer_on_smooth_problem(self):
        spec = make_spec(n=64, V_fn=lambda x: 0.5 * np.cos(2 * np.pi * (x - 0.25)))
        res_o = solve_P0(spec)
        res_n = minimize(DiscreteObjective(spec), "uniform", SolveOptions(step0=64.0))
        assert np.max(np.abs(res_o.m.values - res_n.m.values)) <= 1e-6

    def test_continuum_normalization_close_to_discrete(self):
        from torusmfg.model import PotentialFamily
        pot = PotentialFamily("cosine-shift", {"amplitude": 10.0, "shift": 0.25})
        spec = make_spec(n=100, V_fn=lambda x: 10 * np.cos(2 * np.pi * (x - 0.25)))
        hbar_d = solve_P0(spec).Hbar
        hbar_c = continuum_Hbar_P0(spec, pot)
        assert hbar_c == pytest.approx(hbar_d, abs=5e-3)
        assert hbar_c == pytest.approx(5.2741016, abs=1e-5)


class TestSolveCritical:
    def test_symmetric_constant_solution(self):
        # gamma = 2, g(m) = m, |P| = sqrt(2): 1/m - m = Hbar, mass forces m = 1
        spec = make_spec(n=32, alpha=1.0, P=(np.sqrt(2.0),))
        res = solve_critical(spec)
        assert np.allclose(res.m.values, 1.0, atol=1e-10)
        assert res.Hbar == pytest.approx(0.0, abs=1e-10)

    def test_pointwise_residual_and_mass(self):
        spec = make_spec(
            n=64, alpha=1.0, gamma=3.0, P=(1.2,),
            V_fn=lambda x: np.sin(2 * np.pi * x),
            coupling=CouplingG(((0.5, 2.0), (1.0, 3.0))),
        )
        res = solve_critical(spec)
        m = res.m.values
        kin = spec.P_norm**3 / 3.0
        residual = kin / m - spec.coupling.g(m) - (res.Hbar - spec.V.values)
        assert np.max(np.abs(residual)) <= 1e-10
        assert abs(integrate(res.m) - 1.0) <= 1e-10

    def test_2d_residual(self):
        spec = make_spec(
            n=20, dim=2, alpha=1.0, gamma=2.0, P=(1.0, -0.5),
            V_fn=lambda x, y: np.cos(2 * np.pi * x) * np.cos(2 * np.pi * y),
        )
        res = solve_critical(spec)
        kin = spec.P_norm**2 / 2.0
        residual = kin / res.m.values - spec.coupling.g(res.m.values) \
            - (res.Hbar - spec.V.values)
        assert np.max(np.abs(residual)) <= 1e-10

    def test_rejects_zero_drift_and_wrong_alpha(self):
        with pytest.raises(ValueError):
            solve_critical(make_spec(n=16, alpha=1.0, P=(0.0,)))
        with pytest.raises(ValueError):
            solve_critical(make_spec(n=16, alpha=1.5, P=(1.0,)))

    def test_consistent_with_variational_solver_near_critical(self):
        # alpha = 1 + 1e-3 sits just inside the variational range
        V_fn = lambda x: 0.5 * np.cos(2 * np.pi * (x - 0.25))
        crit = solve_critical(make_spec(n=50, alpha=1.0, P=(1.0,), V_fn=V_fn))
        near = make_spec(n=50, alpha=1.0 + 1e-3, P=(1.0,), V_fn=V_fn)
        res = minimize(
            DiscreteObjective(near), "uniform",
            SolveOptions(step0=50.0, max_iters=200000),
        )
        assert np.max(np.abs(res.m.values - crit.m.values)) <= 5e-2


class TestClassicalExistence:
    def check(self, amplitude):
        spec = make_spec(
            n=200, V_fn=lambda x: amplitude * np.cos(2 * np.pi * (x - 0.25))
        )
        return classical_existence_check(spec)

    def test_smooth_potential_classical(self):
        out = self.check(0.5)
        assert out.classical_exists
        assert out.min_value == pytest.approx(0.5, abs=1e-12)

    def test_steep_potential_not_classical(self):
        out = self.check(10.0)
        assert not out.classical_exists
        assert out.min_value == pytest.approx(-9.0, abs=1e-12)

    def test_borderline(self):
        out = self.check(1.0)
        assert not out.classical_exists
        assert out.min_value == pytest.approx(0.0, abs=1e-12)

    def test_formula_is_one_plus_normalized_V(self):
        spec = make_spec(n=64, V_fn=lambda x: np.cos(2 * np.pi * x) + 5.0)
        out = classical_existence_check(spec)
        # mean of V removed before forming 1 + V
        assert out.m_formula.values.mean() == pytest.approx(1.0, abs=1e-12)

    def test_requires_quadratic_setup(self):
        with pytest.raises(ValueError):
            classical_existence_check(make_spec(n=16, P=(1.0,)))
        with pytest.raises(ValueError):
            classical_existence_check(make_spec(n=16, gamma=3.0))
        with pytest.raises(ValueError):
            classical_existence_check(
                make_spec(n=16, coupling=CouplingG(((1.0, 3.0),)))
            )
