import json

import numpy as np
import pytest

from torusmfg.grid import (
    GridFunction,
    GridVectorField,
    TorusGrid,
    central_diff,
    divergence_central,
    from_csv,
    from_json_record,
    gradient_central,
    integrate,
    to_csv,
    to_json_record,
    upwind_grad_power,
)


def grid1(n=64):
    return TorusGrid(1, n)


def sample(grid, fn):
    return grid.from_callable(fn)


def fitted_order(ns, errs):
    """Log-log slope of err vs h = 1/N."""
    h = np.log(1.0 / np.asarray(ns, dtype=float))
    return np.polyfit(h, np.log(np.asarray(errs)), 1)[0]


class TestTorusGrid:
    def test_spacing_times_n_is_one(self):
        for n in (5, 64, 200):
            g = TorusGrid(1, n)
            assert g.h * g.n == 1.0

    def test_rejects_small_n_and_bad_dim(self):
        with pytest.raises(ValueError):
            TorusGrid(1, 4)
        with pytest.raises(ValueError):
            TorusGrid(3, 32)

    def test_gridfunction_shape_checks(self):
        g = TorusGrid(2, 8)
        GridFunction(g, np.zeros(64))  # flat input reshaped
        with pytest.raises(ValueError):
            GridFunction(g, np.zeros(63))

    def test_vector_field_requires_shared_grid(self):
        g = TorusGrid(1, 8)
        other = TorusGrid(1, 16)
        with pytest.raises(ValueError):
            GridVectorField(g, (other.zeros(),))


class TestCentralDiff:
    def test_constant_maps_to_zero(self):
        f = grid1().constant(3.7)
        assert np.all(central_diff(f, 0).values == 0.0)

    def test_axis_out_of_range(self):
        with pytest.raises(ValueError):
            central_diff(grid1().zeros(), 1)

    def test_fourth_order_on_sine(self):
        errs = []
        ns = (32, 64, 128)
        for n in ns:
            g = grid1(n)
            f = sample(g, lambda x: np.sin(2 * np.pi * x))
            exact = 2 * np.pi * np.cos(2 * np.pi * g.axis_coords())
            errs.append(np.max(np.abs(central_diff(f, 0).values - exact)))
        assert fitted_order(ns, errs) >= 3.8

    def test_discrete_integration_by_parts_exact(self):
        rng = np.random.default_rng(1)
        g = grid1(16)
        f = GridFunction(g, rng.normal(size=16))
        w = GridFunction(g, rng.normal(size=16))
        lhs = integrate(GridFunction(g, w.values * central_diff(f, 0).values))
        rhs = -integrate(GridFunction(g, f.values * central_diff(w, 0).values))
        assert lhs == pytest.approx(rhs, abs=1e-15)

    def test_translation_equivariance_exact(self):
        rng = np.random.default_rng(2)
        g = TorusGrid(2, 12)
        f = GridFunction(g, rng.normal(size=(12, 12)))
        for axis in (0, 1):
            d = central_diff(f, axis).values
            shifted = GridFunction(g, np.roll(f.values, 3, axis=0))
            d_shift = central_diff(shifted, axis).values
            assert np.array_equal(np.roll(d, 3, axis=0), d_shift)


class TestGradientDivergence:
    def test_gradient_of_zero(self):
        g = TorusGrid(2, 8)
        v = gradient_central(g.zeros())
        for k in range(2):
            assert np.all(v.component(k).values == 0.0)

    def test_no_cross_axis_dependence(self):
        g = TorusGrid(2, 16)
        f = sample(g, lambda x, y: np.sin(2 * np.pi * x))
        v = gradient_central(f)
        assert np.all(v.component(1).values == 0.0)

    def test_components_match_central_diff(self):
        rng = np.random.default_rng(3)
        g = TorusGrid(2, 10)
        f = GridFunction(g, rng.normal(size=(10, 10)))
        v = gradient_central(f)
        for k in range(2):
            assert np.array_equal(v.component(k).values, central_diff(f, k).values)

    def test_divergence_of_constant_field(self):
        g = TorusGrid(2, 8)
        v = GridVectorField(g, (g.constant(2.0), g.constant(-1.0)))
        assert np.all(divergence_central(v).values == 0.0)

    def test_divergence_laplacian_order(self):
        ns, errs = (32, 64), []
        for n in ns:
            g = grid1(n)
            f = sample(g, lambda x: np.sin(2 * np.pi * x))
            lap = divergence_central(gradient_central(f)).values
            exact = -(2 * np.pi) ** 2 * np.sin(2 * np.pi * g.axis_coords())
            errs.append(np.max(np.abs(lap - exact)))
        assert fitted_order(ns, errs) >= 3.7

    def test_divergence_integrates_to_zero(self):
        rng = np.random.default_rng(4)
        g = TorusGrid(2, 9)
        v = GridVectorField(
            g,
            (GridFunction(g, rng.normal(size=(9, 9))),
             GridFunction(g, rng.normal(size=(9, 9)))),
        )
        assert integrate(divergence_central(v)) == pytest.approx(0.0, abs=1e-14)


class TestUpwind:
    def test_constant_u_gives_drift_power(self):
        g = TorusGrid(2, 8)
        out = upwind_grad_power(g.constant(2.0), (1.5, -0.5), 2.5)
        expected = 1.5**2.5 + 0.5**2.5
        assert np.allclose(out.values, expected, rtol=1e-14)

    def test_constant_u_zero_drift(self):
        out = upwind_grad_power(grid1().constant(1.0), (0.0,), 2.0)
        assert np.all(out.values == 0.0)

    def test_nonnegative_on_random_input(self):
        rng = np.random.default_rng(5)
        g = TorusGrid(2, 12)
        u = GridFunction(g, rng.normal(size=(12, 12)))
        out = upwind_grad_power(u, rng.normal(size=2), 1.7)
        assert np.all(out.values >= 0.0)

    def test_monotone_in_neighbors(self):
        # raising one neighbor value never raises the scheme value elsewhere
        rng = np.random.default_rng(6)
        g = grid1(16)
        u = GridFunction(g, rng.normal(size=16))
        base = upwind_grad_power(u, (0.7,), 2.0).values
        for i in (0, 5, 11):
            bumped = u.values.copy()
            bumped[i] += 0.3
            out = upwind_grad_power(GridFunction(g, bumped), (0.7,), 2.0).values
            mask = np.ones(16, bool)
            mask[i] = False
            assert np.all(out[mask] <= base[mask] + 1e-14)

    def test_first_order_on_smooth_u(self):
        ns, errs = (64, 128, 256), []
        for n in ns:
            g = grid1(n)
            u = sample(g, lambda x: np.sin(2 * np.pi * x) / (2 * np.pi))
            out = upwind_grad_power(u, (0.0,), 2.0).values
            exact = np.cos(2 * np.pi * g.axis_coords()) ** 2
            errs.append(np.max(np.abs(out - exact)))
        order = fitted_order(ns, errs)
        assert 0.7 <= order <= 1.3
        assert errs[1] <= 8.0 / 128


class TestIntegrate:
    def test_unit_constant(self):
        for g in (grid1(5), TorusGrid(2, 7)):
            assert integrate(g.constant(1.0)) == pytest.approx(1.0, abs=1e-15)

    def test_cosine_orthogonality(self):
        for n in (5, 16, 37):
            g = grid1(n)
            f = sample(g, lambda x: np.cos(2 * np.pi * x))
            assert integrate(f) == pytest.approx(0.0, abs=1e-13)

    def test_sampled_potential_mean_zero(self):
        g = grid1(200)
        f = sample(g, lambda x: 10 * np.cos(2 * np.pi * (x - 0.25)))
        assert abs(integrate(f)) <= 1e-12


class TestSerialization:
    def test_csv_roundtrip_1d(self, tmp_path):
        rng = np.random.default_rng(7)
        g = grid1(11)
        f = GridFunction(g, rng.normal(size=11))
        path = tmp_path / "f.csv"
        to_csv(f, path)
        back = from_csv(path, 1)
        assert np.allclose(back.values, f.values, rtol=1e-16, atol=0)
        header, first = path.read_text().splitlines()[:2]
        assert header == "x,value"
        assert first.count(",") == 1

    def test_csv_roundtrip_2d(self, tmp_path):
        rng = np.random.default_rng(8)
        g = TorusGrid(2, 6)
        f = GridFunction(g, rng.normal(size=(6, 6)))
        path = tmp_path / "f.csv"
        to_csv(f, path)
        back = from_csv(path, 2)
        assert np.allclose(back.values, f.values, rtol=1e-16, atol=0)

    def test_json_record_roundtrip(self):
        rng = np.random.default_rng(9)
        g = TorusGrid(2, 5)
        f = GridFunction(g, rng.normal(size=(5, 5)))
        rec = json.loads(json.dumps(to_json_record(f)))
        back = from_json_record(rec)
        assert back.grid == g
        assert np.array_equal(back.values, f.values)
