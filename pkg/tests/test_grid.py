import math

import numpy as np
import pytest

from mfgforecast.carleman import CarlemanParams, residual_weights
from mfgforecast.grid import (
    GridError,
    d1t,
    d1x,
    d2x,
    dt_forward3,
    integrate_x,
    integrate_xt,
    make_grid,
    neumann_defect,
    neumann_edges,
    neumann_inner,
)


@pytest.fixture
def g():
    return make_grid(21, 11, 1.0)


def test_make_grid_steps(g):
    assert g.hx == pytest.approx(0.1, abs=1e-15)
    assert g.ht == pytest.approx(0.1, abs=1e-15)
    small = make_grid(5, 4, 1.0)
    assert small.hx == 0.5
    assert small.ht == pytest.approx(1 / 3, abs=1e-15)
    assert g.hx * (g.nx - 1) == pytest.approx(2.0, abs=1e-14)
    assert g.x[0] == -1.0 and g.x[-1] == 1.0


@pytest.mark.parametrize("args", [(3, 4, 1.0), (5, 3, 1.0), (21, 11, 0.0), (21, 11, -1.0)])
def test_make_grid_rejects(args):
    with pytest.raises(GridError):
        make_grid(*args)


def test_d1x_constants_and_linears(g):
    assert np.all(d1x(np.full(g.nx, 3.7), g) == pytest.approx(0.0, abs=1e-13))
    np.testing.assert_allclose(d1x(g.x, g), 1.0, atol=1e-13)
    np.testing.assert_allclose(d1x(g.x**2, g)[1:-1], 2 * g.x[1:-1], atol=1e-13)


def test_d2x_quadratic_and_constant(g):
    np.testing.assert_allclose(d2x(g.x**2, g)[1:-1], 2.0, atol=1e-11)
    np.testing.assert_allclose(d2x(np.full(g.nx, -2.0), g), 0.0, atol=1e-12)


def test_d2x_cosine_second_order():
    errs = []
    for nx in (21, 41, 81, 161):
        gg = make_grid(nx, 4, 1.0)
        f = np.cos(np.pi * gg.x)
        diff = d2x(f, gg) + np.pi**2 * f
        errs.append(math.sqrt(gg.wx @ diff**2))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders >= 1.9), orders
    gg = make_grid(41, 4, 1.0)
    assert np.max(np.abs(d2x(np.cos(np.pi * gg.x), gg) + np.pi**2 * np.cos(np.pi * gg.x))) < 0.05


def test_d1t_exact_for_quadratics_in_time(g):
    X, T = g.mesh()
    np.testing.assert_allclose(d1t(T**2 + X, g), 2 * T, atol=1e-12)


def test_dt_forward3_modes():
    ht = 0.1
    t = np.array([0.0, ht, 2 * ht])
    f0, f1, f2 = (np.full(4, v) for v in t)
    np.testing.assert_allclose(dt_forward3(f0, f1, f2, ht), 1.0, atol=1e-13)
    np.testing.assert_allclose(dt_forward3(f0, f1, f2, ht, "as-printed"), 0.0, atol=1e-13)
    c = np.ones(4)
    np.testing.assert_allclose(dt_forward3(c, c, c, ht), 0.0, atol=0)
    np.testing.assert_allclose(dt_forward3(c, c, c, ht, "as-printed"), -1 / (2 * ht))
    with pytest.raises(GridError):
        dt_forward3(c, c, np.ones(3), ht)
    with pytest.raises(ValueError):
        dt_forward3(c, c, c, ht, "other")


def test_integrate_x(g):
    assert integrate_x(np.full(g.nx, 0.5), g) == pytest.approx(1.0, abs=1e-14)
    assert integrate_x(g.x, g) == pytest.approx(0.0, abs=1e-14)
    # composite trapezoid on x^2 overshoots by exactly (b - a) h^2 f'' / 12 = h^2 / 3
    assert integrate_x(g.x**2, g) == pytest.approx(2 / 3 + g.hx**2 / 3, abs=1e-14)
    with pytest.raises(GridError):
        integrate_x(np.ones(20), g)


def test_integrate_xt(g):
    assert integrate_xt(np.ones(g.shape), 1.0, g) == pytest.approx(2.0, abs=1e-13)
    assert integrate_xt(np.zeros(g.shape), 1.0, g) == 0.0
    # phi^2 with lam=1, c=3, T=1 integrated in t in closed form; trapezoid error O(ht^2)
    fine = make_grid(5, 2001, 1.0)
    w = np.exp(2 * (fine.T - fine.t + 3.0))
    exact = math.exp(8) - math.exp(6)
    assert integrate_xt(np.ones(fine.shape), w, fine) == pytest.approx(exact, rel=1e-6)
    assert exact == pytest.approx(2577.529, abs=1e-3)
    with pytest.raises(GridError):
        integrate_xt(np.ones((21, 10)), 1.0, g)


def test_residual_weight_profile_matches_closed_form(g):
    p = CarlemanParams()
    np.testing.assert_allclose(residual_weights(g.t, p), np.exp(2 * (1 - g.t + 3) - 2 * 1.1 * 3), rtol=1e-13)


def test_neumann_helpers(g):
    rng = np.random.default_rng(3)
    f = rng.normal(size=(g.nx, g.nt))
    for h in (neumann_edges, neumann_inner):
        assert np.max(np.abs(neumann_defect(h(f), g))) < 1e-12
    assert np.array_equal(neumann_inner(f)[[0, -1]], f[[0, -1]])
    assert np.array_equal(neumann_edges(f)[1:-1], f[1:-1])
