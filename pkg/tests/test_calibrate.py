import numpy as np
import pytest

from mfgforecast.calibrate import (
    CalibrationEntry,
    CalibrationError,
    CalibrationSpec,
    rank_entries,
    recentred,
    score,
    sweep,
    sweep_periods,
)
from mfgforecast.functional import State
from mfgforecast.grid import make_grid
from mfgforecast.metrics import MetricsError, error_metric, summarize, true_cost
from mfgforecast.oracle import make_manufactured, synthetic_period
from mfgforecast.params import PERIOD_PRESETS, MfgParams, ParamError
from mfgforecast.solver import SolverOptions, forecast

FAST = SolverOptions(max_iter=40)


@pytest.fixture(scope="module")
def g():
    return make_grid(21, 11, 1.0)


@pytest.fixture(scope="module")
def data(g):
    return synthetic_period(MfgParams(beta=0.1, r=1.0), g, amplitudes=(0.3,)).weeks


def test_error_metric_examples():
    m = np.array([[1.0, 0.5], [2.0, 0.0]])
    np.testing.assert_array_equal(error_metric(m, m), 0.0)
    assert error_metric(np.array([1.25]), np.array([1.0]))[0] == pytest.approx(0.25, abs=1e-15)
    # below the floor the denominator is the floor
    assert error_metric(np.array([1e-3]), np.array([0.0]))[0] == pytest.approx(1.0)
    with pytest.raises(MetricsError):
        error_metric(np.ones(3), np.ones(4))


def test_error_metric_scale_invariance():
    rng = np.random.default_rng(0)
    a, b = rng.uniform(0.1, 2, (21, 11)), rng.uniform(0.1, 2, (21, 11))
    for k in (0.5, 2.0, 8.0):
        # powers of two scale without rounding, so the invariance is exact
        assert np.array_equal(error_metric(k * a, k * b), error_metric(a, b))
    for k in (3.0, 7.25):
        np.testing.assert_allclose(error_metric(k * a, k * b), error_metric(a, b), rtol=0, atol=1e-14)


def test_true_cost_denominator_and_homogeneity(g):
    p = MfgParams(beta=0.5, r=2.0, kernel=0.0)
    u = np.full(g.shape, 2.0)
    m = np.full(g.shape, 0.5)
    # constant fields: L1 = 0 with K=0, L2 = 0; add a linear-in-time u so L1 = u_t = 1
    u = u + g.mesh()[1]
    tc = true_cost(State(u, m), p, g)
    np.testing.assert_allclose(tc, np.sqrt(2.0 / 8.5), rtol=1e-12)
    # doubling the residual doubles the curve while the denominator stays fixed
    u2 = 2.0 + 2 * g.mesh()[1]
    np.testing.assert_allclose(true_cost(State(u2, m), p, g), 2 * tc, rtol=1e-12)


def test_true_cost_zero_at_manufactured_with_forcing(g):
    p = MfgParams(beta=0.5, r=2.0)
    sc = make_manufactured(p, g, 0.5, 0.5, forcing="discrete")
    assert np.max(true_cost(State(sc.u_star, sc.m_star), p, g, sc.forcing)) <= 1e-8


def test_true_cost_zero_denominator(g):
    with pytest.raises(MetricsError, match="both identically zero"):
        true_cost(State(np.zeros(g.shape), np.zeros(g.shape)), MfgParams(beta=1.0, r=1.0), g)


def test_summary_window():
    err = np.zeros((5, 11))
    err[:, :3] = 9.0
    err[0, 3:] = 0.5
    s = summarize(err)
    assert s["mean_relative_error"] == pytest.approx(0.1)
    assert s["fraction_below_threshold"] == pytest.approx(0.8)
    assert s["forecast_weeks"] == [4, 11]


def test_presets_loadable():
    assert sorted(PERIOD_PRESETS) == list(range(1, 11))
    p7 = MfgParams.from_preset(7)
    assert (p7.u_left, p7.beta, p7.r) == (1.6, 2.75, 300.0)
    assert [MfgParams.from_preset(k).beta for k in range(1, 11)] == [0.25, 0.05, 0.5, 0.3, 1.5, 3.0, 2.75, 1.5, 0.75, 2.5]
    assert [MfgParams.from_preset(k).r for k in range(1, 11)] == [50, 80, 75, 80, 100, 200, 300, 125, 75, 175]
    assert [MfgParams.from_preset(k).u_left for k in range(1, 11)] == [2, 1, 2, 3.8, 3.7, 5, 1.6, 2.6, 3, 4]
    for bad in (0, 11):
        with pytest.raises(ParamError):
            MfgParams.from_preset(bad)


@pytest.mark.parametrize("kw,msg", [
    (dict(betas=[], rs=[1.0], u_lefts=[0.0]), "empty"),
    (dict(betas=[0.1, -0.2], rs=[1.0], u_lefts=[0.0]), "positive"),
    (dict(betas=[0.1], rs=[np.nan], u_lefts=[0.0]), "non-finite"),
    (dict(betas=[0.1], rs=[1.0], u_lefts=[0.0], scoring="eyeball"), "scoring"),
])
def test_spec_validation(kw, msg):
    with pytest.raises(CalibrationError, match=msg):
        CalibrationSpec(**kw)


def test_around_preset_grid():
    spec = CalibrationSpec.around_preset(7)
    assert len(spec.triples()) == 27
    assert spec.betas[1] == 2.75 and spec.rs[1] == 300.0 and spec.u_lefts[1] == 1.6


def test_single_triple_equals_direct_forecast(g, data):
    spec = CalibrationSpec([0.1], [1.0], [0.0])
    rep = sweep(data, spec, g, opts=FAST)
    assert len(rep.entries) == 1
    direct = forecast(data, MfgParams(beta=0.1, r=1.0), g, FAST)
    e = rep.best
    assert np.array_equal(e.result.result.state.m, direct.result.state.m)
    assert e.score == direct.metrics.summary["mean_relative_error"]
    assert rep.to_json()["best"]["rank"] == 1


def test_sweep_count_and_order(g, data):
    spec = CalibrationSpec([0.05, 0.1], [0.5, 1.0, 2.0], [0.0, 1.0])
    rep = sweep(data, spec, g, opts=FAST)
    assert len(rep.entries) == 12
    scores = [round(e.score, 9) for e in rep.entries]
    assert scores == sorted(scores)
    assert {e.triple for e in rep.entries} == set(spec.triples())


def test_sweep_parallel_matches_serial(g, data):
    spec = CalibrationSpec([0.05, 0.1], [1.0], [0.0])
    a = sweep(data, spec, g, opts=FAST)
    b = sweep(data, spec, g, opts=FAST, workers=2)
    assert [e.triple for e in a.entries] == [e.triple for e in b.entries]
    assert [e.score for e in a.entries] == [e.score for e in b.entries]


def test_ranking_tie_break_lexicographic():
    es = [CalibrationEntry(0.2, 1.0, 0.0, 0.5), CalibrationEntry(0.1, 2.0, 0.0, 0.5),
          CalibrationEntry(0.1, 1.0, 1.0, 0.5 + 1e-15), CalibrationEntry(0.1, 1.0, 0.0, None, error="x"),
          CalibrationEntry(0.3, 1.0, 0.0, 0.1)]
    ranked = [e.triple for e in rank_entries(es)]
    assert ranked == [(0.3, 1.0, 0.0), (0.1, 1.0, 1.0), (0.1, 2.0, 0.0), (0.2, 1.0, 0.0), (0.1, 1.0, 0.0)]


def test_all_failed_runs_raise_with_details(g, data):
    # a kernel with the wrong shape makes every forecast fail validation
    spec = CalibrationSpec([0.1], [1.0], [0.0])
    with pytest.raises(CalibrationError, match="all 1 calibration runs failed"):
        sweep(data, spec, g, kernel=np.ones((3, 3)), opts=FAST)


def test_score_rules(g, data):
    fc = forecast(data, MfgParams(beta=0.1, r=1.0), g, FAST)
    assert score(fc.metrics, "mean_error") == fc.metrics.summary["mean_relative_error"]
    assert score(fc.metrics, "fraction_below") == 1 - fc.metrics.summary["fraction_below_threshold"]
    with pytest.raises(CalibrationError):
        score(fc.metrics, "other")


def test_recentring_rules():
    spec = CalibrationSpec([0.1, 0.2, 0.4], [-1.0, 0.0, 1.0], [2.0, 3.0, 4.0])
    moved = recentred(spec, (0.5, 5.0, -1.0))
    np.testing.assert_allclose(moved.betas, [0.25, 0.5, 1.0])
    np.testing.assert_allclose(moved.rs, [4.0, 5.0, 6.0])
    np.testing.assert_allclose(moved.u_lefts, [-2.0, -1.0, 0.0])


def test_warm_start_recentres_on_previous_best(g, data):
    other = synthetic_period(MfgParams(beta=0.1, r=1.0), g, amplitudes=(0.2,)).weeks
    spec = CalibrationSpec([0.05, 0.1], [1.0], [0.0], warm_start=True)
    first, second = sweep_periods([data, other], spec, g, opts=FAST)
    b = first.best.beta
    assert {e.beta for e in second.entries} == set(recentred(spec, first.best.triple).betas)
    assert b in {e.beta for e in second.entries}
    cold = sweep_periods([data, other], CalibrationSpec([0.05, 0.1], [1.0], [0.0]), g, opts=FAST)
    assert {e.beta for e in cold[1].entries} == {0.05, 0.1}
