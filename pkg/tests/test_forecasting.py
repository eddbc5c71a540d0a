import math

import numpy as np
import pytest
from scipy import stats

from scoredriven import (
    Coefficients,
    EmptyInput,
    FilterDivergence,
    IdentityLink,
    ModelSpec,
    empirical_quantile,
    filter_series,
    forecast,
    simulate_series,
    unlink,
)

from oracles import frozen


@pytest.fixture(scope="module")
def tdist_model():
    spec = ModelSpec("TDistLocationScale", time_varying=[1, 2])
    c = Coefficients.from_diagonals(spec, [0.02, 0.01, math.log(6.52618)], {1: [0.07, 0.05, 0]}, {1: [0.94, 0.86, 0]})
    y, _ = simulate_series(spec, c, None, 276, np.random.default_rng(200))
    return spec, c, y


def test_thread_count_does_not_matter(tdist_model):
    spec, c, y = tdist_model
    one = forecast(y, spec, c, 12, 500, seed=9, threads=1)
    four = forecast(y, spec, c, 12, 500, seed=9, threads=4)
    for a, b in [(one.parameter_scenarios, four.parameter_scenarios),
                 (one.observation_scenarios, four.observation_scenarios),
                 (one.parameter_forecast, four.parameter_forecast),
                 (one.observation_forecast, four.observation_forecast)]:
        assert a.tobytes() == b.tobytes()
    for q in one.quantiles:
        assert one.quantiles[q].tobytes() == four.quantiles[q].tobytes()


def test_environment_thread_cap(tdist_model, monkeypatch):
    spec, c, y = tdist_model
    ref = forecast(y, spec, c, 3, 50, seed=1, threads=1)
    monkeypatch.setenv("SDM_THREADS", "3")
    got = forecast(y, spec, c, 3, 50, seed=1)
    np.testing.assert_array_equal(ref.observation_scenarios, got.observation_scenarios)
    monkeypatch.setenv("SDM_THREADS", "0")
    with pytest.raises(ValueError):
        forecast(y, spec, c, 3, 50, seed=1)


def test_split_runs_concatenate(tdist_model):
    spec, c, y = tdist_model
    full = forecast(y, spec, c, 6, 2000, seed=4)
    a = forecast(y, spec, c, 6, 1000, seed=4)
    b = forecast(y, spec, c, 6, 1000, seed=4, first_scenario=1000)
    np.testing.assert_array_equal(full.observation_scenarios,
                                  np.hstack([a.observation_scenarios, b.observation_scenarios]))
    np.testing.assert_array_equal(full.parameter_scenarios,
                                  np.concatenate([a.parameter_scenarios, b.parameter_scenarios], axis=2))


def test_forecast_invariants(tdist_model):
    spec, c, y = tdist_model
    fc = forecast(y, spec, c, 12, 2000, seed=5)
    assert fc.horizon == 12 and fc.n_scenarios == 2000
    assert fc.parameter_forecast.shape == (12, 3)
    assert fc.parameter_scenarios.shape == (12, 3, 2000)
    assert sorted(fc.quantiles) == [0.025, 0.5, 0.975]
    np.testing.assert_allclose(fc.observation_forecast, fc.observation_scenarios.mean(axis=1), atol=1e-12)
    np.testing.assert_allclose(fc.parameter_forecast, fc.parameter_scenarios.mean(axis=2), atol=1e-12)
    assert np.all(fc.quantiles[0.025] <= fc.quantiles[0.5])
    assert np.all(fc.quantiles[0.5] <= fc.quantiles[0.975])
    # constant nu column
    assert np.all(fc.parameter_forecast[:, 2] == fc.parameter_forecast[0, 2])
    assert fc.parameter_forecast[0, 2] == pytest.approx(6.52618, abs=1e-12)


def test_first_step_parameters_are_filtered_one_step_ahead(tdist_model):
    spec, c, y = tdist_model
    fc = forecast(y, spec, c, 2, 20, seed=6)
    # extending the series by the scenario draw and refiltering gives the same f
    fr = filter_series(spec, c, np.append(y, fc.observation_scenarios[0, 0]))
    np.testing.assert_allclose(fc.parameter_scenarios[0, :, 0], fr.f[-1], rtol=1e-13)
    np.testing.assert_array_equal(fc.parameter_scenarios[0], np.repeat(fc.parameter_scenarios[0, :, :1], 20, axis=1))
    fr2 = filter_series(spec, c, np.append(y, fc.observation_scenarios[:, 3]))
    np.testing.assert_allclose(fc.parameter_scenarios[1, :, 3], fr2.f[-1], rtol=1e-13)


def test_single_scenario(tdist_model):
    spec, c, y = tdist_model
    fc = forecast(y, spec, c, 5, 1, seed=7)
    np.testing.assert_array_equal(fc.parameter_forecast, fc.parameter_scenarios[:, :, 0])
    for q in fc.quantiles.values():
        np.testing.assert_array_equal(q, fc.observation_scenarios[:, 0])
    np.testing.assert_array_equal(fc.observation_forecast, fc.observation_scenarios[:, 0])


@pytest.mark.parametrize("name,omega,d", [
    ("TDistLocationScale", [0.02, 0.01, math.log(5.0)], 0),
    ("Gamma", [0.05, 0.02], 1),
    ("LogNormal", [0.01, -0.02], 0.5),
])
def test_first_step_distribution(name, omega, d):
    spec = ModelSpec(name, scaling=d)
    k = spec.k
    c = Coefficients.from_diagonals(spec, omega, {1: np.full(k, 0.03)}, {1: np.full(k, 0.9)})
    y, _ = simulate_series(spec, c, None, 300, np.random.default_rng(201))
    S = 10000
    fc = forecast(y, spec, c, 1, S, seed=8)
    f_next = fc.parameter_scenarios[0, :, 0]
    ks = stats.kstest(fc.observation_scenarios[0], frozen(name, f_next).cdf).statistic
    assert ks <= 1.63 / math.sqrt(S)


@pytest.mark.slow
def test_static_model_quantiles():
    spec = ModelSpec("Normal")
    c = Coefficients.from_diagonals(spec, [0.5, math.log(2.0)], {1: [0, 0]}, {1: [0, 0]})
    y = np.random.default_rng(202).normal(size=20)
    S = 100_000
    fc = forecast(y, spec, c, 3, S, seed=10)
    ref = stats.norm(0.5, math.sqrt(2.0))
    for q, vals in fc.quantiles.items():
        x = ref.ppf(q)
        se = math.sqrt(q * (1 - q) / S) / ref.pdf(x)
        assert np.all(np.abs(vals - x) <= 3 * se)
    np.testing.assert_array_equal(fc.parameter_forecast, np.tile(unlink(spec.links, c.omega), (3, 1)))


def test_seasonal_presample_rows():
    # series shorter than the largest lag: scenario paths continue the presample rows
    spec = ModelSpec("Normal", p=[1, 4], q=[1, 4], time_varying=[1])
    c = Coefficients.from_diagonals(spec, [0.0, 0.0], {1: [0.0, 0], 4: [0.0, 0]}, {1: [0.0, 0], 4: [0.0, 0]})
    init = np.array([[0.0, 1.0], [1.0, 1.0], [2.0, 1.0], [3.0, 1.0]])
    fc = forecast([0.1, 0.2], spec, c, 3, 4, init=init, seed=0)
    np.testing.assert_array_equal(fc.parameter_forecast[:, 0], [2.0, 3.0, 0.0])


def test_divergence_retry_cap():
    spec = ModelSpec("Normal", time_varying=[2], scaling=1, links=(IdentityLink(), IdentityLink()))
    c = Coefficients.from_diagonals(spec, [0.0, 0.1], {1: [0, 1.0]}, {1: [0, 0.0]})
    y = np.ones(10)
    filter_series(spec, c, y, [[0.0, 1.0]])
    with pytest.raises(FilterDivergence):
        forecast(y, spec, c, 30, 5, init=[[0.0, 1.0]], seed=0)


def test_forecast_argument_errors(tdist_model):
    spec, c, y = tdist_model
    with pytest.raises(ValueError):
        forecast(y, spec, c, 0, 10)
    with pytest.raises(ValueError):
        forecast(y, spec, c, 3, 0)
    with pytest.raises(ValueError):
        forecast(y, spec, c, 3, 10, quantiles=[0.5, 1.0])
    with pytest.raises(EmptyInput):
        forecast([], spec, c, 3, 10)


# -- empirical quantile ------------------------------------------------------


def test_empirical_quantile_examples():
    assert empirical_quantile([1, 2, 3, 4], 0.5) == 2.5
    x = np.random.default_rng(203).normal(size=1000)
    assert empirical_quantile(x, 0.0) == x.min()
    assert empirical_quantile(x, 1.0) == x.max()
    x = np.random.default_rng(204).normal(size=100_000)
    assert abs(empirical_quantile(x, 0.975) - 1.96) <= 0.03


def test_empirical_quantile_linear_rule():
    # position (n - 1) q between order statistics
    x = [10.0, 0.0, 30.0, 20.0, 40.0]
    assert empirical_quantile(x, 0.1) == pytest.approx(4.0)
    assert empirical_quantile(x, 0.9) == pytest.approx(36.0)


def test_empirical_quantile_errors():
    with pytest.raises(EmptyInput):
        empirical_quantile([], 0.5)
    with pytest.raises(ValueError):
        empirical_quantile([1.0], 1.5)
