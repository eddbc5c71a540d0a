import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scoredriven import (
    AllStartsFailed,
    Coefficients,
    FitOptions,
    IdentityLink,
    ModelSpec,
    ThetaLayout,
    filter_series,
    fit,
    fit_stats,
    get_distribution,
    objective,
    random_starts,
    simulate_series,
)
from scoredriven.estimation import Objective, _finite_random_starts, numerical_gradient, p_value, t_statistics

from oracles import garch_simulate


@pytest.fixture(scope="module")
def normal_data():
    spec = ModelSpec("Normal")
    c = Coefficients.from_diagonals(spec, [0.0, 0.02], {1: [0.1, 0.05]}, {1: [0.8, 0.95]})
    y, _ = simulate_series(spec, c, None, 1500, np.random.default_rng(100))
    return spec, y


@pytest.fixture(scope="module")
def normal_fit(normal_data):
    spec, y = normal_data
    return fit(spec, y, FitOptions(n_starts=3, seed=1))


# -- layout ----------------------------------------------------------------


def test_layout_names():
    spec = ModelSpec("TDistLocationScale", time_varying=[1, 2])
    assert ThetaLayout(spec).names == ["omega_1", "omega_2", "omega_3", "A_1_11", "A_1_22", "B_1_11", "B_1_22"]
    spec = ModelSpec("LogNormal", p=[1, 2, 11, 12], q=[1, 2, 11, 12], time_varying=[1])
    names = ThetaLayout(spec).names
    assert names[:2] == ["omega_1", "omega_2"]
    assert names[2:6] == ["A_1_11", "A_2_11", "A_11_11", "A_12_11"]
    assert names[6:] == ["B_1_11", "B_2_11", "B_11_11", "B_12_11"]


def test_layout_seasonal_lags():
    spec = ModelSpec("Normal", p=[1, 12], q=[1, 12])
    layout = ThetaLayout(spec)
    assert {n for n in layout.names if n[0] in "AB"} == {
        "A_1_11", "A_1_22", "A_12_11", "A_12_22", "B_1_11", "B_1_22", "B_12_11", "B_12_22"}


@settings(max_examples=100, deadline=None)
@given(
    name=st.sampled_from(["Normal", "TDistLocationScale", "BetaLocationScale", "Poisson"]),
    p=st.sets(st.integers(1, 6), min_size=1, max_size=3),
    q=st.sets(st.integers(1, 6), min_size=1, max_size=3),
    seed=st.integers(0, 2**32 - 1),
)
def test_layout_bijection(name, p, q, seed):
    k = get_distribution(name).num_params
    rng = np.random.default_rng(seed)
    tv = sorted(set(rng.choice(np.arange(1, k + 1), size=rng.integers(1, k + 1)).tolist()))
    spec = ModelSpec(name, p=sorted(p), q=sorted(q), time_varying=tv)
    layout = ThetaLayout(spec)
    assert layout.size == k + len(tv) * (len(p) + len(q))
    theta = rng.normal(size=layout.size)
    coef = layout.to_coefficients(theta)
    coef.check(spec)
    np.testing.assert_array_equal(layout.from_coefficients(coef), theta)
    assert layout.to_coefficients(layout.from_coefficients(coef)).equals(coef)


# -- objective -------------------------------------------------------------


def test_objective_deterministic(normal_data):
    spec, y = normal_data
    theta = np.array([0.01, 0.03, 0.1, 0.05, 0.7, 0.9])
    a = objective(spec, y, None, theta)
    b = objective(spec, y, None, theta)
    assert a == b and math.isfinite(a)
    obj = Objective(spec, y)
    assert obj(theta) == a and obj(theta) == a


def test_objective_matches_filter(normal_data):
    spec, y = normal_data
    theta = np.array([0.01, 0.03, 0.1, 0.05, 0.7, 0.9])
    coef = ThetaLayout(spec).to_coefficients(theta)
    assert objective(spec, y, None, theta) == pytest.approx(-filter_series(spec, coef, y).total_loglik, rel=1e-14)


def test_objective_static_optimum():
    y = np.random.default_rng(101).normal(2.0, 1.5, size=400)
    spec = ModelSpec("Normal")
    mu, s2 = get_distribution("Normal").static_mle(y)

    def at(m, v):
        return objective(spec, y, None, [m, math.log(v), 0, 0, 0, 0])

    best = at(mu, s2)
    assert best == pytest.approx(-get_distribution("Normal").log_pdf([mu, s2], y[1:]).sum(), rel=1e-13)
    for dm in np.linspace(-0.2, 0.2, 9):
        for dv in np.linspace(0.8, 1.2, 9):
            assert at(mu + dm, s2 * dv) >= best - 1e-9


def test_objective_divergence_penalty(normal_data):
    spec, y = normal_data
    assert objective(spec, y, [[0.0, 1.0]], [0, 0, 0.1, 0.1, 1e6, 1e6]) == math.inf
    # no unconditional mean when B = 1
    assert objective(spec, y, None, [0, 0, 0.1, 0.1, 1.0, 1.0]) == math.inf
    assert objective(spec, y, None, [np.nan, 0, 0, 0, 0, 0]) == math.inf


# -- random starts ---------------------------------------------------------


def test_random_starts():
    spec = ModelSpec("TDistLocationScale", time_varying=[1, 2])
    a = random_starts(spec, 3, seed=5)
    b = random_starts(spec, 3, seed=5)
    assert len(a) == 3 and all(len(v) == 7 for v in a)
    for u, v in zip(a, b):
        np.testing.assert_array_equal(u, v)
    assert len({tuple(v) for v in a}) == 3
    flat = np.concatenate(random_starts(spec, 200, seed=6))
    assert flat.min() >= -0.5 and flat.max() <= 0.5
    assert abs(flat.mean()) < 0.05
    with pytest.raises(ValueError):
        random_starts(spec, 0)


# -- diagnostics -------------------------------------------------------------


@pytest.mark.parametrize("t,p", [(1.2016, 0.2686), (6.4380, 0.0004), (1.8454, 0.1075)])
def test_p_value_convention(t, p):
    assert p_value(t, 7) == pytest.approx(p, abs=5e-5)
    assert p_value(-t, 7) == p_value(t, 7)


def test_p_value_zero():
    assert p_value(0.0, 7) == 1.0


def test_information_criteria(normal_fit):
    r = normal_fit
    assert r.aic == pytest.approx(2 * r.n_params - 2 * r.loglik, abs=1e-6)
    assert r.bic == pytest.approx(r.n_params * math.log(r.n_obs) - 2 * r.loglik, abs=1e-6)
    assert r.n_params == 6 and r.n_obs == 1500


def test_fit_result_consistency(normal_data, normal_fit):
    spec, y = normal_data
    r = normal_fit
    assert r.loglik == pytest.approx(-objective(spec, y, None, r.theta_hat), abs=1e-9)
    assert r.loglik == pytest.approx(filter_series(spec, r.coefficients, y).total_loglik, abs=1e-9)
    np.testing.assert_allclose(r.t_stats, r.theta_hat / r.std_errors, rtol=1e-14)
    np.testing.assert_allclose(r.p_values, p_value(r.t_stats, r.n_params), rtol=1e-14)
    assert np.all(np.isfinite(r.std_errors)) and np.all(r.std_errors > 0)


def test_first_order_optimality(normal_data, normal_fit):
    spec, y = normal_data
    g = numerical_gradient(Objective(spec, y), normal_fit.theta_hat)
    assert np.max(np.abs(g)) <= 1e-3


def test_multistart_monotone(normal_fit):
    r = normal_fit
    assert len(r.starts) == 3
    assert all(r.loglik >= s.loglik for s in r.starts)
    assert r.starts[r.best_start].loglik == r.loglik


def test_fit_deterministic(normal_data, normal_fit):
    spec, y = normal_data
    again = fit(spec, y, FitOptions(n_starts=3, seed=1))
    np.testing.assert_array_equal(again.theta_hat, normal_fit.theta_hat)


def test_fit_stats_report(normal_fit):
    text = fit_stats(normal_fit)
    lines = text.splitlines()
    assert lines[0] == "-" * 56 and lines[7] == "-" * 56
    assert lines[1].startswith("Distribution:") and lines[1].endswith("Normal")
    assert lines[2].split()[-1] == "1500"
    assert lines[4].startswith("Log-likelihood:") and lines[4].endswith(f"{normal_fit.loglik:.4f}")
    assert lines[5].endswith(f"{normal_fit.aic:.4f}") and lines[6].endswith(f"{normal_fit.bic:.4f}")
    assert lines[8].split() == ["Parameter", "Estimate", "Std.Error", "t", "stat", "p-value"]
    rows = lines[9:]
    assert [r.split()[0] for r in rows] == normal_fit.names
    est = float(rows[4].split()[1])
    assert est == pytest.approx(normal_fit.theta_hat[4], abs=5e-5)


def test_verbose_rounds(normal_data, capsys):
    spec, y = normal_data
    fit(spec, y[:300], FitOptions(n_starts=2, seed=3, verbosity=1))
    out = capsys.readouterr().out.splitlines()
    assert out[0].startswith("Round 1 of 2 - Log-likelihood: -")
    assert out[1].startswith("Round 2 of 2 - Log-likelihood: -")
    fit(spec, y[:300], FitOptions(n_starts=1, seed=3, verbosity=2))
    out = capsys.readouterr().out
    assert "Best initial_point optimization result:" in out and "Iterations:" in out
    fit(spec, y[:300], FitOptions(n_starts=1, seed=3, verbosity=0))
    assert capsys.readouterr().out == ""


def test_zero_estimate_row():
    t = t_statistics([0.0, 0.5, 0.0, 1.0], [0.1, 0.25, np.nan, np.nan])
    assert t[0] == 0.0 and t[1] == 2.0 and t[2] == 0.0 and np.isnan(t[3])
    assert p_value(t[0], 7) == 1.0


# -- methods and failure modes ---------------------------------------------


def _garch_setup(n=1000, seed=103):
    y = garch_simulate(n, 0.05, 0.1, 0.85, np.random.default_rng(seed))
    spec = ModelSpec("Normal", scaling=1, time_varying=[2], links=(IdentityLink(), IdentityLink()))
    return spec, y


def test_boxed_fit_respects_bounds():
    spec, y = _garch_setup()
    lb, ub = [-1, 0, 0, 0.5], [1, 1, 0.5, 1]
    r = fit(spec, y, FitOptions(method="ipnewton", initial_points=[[0.0, 0.5, 0.25, 0.75]], lower=lb, upper=ub))
    assert np.all(r.theta_hat >= lb) and np.all(r.theta_hat <= ub)
    # tight box that excludes the unconstrained optimum
    r = fit(spec, y, FitOptions(method="ipnewton", initial_points=[[0.0, 0.5, 0.25, 0.75]],
                                lower=lb, upper=[1, 1, 0.05, 1]))
    assert r.theta_hat[2] <= 0.05


def test_methods_agree():
    spec, y = _garch_setup()
    start = [[0.0, 0.1, 0.1, 0.9]]
    nm = fit(spec, y, FitOptions(initial_points=start))
    lb = fit(spec, y, FitOptions(method="lbfgs", initial_points=start))
    ip = fit(spec, y, FitOptions(method="ipnewton", initial_points=start,
                                 lower=[-1, 0, 0, 0.5], upper=[1, 1, 0.5, 1]))
    assert lb.loglik == pytest.approx(nm.loglik, abs=1e-3)
    assert ip.loglik == pytest.approx(nm.loglik, abs=1e-3)
    np.testing.assert_allclose(ip.theta_hat, nm.theta_hat, atol=5e-3)


def test_options_validation():
    with pytest.raises(ValueError):
        FitOptions(method="bfgs2")
    with pytest.raises(ValueError):
        FitOptions(method="ipnewton")
    with pytest.raises(ValueError):
        FitOptions(method="lbfgs", lower=[0, 0], upper=[1, 0])
    with pytest.raises(ValueError):
        FitOptions(n_starts=0)
    with pytest.raises(ValueError):
        FitOptions(verbosity=4)
    assert FitOptions(method="Nelder-Mead").method == "nm"
    assert FitOptions(method="QuasiNewton").method == "lbfgs"


def test_bad_start_length(normal_data):
    spec, y = normal_data
    with pytest.raises(ValueError, match="expected 6"):
        fit(spec, y, FitOptions(initial_points=[[0.0, 1.0]]))


def test_all_starts_failed():
    spec = ModelSpec("Normal", time_varying=[1], links=(IdentityLink(), IdentityLink()))
    y = np.random.default_rng(104).normal(size=50)
    # negative variance start: every evaluation is infinite, the simplex never moves
    with pytest.raises(AllStartsFailed):
        fit(spec, y, FitOptions(initial_points=[[0.0, -1.0, 0.1, 0.5], [0.0, -2.0, 0.1, 0.5]]))


def test_starts_skip_diverging_draws():
    # with two AR lags many uniform draws have sum(B) outside the unit circle
    spec = ModelSpec("LogNormal", p=[1, 2], q=[1, 2])
    y = np.random.default_rng(105).lognormal(size=200)
    obj = Objective(spec, y)
    stream = random_starts(spec, 200, seed=7)
    finite = [x for x in stream if math.isfinite(obj(x))]
    assert len(finite) < len(stream)
    chosen = _finite_random_starts(obj, 3, seed=7)
    for a, b in zip(chosen, finite[:3]):
        np.testing.assert_array_equal(a, b)


def test_fixed_init_is_used(normal_data):
    spec, y = normal_data
    init = [[0.0, 0.5]]
    r = fit(spec, y[:400], FitOptions(n_starts=1, seed=2), init=init)
    np.testing.assert_array_equal(r.init, init)
    assert r.loglik == pytest.approx(filter_series(spec, r.coefficients, y[:400], init).total_loglik, abs=1e-9)


def test_boxed_garch_pipeline_on_synthetic_returns():
    """Identity-link Normal GAS with the variance box used for daily FX returns."""
    y = 0.5 * garch_simulate(1974, 0.0108, 0.1534, 0.8059, np.random.default_rng(7))
    spec = ModelSpec("Normal", scaling=1, time_varying=[2], links=(IdentityLink(), IdentityLink()))
    lo, hi = [-1.0, 0.0, 0.0, 0.5], [1.0, 1.0, 0.5, 1.0]
    init = [[y.mean(), y.var(ddof=1)]]
    res = fit(spec, y, FitOptions(method="ipnewton", initial_points=[[0.0, 0.5, 0.25, 0.75]], lower=lo, upper=hi),
              init=init)
    assert np.all(res.theta_hat >= lo) and np.all(res.theta_hat <= hi)
    # refining from the interior-point solution with another method gains nothing
    ref = fit(spec, y, FitOptions(method="lbfgs", initial_points=[res.theta_hat], lower=lo, upper=hi), init=init)
    assert ref.loglik - res.loglik <= 1e-4
    # GARCH persistence B - A is recovered
    c = dict(zip(res.names, res.theta_hat))
    assert abs((c["B_1_22"] - c["A_1_22"]) - 0.8059) <= 3 * max(res.std_errors[2:])
