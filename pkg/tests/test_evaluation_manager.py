import math
from statistics import NormalDist

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from candle_dqn.evaluation_manager import TABLE_COLUMNS, EvaluationManager, full_report
from candle_dqn.exceptions import DegenerateSeriesError, DomainError, UndefinedSharpeError
from candle_dqn.trade_environment import EquityCurve

EM = EvaluationManager


def curve(*wealth):
    return EquityCurve(np.array(wealth, dtype=float))


def test_profit_rate_curve():
    assert EM.profit_rate_curve(curve(1000, 1000, 1000)).tolist() == [0.0, 0.0, 0.0]
    np.testing.assert_allclose(EM.profit_rate_curve(curve(1000, 1100)), [0.0, 10.0])
    np.testing.assert_allclose(EM.profit_rate_curve(curve(1000, 500)), [0.0, -50.0])


def test_arithmetic_return():
    assert EM.arithmetic_return(curve(5, 5, 5)) == 0.0
    assert EM.arithmetic_return(curve(100, 110, 99)) == pytest.approx(0.0, abs=1e-12)
    assert EM.arithmetic_return(curve(100, 105)) == pytest.approx(5.0)
    np.testing.assert_allclose(EM.cumulative_arithmetic_return(curve(100, 110, 99)), [0.0, 10.0, 0.0], atol=1e-12)


def test_time_weighted_return():
    assert EM.time_weighted_return([0.0, 0.0, 0.0]) == 0.0
    assert EM.time_weighted_return([0.1, -0.1]) == pytest.approx(math.sqrt(0.99) - 1, rel=1e-12)
    assert EM.time_weighted_return([0.037]) == pytest.approx(0.037, rel=1e-12)


@pytest.mark.parametrize("returns", [[0.1, -1.0], [-1.5]])
def test_time_weighted_return_domain(returns):
    with pytest.raises(DomainError):
        EM.time_weighted_return(returns)


def test_time_weighted_return_needs_returns():
    with pytest.raises(DegenerateSeriesError):
        EM.time_weighted_return([])


def test_daily_return_variance():
    assert EM.daily_return_variance([0.02, 0.02, 0.02]) == 0.0
    assert EM.daily_return_variance([0.01, 0.03]) == pytest.approx(0.0002)
    assert EM.daily_return_variance([0.03, 0.09]) == pytest.approx(9 * 0.0002)
    with pytest.raises(DegenerateSeriesError):
        EM.daily_return_variance([0.01])


def test_total_return():
    assert EM.total_return(curve(1000, 1200, 1000)) == 0.0
    assert EM.total_return(curve(1000, 7287.2)) == pytest.approx(628.72)
    assert EM.total_return(curve(1000, 500)) == pytest.approx(-50.0)


def test_volatility():
    assert EM.volatility([0.01, 0.01]) == 0.0
    assert EM.volatility([0.01, 0.03]) == pytest.approx(0.014142, rel=1e-4)
    returns = [0.01, -0.02, 0.005, 0.03]
    assert EM.volatility(returns) ** 2 == pytest.approx(EM.daily_return_variance(returns), rel=1e-12)


def test_sharpe():
    assert EM.sharpe([0.01, -0.01]) == 0.0
    assert EM.sharpe([0.01, 0.03]) == pytest.approx(1.4142, rel=1e-4)
    assert EM.sharpe([0.01, 0.03], risk_free=0.02) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(UndefinedSharpeError):
        EM.sharpe([0.01, 0.01, 0.01])


def test_value_at_risk_degenerate():
    result = EM.value_at_risk([0.001] * 5, method="closed_form")
    assert result.value == pytest.approx(0.001)
    assert result.degenerate


def test_closed_form_value_at_risk():
    half_spread = 0.01 / math.sqrt(2)
    result = EM.value_at_risk([half_spread, -half_spread], 5.0, "closed_form")
    assert result.value == pytest.approx(-0.016449, rel=1e-4)
    assert not result.degenerate


def test_historical_value_at_risk():
    returns = np.linspace(-0.05, 0.05, 101)
    assert EM.value_at_risk(returns, 5.0, "historical").value == pytest.approx(np.percentile(returns, 5))


@pytest.mark.parametrize("alpha", [0.0, 50.0, -1.0])
def test_alpha_range(alpha):
    with pytest.raises(DomainError):
        EM.value_at_risk([0.01, 0.02], alpha)


def test_unknown_var_method():
    with pytest.raises(DomainError):
        EvaluationManager(var_method="cornish_fisher")


def mean_monte_carlo_error(returns, n_sims, runs=20):
    closed = EM.value_at_risk(returns, 5.0, "closed_form").value
    errors = [
        abs(EM.value_at_risk(returns, 5.0, "monte_carlo", n_sims, np.random.default_rng(seed)).value - closed)
        for seed in range(runs)
    ]
    return float(np.mean(errors))


def test_monte_carlo_var_tracks_closed_form():
    returns = np.random.default_rng(0).normal(0.001, 0.02, 250)
    sigma = float(np.std(returns, ddof=1))
    small, large = mean_monte_carlo_error(returns, 1_000), mean_monte_carlo_error(returns, 100_000)
    assert small < 4 * sigma / math.sqrt(1_000)
    assert large < 4 * sigma / math.sqrt(100_000)
    assert large < small


def test_monte_carlo_var_is_reproducible():
    returns = [0.01, -0.02, 0.015, 0.0]
    a = EM.value_at_risk(returns, rng=np.random.default_rng(9))
    b = EM.value_at_risk(returns, rng=np.random.default_rng(9))
    assert a == b


@given(st.lists(st.floats(min_value=-0.5, max_value=0.5), min_size=1, max_size=50))
def test_time_weighted_return_never_exceeds_mean(returns):
    assert EM.time_weighted_return(returns) <= np.mean(returns) + 1e-12


@given(st.floats(min_value=1e-3, max_value=1e3))
def test_total_return_ignores_scale(k):
    base = np.array([1000.0, 1040.0, 990.0, 1100.0])
    assert EM.total_return(EquityCurve(base * k)) == pytest.approx(EM.total_return(EquityCurve(base)), rel=1e-9)


def test_flat_curve_report():
    report = full_report(curve(1000, 1000, 1000, 1000))
    assert report.arithmetic_return == 0.0
    assert report.total_return_pct == 0.0
    assert report.volatility == 0.0
    assert report.sharpe is None
    assert report.var_alpha == 0.0 and report.var_degenerate


def brute_force_metrics(wealth):
    returns = [(wealth[t] - wealth[t - 1]) / wealth[t - 1] for t in range(1, len(wealth))]
    n = len(returns)
    mean = sum(returns) / n
    variance = sum((r - mean) ** 2 for r in returns) / (n - 1)
    growth = 1.0
    for r in returns:
        growth *= 1 + r
    sigma = math.sqrt(variance)
    return {
        "arithmetic_return": sum(returns) * 100,
        "average_daily_return": mean * 100,
        "daily_return_variance": variance * 1e4,
        "time_weighted_return": growth ** (1 / n) - 1,
        "total_return_pct": (wealth[-1] - wealth[0]) / wealth[0] * 100,
        "sharpe": mean / sigma,
        "var_alpha": (mean + NormalDist().inv_cdf(0.05) * sigma) * 100,
        "volatility": sigma * 100,
        "initial_investment": wealth[0],
        "final_value": wealth[-1],
    }


def test_report_matches_brute_force_on_random_curves():
    rng = np.random.default_rng(42)
    evaluator = EvaluationManager(var_method="closed_form")
    for _ in range(100):
        wealth = 1000.0 * np.cumprod(np.concatenate([[1.0], 1.0 + rng.normal(0.0005, 0.015, 249)]))
        report = evaluator.full_report(EquityCurve(wealth)).to_dict()
        for name, expected in brute_force_metrics(list(wealth)).items():
            assert report[name] == pytest.approx(expected, rel=1e-9, abs=1e-12), name


def test_report_is_internally_consistent():
    wealth = curve(1000, 1010, 1003, 1020, 1050)
    report = full_report(wealth)
    assert report.final_value == pytest.approx(report.initial_investment * (1 + report.total_return_pct / 100))
    assert list(report.to_row()) == TABLE_COLUMNS
    assert report.to_row()["Final Portfolio Value"] == 1050.0


def test_report_is_pure():
    wealth = curve(1000, 1010, 1003, 1020, 1050)
    assert full_report(wealth, seed=4) == full_report(wealth, seed=4)


def test_two_point_curve_report():
    report = full_report(curve(1000, 1500))
    assert report.arithmetic_return == pytest.approx(50.0)
    assert report.average_daily_return == pytest.approx(50.0)
    assert report.time_weighted_return == pytest.approx(0.5)
    assert report.total_return_pct == pytest.approx(50.0)
    assert report.final_value == 1500.0
    assert report.daily_return_variance is None and report.volatility is None
    assert report.sharpe is None and report.var_alpha is None
    assert report.var_degenerate
    with pytest.raises(DegenerateSeriesError):
        EM.daily_return_variance(EM.daily_returns(curve(1000, 1500)))
