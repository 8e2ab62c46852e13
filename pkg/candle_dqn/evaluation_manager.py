import logging
import math
from dataclasses import asdict, dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy.stats import norm

from .exceptions import DegenerateSeriesError, DomainError, UndefinedSharpeError
from .trade_environment import EquityCurve

logger = logging.getLogger(__name__)

VAR_METHODS = ("closed_form", "monte_carlo", "historical")

TABLE_COLUMNS = [
    "Arithmetic Return",
    "Average Daily Return",
    "Daily Return Variance",
    "Time Weighted Return",
    "Total Return",
    "Sharpe Ratio",
    "Value At Risk",
    "Volatility",
    "Initial Investment",
    "Final Portfolio Value",
]


class VarResult(NamedTuple):
    value: float
    degenerate: bool = False


@dataclass(frozen=True)
class MetricsReport:
    """
    Evaluation metrics of one equity curve.

    Arithmetic return, average daily return, VaR and volatility are on the
    percent scale, the variance on percent squared; the time weighted return
    is a per-period fraction. ``sharpe`` is None when the returns have zero
    volatility, and ``var_degenerate`` marks a VaR computed from sigma = 0.
    A single-return curve leaves the variance, volatility, Sharpe and VaR
    fields None.
    """

    arithmetic_return: float
    average_daily_return: float
    daily_return_variance: Optional[float]
    time_weighted_return: float
    total_return_pct: float
    sharpe: Optional[float]
    var_alpha: Optional[float]
    volatility: Optional[float]
    initial_investment: float
    final_value: float
    alpha: float = 5.0
    var_method: str = "monte_carlo"
    var_degenerate: bool = False

    def to_row(self) -> dict:
        """Table columns in their fixed order."""
        values = [
            self.arithmetic_return,
            self.average_daily_return,
            self.daily_return_variance,
            self.time_weighted_return,
            self.total_return_pct,
            self.sharpe,
            self.var_alpha,
            self.volatility,
            self.initial_investment,
            self.final_value,
        ]
        return dict(zip(TABLE_COLUMNS, values))

    def to_dict(self) -> dict:
        return asdict(self)


class EvaluationManager:
    """Pure metric functions over equity curves and daily return series."""

    def __init__(self, alpha: float = 5.0, var_method: str = "monte_carlo", n_sims: int = 1000,
                 risk_free: float = 0.0, seed: int = 0):
        self.check_alpha(alpha)
        self.check_var_method(var_method)
        self.alpha = alpha
        self.var_method = var_method
        self.n_sims = n_sims
        self.risk_free = risk_free
        self.seed = seed

    @staticmethod
    def check_alpha(alpha: float):
        if not 0.0 < alpha < 50.0:
            raise DomainError(f"VaR alpha must lie in (0, 50) percent, got {alpha}.")

    @staticmethod
    def check_var_method(method: str):
        if method not in VAR_METHODS:
            raise DomainError(f"Unknown VaR method '{method}'. Use one of {VAR_METHODS}.")

    @staticmethod
    def daily_returns(curve: EquityCurve) -> np.ndarray:
        """AR_t = (W_t - W_{t-1}) / W_{t-1}, one fewer than the wealth values."""
        wealth = curve.wealth
        return np.diff(wealth) / wealth[:-1]

    @staticmethod
    def profit_rate_curve(curve: EquityCurve) -> np.ndarray:
        return (curve.wealth - curve.initial) / curve.initial * 100.0

    @staticmethod
    def arithmetic_return(curve: EquityCurve) -> float:
        return float(EvaluationManager.daily_returns(curve).sum() * 100.0)

    @staticmethod
    def cumulative_arithmetic_return(curve: EquityCurve) -> np.ndarray:
        """Running sum of daily returns in percent, starting at 0."""
        return np.concatenate([[0.0], np.cumsum(EvaluationManager.daily_returns(curve)) * 100.0])

    @staticmethod
    def time_weighted_return(returns) -> float:
        """
        Geometric mean return per period, (prod(1 + x_i))^(1/n) - 1.

        Raises:
            DomainError: If any return is <= -1.
            DegenerateSeriesError: If ``returns`` is empty.
        """
        returns = np.asarray(returns, dtype=np.float64)
        if returns.size == 0:
            raise DegenerateSeriesError("Time weighted return needs at least one return.")
        if np.any(returns <= -1.0):
            raise DomainError(f"Time weighted return is undefined for returns <= -1 (min {returns.min()}).")
        return float(np.expm1(np.mean(np.log1p(returns))))

    @staticmethod
    def daily_return_variance(returns) -> float:
        """Sample variance with T - 1 denominator."""
        returns = np.asarray(returns, dtype=np.float64)
        if returns.size < 2:
            raise DegenerateSeriesError(f"Return variance needs at least 2 returns, got {returns.size}.")
        return float(np.var(returns, ddof=1))

    @staticmethod
    def total_return(curve: EquityCurve) -> float:
        return (curve.final - curve.initial) / curve.initial * 100.0

    @staticmethod
    def volatility(returns) -> float:
        return math.sqrt(EvaluationManager.daily_return_variance(returns))

    @staticmethod
    def sharpe(returns, risk_free: float = 0.0) -> float:
        """
        Raises:
            UndefinedSharpeError: If the returns have zero volatility.
        """
        sigma = EvaluationManager.volatility(returns)
        if sigma == 0.0:
            raise UndefinedSharpeError("Sharpe ratio is undefined for returns with zero volatility.")
        return (float(np.mean(returns)) - risk_free) / sigma

    @staticmethod
    def value_at_risk(returns, alpha: float = 5.0, method: str = "monte_carlo", n_sims: int = 1000,
                      rng: Optional[np.random.Generator] = None) -> VarResult:
        """
        Alpha-percent return quantile, negative for losses.

        ``closed_form`` is mu + z_alpha * sigma, ``monte_carlo`` the alpha
        percentile of ``n_sims`` draws from N(mu, sigma), ``historical`` the
        alpha percentile of the returns themselves. With sigma = 0 every method
        returns mu, flagged degenerate.
        """
        EvaluationManager.check_alpha(alpha)
        EvaluationManager.check_var_method(method)
        returns = np.asarray(returns, dtype=np.float64)
        if returns.size < 2:
            raise DegenerateSeriesError(f"VaR needs at least 2 returns, got {returns.size}.")
        mu = float(np.mean(returns))
        sigma = float(np.std(returns, ddof=1))
        if sigma == 0.0:
            return VarResult(mu, True)
        if method == "closed_form":
            return VarResult(mu + norm.ppf(alpha / 100.0) * sigma)
        if method == "historical":
            return VarResult(float(np.percentile(returns, alpha)))
        rng = np.random.default_rng(0) if rng is None else rng
        return VarResult(float(np.percentile(rng.normal(mu, sigma, n_sims), alpha)))

    def full_report(self, curve: EquityCurve) -> MetricsReport:
        """
        Metrics of ``curve``. A curve with a single return has no dispersion:
        variance, volatility, Sharpe and VaR are then None and the VaR is
        flagged degenerate.
        """
        returns = self.daily_returns(curve)
        variance = volatility = sharpe = var_alpha = None
        var_degenerate = True
        if returns.size >= 2:
            variance = self.daily_return_variance(returns)
            volatility = math.sqrt(variance) * 100.0
            variance *= 1e4
            try:
                sharpe = self.sharpe(returns, self.risk_free)
            except UndefinedSharpeError:
                logger.debug("Sharpe ratio undefined: zero volatility")
            var = self.value_at_risk(returns, self.alpha, self.var_method, self.n_sims,
                                     np.random.default_rng(self.seed))
            var_alpha, var_degenerate = var.value * 100.0, var.degenerate
        else:
            logger.debug("Single-return curve: dispersion metrics undefined")
        return MetricsReport(
            arithmetic_return=float(returns.sum() * 100.0),
            average_daily_return=float(returns.mean() * 100.0),
            daily_return_variance=variance,
            time_weighted_return=self.time_weighted_return(returns),
            total_return_pct=self.total_return(curve),
            sharpe=sharpe,
            var_alpha=var_alpha,
            volatility=volatility,
            initial_investment=curve.initial,
            final_value=curve.final,
            alpha=self.alpha,
            var_method=self.var_method,
            var_degenerate=var_degenerate,
        )


def full_report(curve: EquityCurve, alpha: float = 5.0, var_method: str = "monte_carlo", n_sims: int = 1000,
                seed: int = 0) -> MetricsReport:
    return EvaluationManager(alpha, var_method, n_sims, seed=seed).full_report(curve)
