"""
Test-set evaluation: greedy backtests, the buy-and-hold baseline, the
window-size sweep and comparison tables.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from tqdm import tqdm

from .data_handler import OhlcSeries
from .data_modifier import DataModifier
from .dqn_agent import DQNAgent, QNetwork, TrainConfig, greedy_policy
from .encoders import EncoderConfig, agent_label
from .evaluation_manager import TABLE_COLUMNS, EvaluationManager, MetricsReport
from .exceptions import ConfigurationError, EmptyInputError
from .trade_environment import Action, EquityCurve, RewardParams, TradeEnvironment, execute_equity

logger = logging.getLogger(__name__)

TRADE_LOG_COLUMNS = ["date", "close", "action", "own_share", "wealth"]
DEFAULT_SWEEP_WINDOWS = tuple(range(3, 76))
CI_SWEEP_WINDOWS = (5, 10, 15, 20)


class BacktestResult(NamedTuple):
    curve: EquityCurve
    trade_log: pd.DataFrame
    report: MetricsReport


def backtest_actions(series: OhlcSeries, actions: Sequence[Action], start_index: int = 0,
                     transaction_cost: float = 0.0, initial_wealth: float = 1000.0,
                     evaluator: Optional[EvaluationManager] = None) -> BacktestResult:
    """Simulate ``actions`` decided on the closes of ``series`` from ``start_index`` on."""
    evaluator = evaluator or EvaluationManager()
    closes = series.closes[start_index:]
    dates = series.dates[start_index:]
    curve, positions = execute_equity(closes, actions, transaction_cost, initial_wealth, dates)
    trade_log = pd.DataFrame(
        {
            "date": [d.isoformat() for d in dates],
            "close": closes,
            "action": [Action(a).label for a in actions],
            "own_share": positions,
            "wealth": curve.wealth,
        },
        columns=TRADE_LOG_COLUMNS,
    )
    return BacktestResult(curve, trade_log, evaluator.full_report(curve))


def run_backtest(net: QNetwork, series: OhlcSeries, transaction_cost: float = 0.0, initial_wealth: float = 1000.0,
                 scheme: str = "prev_close", evaluator: Optional[EvaluationManager] = None,
                 previous_close: Optional[float] = None) -> BacktestResult:
    """
    Greedy policy of ``net`` over the states of ``series``; one trade log row
    per state. ``previous_close`` is the last close before ``series``, the
    last train close for a test split.
    """
    config = net.encoder_config
    states = DataModifier.make_states(series, config.mode, config.window_size, scheme, previous_close)
    actions = greedy_policy(net, states)
    return backtest_actions(series, actions, states[0].candle_index, transaction_cost, initial_wealth, evaluator)


def buy_and_hold(series: OhlcSeries, transaction_cost: float = 0.0, initial_wealth: float = 1000.0,
                 start_index: int = 0, evaluator: Optional[EvaluationManager] = None) -> Tuple[EquityCurve, MetricsReport]:
    """Buy on the close at ``start_index`` (paying TC once) and never sell."""
    n = len(series) - start_index
    actions = [Action.BUY] + [Action.NOOP] * (n - 1)
    result = backtest_actions(series, actions, start_index, transaction_cost, initial_wealth, evaluator)
    return result.curve, result.report


def profit_curve_frame(result: BacktestResult) -> pd.DataFrame:
    return pd.DataFrame({"date": result.trade_log["date"], "pct": EvaluationManager.profit_rate_curve(result.curve)})


def decisions_frame(result: BacktestResult, start: int = 0, length: Optional[int] = None) -> pd.DataFrame:
    """Date, close and action per state, optionally cut to ``length`` rows from ``start``."""
    frame = result.trade_log[["date", "close", "action"]]
    if not 0 <= start < len(frame):
        raise ConfigurationError(f"Decision slice start {start} is outside 0..{len(frame) - 1}.")
    if length is not None and length < 1:
        raise ConfigurationError(f"Decision slice length must be >= 1, got {length}.")
    stop = len(frame) if length is None else start + length
    return frame.iloc[start:stop].reset_index(drop=True)


def normalize_values(values: Sequence[float]) -> List[float]:
    """(x - min) / (max - min); all zeros when every value is equal."""
    values = np.asarray(values, dtype=np.float64)
    spread = values.max() - values.min()
    if spread == 0:
        return [0.0] * len(values)
    return list((values - values.min()) / spread)


@dataclass
class SweepResult:
    encoder: str
    windows: List[int]
    total_returns: List[float]

    @property
    def raw(self) -> dict:
        return dict(zip(self.windows, self.total_returns))

    @property
    def normalized(self) -> List[float]:
        return normalize_values(self.total_returns)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "encoder": self.encoder,
                "w": self.windows,
                "total_return": self.total_returns,
                "normalized": self.normalized,
            },
            columns=["encoder", "w", "total_return", "normalized"],
        )


def _sweep_cell(train_series: OhlcSeries, test_series: OhlcSeries, encoder_config: EncoderConfig,
                train_config: TrainConfig, window: int, transaction_cost: float, initial_wealth: float,
                scheme: str) -> float:
    config = replace(encoder_config, window_size=window)
    rng = np.random.default_rng(np.random.SeedSequence([train_config.seed, window]))
    env = TradeEnvironment(train_series, config.mode, window, scheme, RewardParams(0.0))
    agent = DQNAgent.create(config, train_config, rng)
    agent.train(env, rng)
    result = run_backtest(agent.policy, test_series, transaction_cost, initial_wealth, scheme,
                          previous_close=train_series.closes[-1])
    logger.info("Sweep cell %s w=%d: total return %.4f%%", agent_label(config), window, result.report.total_return_pct)
    return result.report.total_return_pct


def window_sweep(train_series: OhlcSeries, test_series: OhlcSeries, encoder_config: EncoderConfig,
                 windows: Sequence[int] = CI_SWEEP_WINDOWS, train_config: TrainConfig = TrainConfig(),
                 transaction_cost: float = 0.0, initial_wealth: float = 1000.0, scheme: str = "prev_close",
                 jobs: int = 1, progress: bool = False) -> SweepResult:
    """
    Train one agent per window size from scratch and record its test total
    return. Each cell seeds its own generator from (seed, w), so results do not
    depend on ``jobs`` or on cell order.

    Raises:
        ConfigurationError: If the encoder does not take windowed states or no window is given.
    """
    if encoder_config.mode != "windowed":
        raise ConfigurationError(
            f"encoder.mode: the window sweep needs a windowed encoder, got {agent_label(encoder_config)}."
        )
    windows = [int(w) for w in windows]
    if not windows:
        raise ConfigurationError("sweep.windows: at least one window size is required.")
    # EncoderConfig validates on construction, so bad windows fail before any training
    for w in windows:
        replace(encoder_config, window_size=w)
    if jobs < 1:
        raise ConfigurationError(f"jobs: must be >= 1, got {jobs}.")

    def cell(window):
        return _sweep_cell(train_series, test_series, encoder_config, train_config, window,
                           transaction_cost, initial_wealth, scheme)

    with ThreadPoolExecutor(max_workers=jobs) as pool:
        totals = list(tqdm(pool.map(cell, windows), total=len(windows), desc="sweep", disable=not progress))
    return SweepResult(agent_label(encoder_config), windows, totals)


def compare_report(reports: Sequence[Tuple[str, MetricsReport]]) -> pd.DataFrame:
    """One row per named report, in input order, with the metric table columns."""
    if not reports:
        raise EmptyInputError("compare_report needs at least one report.")
    rows = [{"Agent": name, **report.to_row()} for name, report in reports]
    return pd.DataFrame(rows, columns=["Agent"] + TABLE_COLUMNS)
