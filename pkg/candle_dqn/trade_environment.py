"""
Single-asset trading environment.

The agent either holds the asset (own_share) or cash. Actions are decided at
the close of candle t and earn the move from close t to close t + 1.
"""
from dataclasses import dataclass, replace
from enum import IntEnum
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .data_handler import OhlcSeries
from .data_modifier import DataModifier, RawState
from .exceptions import AlignmentError, ConfigurationError, EpisodeFinishedError, InsufficientLengthError


class Action(IntEnum):
    BUY = 0
    SELL = 1
    NOOP = 2

    @property
    def label(self) -> str:
        return self.name.lower()


@dataclass(frozen=True)
class EnvState:
    t: int
    own_share: bool = False
    step_index: int = 0


@dataclass(frozen=True)
class RewardParams:
    transaction_cost: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.transaction_cost < 1.0:
            raise ConfigurationError(f"transaction_cost must lie in [0, 1), got {self.transaction_cost}.")


def compute_reward(p1: float, p2: float, action: Action, own_share: bool, transaction_cost: float = 0.0) -> float:
    """
    Percentage reward for acting at price p1 when the next price is p2.

    Buy, or Noop while holding, earns the long ratio p2/p1; Sell, or Noop in
    cash, earns p1/p2. Both are charged (1 - TC)^2.
    """
    long_side = action == Action.BUY or (action == Action.NOOP and own_share)
    ratio = p2 / p1 if long_side else p1 / p2
    return ((1.0 - transaction_cost) ** 2 * ratio - 1.0) * 100.0


def next_own_share(action: Action, own_share: bool) -> bool:
    if action == Action.BUY:
        return True
    if action == Action.SELL:
        return False
    return own_share


class TradeEnvironment:
    """
    Steps through the states of one series.

    ``reset`` and ``step`` are pure with respect to the environment: the
    episode position lives in the returned EnvState.
    """

    def __init__(self, series: OhlcSeries, mode: str = "vanilla", window_size: Optional[int] = None,
                 scheme: str = "prev_close", reward_params: RewardParams = RewardParams(),
                 previous_close: Optional[float] = None):
        self.series = series
        self.mode = mode
        self.window_size = window_size
        self.scheme = scheme
        self.reward_params = reward_params
        self.states: List[RawState] = DataModifier.make_states(series, mode, window_size, scheme, previous_close)
        if len(self.states) < 2:
            raise InsufficientLengthError(f"Series '{series.symbol}' yields fewer than 2 states; nothing to trade.")
        self.closes = series.closes
        self.first_index = self.states[0].candle_index

    def __len__(self) -> int:
        return len(self.states)

    def reset(self) -> Tuple[EnvState, RawState]:
        return EnvState(t=self.first_index, own_share=False, step_index=0), self.states[0]

    def observation(self, state: EnvState) -> RawState:
        return self.states[state.step_index]

    def is_done(self, state: EnvState) -> bool:
        return state.t + 1 >= len(self.closes)

    def step(self, state: EnvState, action: Action) -> Tuple[EnvState, float, bool]:
        """
        Returns (next state, reward in percent, done). done is True when the
        next state's candle is the last one.

        Raises:
            EpisodeFinishedError: If ``state`` is already the last state.
        """
        if self.is_done(state):
            raise EpisodeFinishedError(f"Episode finished at candle {state.t}; call reset().")
        action = Action(action)
        p1, p2 = self.closes[state.t], self.closes[state.t + 1]
        reward = compute_reward(p1, p2, action, state.own_share, self.reward_params.transaction_cost)
        next_state = replace(
            state,
            t=state.t + 1,
            own_share=next_own_share(action, state.own_share),
            step_index=state.step_index + 1,
        )
        return next_state, reward, self.is_done(next_state)


@dataclass(frozen=True)
class EquityCurve:
    """Wealth W_t per state, W_0 the initial investment."""

    wealth: np.ndarray
    dates: Optional[tuple] = None

    def __post_init__(self):
        wealth = np.asarray(self.wealth, dtype=np.float64)
        if wealth.ndim != 1 or len(wealth) < 2:
            raise AlignmentError(f"An equity curve needs at least 2 wealth values, got shape {wealth.shape}.")
        if not np.all(wealth > 0):
            raise AlignmentError("Equity curve wealth must stay strictly positive.")
        object.__setattr__(self, "wealth", wealth)

    def __len__(self) -> int:
        return len(self.wealth)

    @property
    def initial(self) -> float:
        return float(self.wealth[0])

    @property
    def final(self) -> float:
        return float(self.wealth[-1])


def execute_equity(closes: Sequence[float], actions: Sequence[Action], transaction_cost: float = 0.0,
                   initial_wealth: float = 1000.0, dates: Optional[Sequence] = None) -> Tuple[EquityCurve, list]:
    """
    Simulates wealth for actions decided at each close.

    ``closes[i]`` is the close of the candle the i-th action is decided on.
    A Buy while in cash or a Sell while invested pays TC once; repeated Buys
    or Sells are no-ops. While invested, wealth follows close[i+1]/close[i].
    The action on the last close has nothing to act on and is ignored.

    Returns:
        (EquityCurve, list of own_share flags after each action)
    """
    closes = np.asarray(closes, dtype=np.float64)
    if len(actions) != len(closes):
        raise AlignmentError(f"Got {len(actions)} actions for {len(closes)} states.")
    wealth = np.empty(len(closes))
    wealth[0] = initial_wealth
    invested = False
    positions = []
    for i, action in enumerate(actions):
        action = Action(action)
        if i == len(closes) - 1:
            positions.append(invested)
            break
        current = wealth[i]
        if action == Action.BUY and not invested:
            current *= 1.0 - transaction_cost
            invested = True
        elif action == Action.SELL and invested:
            current *= 1.0 - transaction_cost
            invested = False
        if invested:
            current *= closes[i + 1] / closes[i]
        wealth[i + 1] = current
        positions.append(invested)
    return EquityCurve(wealth, tuple(dates) if dates is not None else None), positions
