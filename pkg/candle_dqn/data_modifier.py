from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .data_handler import Candle, OhlcSeries
from .exceptions import ConfigurationError, EmptyInputError, InsufficientLengthError

SCHEMES = ("prev_close", "raw")
MODES = ("vanilla", "windowed")


@dataclass(frozen=True, eq=False)
class RawState:
    """
    Encoder input for one time step: a normalized 4-vector (vanilla) or a
    w x 4 matrix whose rows run oldest to newest (windowed). ``candle_index``
    is the position of the newest candle in the source series.
    """

    mode: str
    values: np.ndarray
    candle_index: int
    window_size: Optional[int] = None

    @property
    def shape(self) -> tuple:
        return self.values.shape


class DataModifier:
    @staticmethod
    def check_scheme(scheme):
        if scheme not in SCHEMES:
            raise ConfigurationError(f"Unknown normalization scheme '{scheme}'. Use one of {SCHEMES}.")

    @staticmethod
    def check_mode(mode):
        if mode not in MODES:
            raise ConfigurationError(f"Unknown state mode '{mode}'. Use one of {MODES}.")

    @staticmethod
    def normalize_window(candles: Sequence[Candle], scheme: str = "prev_close",
                         previous_close: Optional[float] = None) -> np.ndarray:
        """
        Returns a (len(candles), 4) matrix.

        ``prev_close`` divides every OHLC value by the close of the candle
        before it and subtracts 1; the first candle uses ``previous_close`` when
        given, otherwise its own open. ``raw`` returns the prices unchanged.
        """
        DataModifier.check_scheme(scheme)
        if len(candles) == 0:
            raise EmptyInputError("normalize_window needs at least one candle.")
        prices = np.array([c.as_array() for c in candles])
        if scheme == "raw":
            return prices
        denominators = np.empty(len(candles))
        denominators[0] = previous_close if previous_close is not None else candles[0].open
        denominators[1:] = prices[:-1, 3]
        return prices / denominators[:, None] - 1.0

    @staticmethod
    def normalize_series(series: OhlcSeries, scheme: str = "prev_close",
                         previous_close: Optional[float] = None) -> np.ndarray:
        return DataModifier.normalize_window(series.candles, scheme, previous_close)

    @staticmethod
    def make_states(series: OhlcSeries, mode: str = "vanilla", window_size: Optional[int] = None,
                    scheme: str = "prev_close", previous_close: Optional[float] = None) -> List[RawState]:
        """
        Builds the state sequence. Vanilla yields one 4-vector per candle;
        windowed yields one w x 4 matrix per candle from the w-th on, so
        T - w + 1 states. State i's newest candle is the one whose reward is
        computed against the following candle. A series cut from a longer one
        passes the close before its first candle as ``previous_close``.

        Raises:
            InsufficientLengthError: If a windowed series is not longer than w.
        """
        DataModifier.check_mode(mode)
        normalized = DataModifier.normalize_series(series, scheme, previous_close)
        normalized.setflags(write=False)
        if mode == "vanilla":
            return [RawState("vanilla", normalized[i], i) for i in range(len(series))]

        if window_size is None or window_size < 1:
            raise ConfigurationError(f"Windowed states need a positive window size, got {window_size}.")
        if len(series) <= window_size:
            raise InsufficientLengthError(
                f"Series '{series.symbol}' has {len(series)} candles; windowed mode with w={window_size} needs more."
            )
        return [
            RawState("windowed", normalized[end - window_size + 1:end + 1], end, window_size)
            for end in range(window_size - 1, len(series))
        ]

    @staticmethod
    def stack(states: Sequence[RawState]) -> np.ndarray:
        """Batch states along a new leading axis."""
        return np.stack([s.values for s in states])
