import logging
from dataclasses import dataclass
from datetime import date
from typing import Dict, Optional, Tuple

import pandas as pd

from .data_handler import OhlcSeries
from .exceptions import ConfigurationError, DegenerateSplitError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SplitSpec:
    begin_date: date
    split_date: date
    end_date: date

    def __post_init__(self):
        if not self.begin_date < self.split_date < self.end_date:
            raise ConfigurationError(
                f"Split dates must satisfy begin < split < end, got {self.begin_date}, {self.split_date}, {self.end_date}."
            )

    @classmethod
    def from_strings(cls, begin: str, split: str, end: str) -> "SplitSpec":
        try:
            return cls(*(pd.Timestamp(value.replace("/", "-")).date() for value in (begin, split, end)))
        except ValueError as e:
            raise ConfigurationError(f"Invalid split date: {e}") from e


# Train/test windows per instrument. GSPC is only used for the buy-and-hold
# comparison.
DATASETS: Dict[str, Tuple[str, str, str]] = {
    "GOOGL": ("2010/01/01", "2018/01/01", "2020/08/25"),
    "AAPL": ("2010/01/01", "2018/01/01", "2020/08/25"),
    "AAL": ("2010/01/01", "2018/01/01", "2020/08/25"),
    "BTC-USD": ("2014/09/17", "2018/01/01", "2020/08/26"),
    "KSS": ("1999/01/01", "2018/01/01", "2020/08/24"),
    "GE": ("2000/01/01", "2015/01/01", "2020/08/24"),
    "HSI": ("2000/01/01", "2015/01/01", "2020/08/24"),
    "GSPC": ("2000/01/01", "2015/01/01", "2020/08/24"),
}

ALIASES = {"^HSI": "HSI", "^GSPC": "GSPC", "S&P500": "GSPC", "BTC/USD": "BTC-USD"}


class DatasetManager:
    def __init__(self, datasets: Optional[Dict[str, Tuple[str, str, str]]] = None):
        self.datasets = dict(DATASETS if datasets is None else datasets)

    def get_dataset_list(self) -> pd.DataFrame:
        """
        Lists the registered instruments and their split dates.

        Returns:
            pd.DataFrame: One row per dataset with Begin Date, Split Point, End Date.
        """
        return pd.DataFrame(
            [(name, *dates) for name, dates in self.datasets.items()],
            columns=["Data", "Begin Date", "Split Point", "End Date"],
        )

    def split_spec_for(self, symbol: str) -> SplitSpec:
        key = ALIASES.get(symbol, symbol).upper()
        if key not in self.datasets:
            raise ConfigurationError(f"No registered split dates for '{symbol}'; known: {sorted(self.datasets)}.")
        return SplitSpec.from_strings(*self.datasets[key])

    @staticmethod
    def restrict(series: OhlcSeries, begin: date, end: date) -> OhlcSeries:
        """Keeps candles with begin <= date <= end."""
        candles = [c for c in series.candles if begin <= c.date <= end]
        if len(candles) < 2:
            raise DegenerateSplitError(
                f"Series '{series.symbol}' has {len(candles)} candles between {begin} and {end}."
            )
        return OhlcSeries(series.symbol, tuple(candles), skipped_rows=series.skipped_rows)

    @staticmethod
    def split(series: OhlcSeries, spec: SplitSpec) -> Tuple[OhlcSeries, OhlcSeries]:
        """
        Splits at ``spec.split_date``: train holds dates before it, test the
        rest. Concatenating the two gives back ``series``.

        Raises:
            DegenerateSplitError: If either side has fewer than 2 candles.
        """
        train = tuple(c for c in series.candles if c.date < spec.split_date)
        test = tuple(c for c in series.candles if c.date >= spec.split_date)
        for side, candles in (("train", train), ("test", test)):
            if len(candles) < 2:
                raise DegenerateSplitError(
                    f"Splitting '{series.symbol}' at {spec.split_date} leaves {len(candles)} candles on the {side} side."
                )
        logger.info("Split %s at %s: %d train / %d test candles", series.symbol, spec.split_date, len(train), len(test))
        return OhlcSeries(series.symbol, train), OhlcSeries(series.symbol, test)

    def prepare(self, series: OhlcSeries, spec: SplitSpec) -> Tuple[OhlcSeries, OhlcSeries]:
        """Restricts to [begin, end] and splits."""
        return self.split(self.restrict(series, spec.begin_date, spec.end_date), spec)
