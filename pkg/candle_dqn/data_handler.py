import csv
import logging
import os
from collections import Counter
from dataclasses import dataclass, field
from datetime import date
from typing import Optional, Tuple

import chardet
import numpy as np
import pandas as pd

from .exceptions import FormatError, InsufficientDataError, InvalidCandleError, OrderingError

logger = logging.getLogger(__name__)

REQUIRED_COLUMNS = ("Date", "Open", "High", "Low", "Close")
PRICE_COLUMNS = ("Open", "High", "Low", "Close")
# Yahoo marks missing quotes with "null"
EMPTY_CELLS = ("", "null")


def _parse_price(text) -> float:
    # float() is correctly rounded, so written values read back bit-exact
    try:
        return float(str(text).strip())
    except ValueError:
        return float("nan")


def _price_problem(texts, values) -> Optional[str]:
    """Skip reason for a row's price cells, None when all four are usable."""
    if any(pd.isna(text) or str(text).strip().lower() in EMPTY_CELLS for text in texts):
        return 'empty_price'
    if not all(np.isfinite(v) for v in values):
        return 'non_numeric_price'
    if any(v <= 0 for v in values):
        return 'non_positive_price'
    return None


@dataclass(frozen=True)
class Candle:
    """One daily OHLC bar."""

    date: date
    open: float
    high: float
    low: float
    close: float

    def __post_init__(self):
        prices = (self.open, self.high, self.low, self.close)
        if not all(np.isfinite(p) and p > 0 for p in prices):
            raise InvalidCandleError(f"Candle {self.date}: prices must be finite and strictly positive, got {prices}.")
        if self.low > min(self.open, self.close) or self.high < max(self.open, self.close):
            raise InvalidCandleError(
                f"Candle {self.date}: low/high {self.low}/{self.high} do not bracket open/close {self.open}/{self.close}."
            )

    def as_array(self) -> np.ndarray:
        return np.array([self.open, self.high, self.low, self.close], dtype=np.float64)


@dataclass(frozen=True)
class OhlcSeries:
    """Date-ordered candles of one instrument."""

    symbol: str
    candles: Tuple[Candle, ...]
    skipped_rows: int = field(default=0, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "candles", tuple(self.candles))
        if len(self.candles) < 2:
            raise InsufficientDataError(f"Series '{self.symbol}' needs at least 2 candles, got {len(self.candles)}.")
        for previous, current in zip(self.candles, self.candles[1:]):
            if current.date <= previous.date:
                raise OrderingError(
                    f"Series '{self.symbol}': dates must be strictly increasing ({previous.date} then {current.date})."
                )

    def __len__(self) -> int:
        return len(self.candles)

    def __getitem__(self, index):
        return self.candles[index]

    @property
    def dates(self) -> list:
        return [c.date for c in self.candles]

    @property
    def closes(self) -> np.ndarray:
        return np.array([c.close for c in self.candles], dtype=np.float64)

    def prices(self) -> np.ndarray:
        """(T, 4) matrix of open, high, low, close."""
        return np.array([c.as_array() for c in self.candles])

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.prices(), columns=list(PRICE_COLUMNS))
        frame.insert(0, "Date", [d.isoformat() for d in self.dates])
        return frame


class DataHandler:
    """ Reads Yahoo-Finance style OHLC files with automatic encoding detection and delimiter inference. """

    def __init__(self, file_path):
        """
        Initializes the DataHandler object with the given file path.

        Args:
            file_path (str): The path to the file to be read.
        """
        self.file_path = file_path
        self.skip_reasons: Counter = Counter()

    def read_csv_data(self, delimiter=None):
        """
        Reads a CSV file with automatic encoding detection and delimiter inference.

        Args:
            delimiter (str, optional): The delimiter used in the CSV file. If not provided, it will be inferred.

        Returns:
            pd.DataFrame: The raw contents of the file, every column as text.

        Raises:
            FileNotFoundError: If the file is not found.
            FormatError: If the file is empty or cannot be parsed as CSV.
        """
        with open(self.file_path, 'rb') as file:
            raw = file.read()
        if not raw.strip():
            raise FormatError(f"File '{self.file_path}' is empty.")
        encoding = chardet.detect(raw)['encoding'] or 'utf-8'

        if delimiter is None:
            sample = raw[:4096].decode(encoding, errors='replace')
            try:
                delimiter = csv.Sniffer().sniff(sample, delimiters=',;\t').delimiter
            except csv.Error:
                delimiter = ','

        try:
            df = pd.read_csv(self.file_path, sep=delimiter, encoding=encoding, dtype=str, keep_default_na=False)
        except (pd.errors.ParserError, UnicodeDecodeError) as e:
            raise FormatError(f"Error reading file '{self.file_path}': {e}") from e
        logger.debug("File '%s' read with encoding '%s' and delimiter '%s'", self.file_path, encoding, delimiter)
        return df

    def load_series(self, symbol: Optional[str] = None) -> OhlcSeries:
        """
        Parses the file into an OhlcSeries.

        Rows with an unparseable date, an empty, non-numeric or non-positive
        price, or a low/high that does not bracket open/close are skipped and
        counted per reason in ``skip_reasons``. Adj Close and Volume are
        ignored.

        Raises:
            FormatError: If the header lacks Date, Open, High, Low or Close.
            InsufficientDataError: If fewer than 2 rows survive.
            OrderingError: If dates are not strictly increasing.
        """
        df = self.read_csv_data()
        df.columns = [str(c).strip() for c in df.columns]
        missing = [col for col in REQUIRED_COLUMNS if col not in df.columns]
        if missing:
            raise FormatError(f"File '{self.file_path}' is missing header columns {missing}.")

        dates = pd.to_datetime(df['Date'].str.strip(), format='%Y-%m-%d', errors='coerce')
        texts = df[list(PRICE_COLUMNS)]
        prices = texts.apply(lambda col: col.map(_parse_price))

        self.skip_reasons = Counter()
        candles = []
        for row_date, text_row, row in zip(dates, texts.itertuples(index=False), prices.itertuples(index=False)):
            if pd.isna(row_date):
                self.skip_reasons['bad_date'] += 1
                continue
            problem = _price_problem(text_row, row)
            if problem:
                self.skip_reasons[problem] += 1
                continue
            try:
                candles.append(Candle(row_date.date(), *map(float, row)))
            except InvalidCandleError:
                self.skip_reasons['invalid_candle'] += 1

        skipped = sum(self.skip_reasons.values())
        if skipped:
            logger.warning("Skipped %d rows of '%s': %s", skipped, self.file_path, dict(self.skip_reasons))
        if len(candles) < 2:
            raise InsufficientDataError(
                f"File '{self.file_path}' has {len(candles)} valid rows; at least 2 are needed."
            )
        symbol = symbol or os.path.splitext(os.path.basename(self.file_path))[0]
        series = OhlcSeries(symbol, tuple(candles), skipped_rows=skipped)
        logger.info("Loaded %s: %d candles from %s to %s", symbol, len(series), series[0].date, series[-1].date)
        return series


def load_csv(path, symbol: Optional[str] = None) -> OhlcSeries:
    return DataHandler(path).load_series(symbol)


def write_csv(series: OhlcSeries, path) -> str:
    """Write ``series`` back in Yahoo format; values use the shortest round-trip repr."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    with open(path, 'w', newline='', encoding='utf-8') as handle:
        writer = csv.writer(handle)
        writer.writerow(REQUIRED_COLUMNS)
        for c in series.candles:
            writer.writerow([c.date.isoformat(), repr(float(c.open)), repr(float(c.high)), repr(float(c.low)), repr(float(c.close))])
    return path
