from datetime import date

import pytest
from hypothesis import given
from hypothesis import strategies as st

from candle_dqn.dataset_manager import DatasetManager, SplitSpec
from candle_dqn.exceptions import ConfigurationError, DegenerateSplitError

from .conftest import series_from_closes


def ten_candles():
    return series_from_closes([float(i) for i in range(1, 11)], start=date(2020, 1, 1))


def test_split_counts():
    spec = SplitSpec(date(2019, 1, 1), date(2020, 1, 6), date(2021, 1, 1))
    train, test = DatasetManager.split(ten_candles(), spec)
    assert (len(train), len(test)) == (5, 5)
    assert train[-1].date < spec.split_date <= test[0].date


def test_split_after_last_candle_is_degenerate():
    spec = SplitSpec(date(2019, 1, 1), date(2020, 2, 1), date(2021, 1, 1))
    with pytest.raises(DegenerateSplitError):
        DatasetManager.split(ten_candles(), spec)


def test_split_dates_must_be_ordered():
    with pytest.raises(ConfigurationError):
        SplitSpec.from_strings("2018/01/01", "2010/01/01", "2020/08/25")


def test_registry_has_table_dates():
    manager = DatasetManager()
    spec = manager.split_spec_for("BTC-USD")
    assert spec == SplitSpec(date(2014, 9, 17), date(2018, 1, 1), date(2020, 8, 26))
    assert manager.split_spec_for("^HSI") == manager.split_spec_for("HSI")
    assert len(manager.get_dataset_list()) == 8


def test_unknown_symbol():
    with pytest.raises(ConfigurationError, match="XYZ"):
        DatasetManager().split_spec_for("XYZ")


def test_prepare_restricts_then_splits():
    series = series_from_closes([float(i) for i in range(1, 31)], start=date(2020, 1, 1))
    spec = SplitSpec(date(2020, 1, 5), date(2020, 1, 15), date(2020, 1, 24))
    train, test = DatasetManager().prepare(series, spec)
    assert train[0].date == date(2020, 1, 5)
    assert test[-1].date == date(2020, 1, 24)
    assert len(train) + len(test) == 20


@given(st.integers(min_value=2, max_value=38))
def test_split_then_concatenate_is_identity(cut):
    series = series_from_closes([float(i) for i in range(1, 41)], start=date(2020, 1, 1))
    spec = SplitSpec(date(2019, 1, 1), series[cut].date, date(2021, 1, 1))
    train, test = DatasetManager.split(series, spec)
    assert train.candles + test.candles == series.candles
