from datetime import date

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from candle_dqn.data_handler import Candle, OhlcSeries
from candle_dqn.data_modifier import DataModifier
from candle_dqn.dataset_manager import DatasetManager, SplitSpec
from candle_dqn.exceptions import ConfigurationError, EmptyInputError, InsufficientLengthError

from .conftest import series_from_closes


def test_constant_prices_normalize_to_zero():
    series = series_from_closes([50.0] * 6)
    assert np.array_equal(DataModifier.normalize_series(series), np.zeros((6, 4)))


def test_prev_close_ratio():
    series = series_from_closes([100.0, 110.0])
    normalized = DataModifier.normalize_series(series)
    assert normalized[1, 3] == pytest.approx(0.10)
    # first candle is measured against its own open
    assert normalized[0, 0] == 0.0


def test_raw_scheme_passes_prices_through():
    series = series_from_closes([100.0, 110.0, 105.0])
    assert np.array_equal(DataModifier.normalize_series(series, "raw"), series.prices())


def test_unknown_scheme_and_empty_input():
    series = series_from_closes([1.0, 2.0])
    with pytest.raises(ConfigurationError):
        DataModifier.normalize_series(series, "zscore")
    with pytest.raises(EmptyInputError):
        DataModifier.normalize_window([])


def test_windowed_state_count(random_walk_series):
    states = DataModifier.make_states(random_walk_series(100), "windowed", 10)
    assert len(states) == 91
    assert states[0].shape == (10, 4)
    assert states[0].candle_index == 9


def test_vanilla_states_are_four_vectors(random_walk_series):
    series = random_walk_series(30)
    states = DataModifier.make_states(series, "vanilla")
    assert len(states) == 30
    assert all(s.shape == (4,) for s in states)


def test_last_window_ends_with_final_candle(random_walk_series):
    series = random_walk_series(40)
    states = DataModifier.make_states(series, "windowed", 7)
    assert np.array_equal(states[-1].values[-1], DataModifier.normalize_series(series)[-1])


def test_window_not_shorter_than_series():
    series = series_from_closes([1.0, 2.0, 3.0])
    with pytest.raises(InsufficientLengthError):
        DataModifier.make_states(series, "windowed", 3)


def test_states_are_read_only(random_walk_series):
    state = DataModifier.make_states(random_walk_series(20), "windowed", 5)[0]
    with pytest.raises(ValueError):
        state.values[0, 0] = 1.0


@given(st.integers(min_value=12, max_value=60), st.integers(min_value=1, max_value=11), st.integers(0, 2**32 - 1))
def test_windows_slide_by_one_candle(n, w, seed):
    rng = np.random.default_rng(seed)
    series = series_from_closes(list(100 * np.exp(np.cumsum(rng.normal(0, 0.02, n)))))
    states = DataModifier.make_states(series, "windowed", w)
    assert len(states) == n - w + 1
    for previous, current in zip(states, states[1:]):
        assert np.array_equal(current.values[:-1], previous.values[1:])


def gapped_series():
    """Six candles with an opening gap from 110 to 120 on the fourth."""
    candles = [
        Candle(date(2020, 1, 1), 100.0, 101.0, 99.0, 100.0),
        Candle(date(2020, 1, 2), 100.0, 106.0, 100.0, 105.0),
        Candle(date(2020, 1, 3), 105.0, 111.0, 104.0, 110.0),
        Candle(date(2020, 1, 6), 120.0, 126.0, 119.0, 125.0),
        Candle(date(2020, 1, 7), 125.0, 127.0, 122.0, 123.0),
        Candle(date(2020, 1, 8), 123.0, 124.0, 118.0, 120.0),
    ]
    return OhlcSeries("GAP", tuple(candles))


@pytest.mark.parametrize("mode, window", [("vanilla", None), ("windowed", 2)])
def test_split_keeps_the_opening_gap(mode, window):
    series = gapped_series()
    train, test = DatasetManager.split(series, SplitSpec.from_strings("2020-01-01", "2020-01-06", "2020-01-08"))
    full = DataModifier.normalize_series(series)
    assert full[3] == pytest.approx([120 / 110 - 1, 126 / 110 - 1, 119 / 110 - 1, 125 / 110 - 1])
    states = DataModifier.make_states(test, mode, window, previous_close=train.closes[-1])
    for state in states:
        offset = len(train) + state.candle_index
        expected = full[offset] if mode == "vanilla" else full[offset - window + 1:offset + 1]
        np.testing.assert_allclose(state.values, expected, rtol=1e-12)
    # without the train close the gap candle is measured against its own open
    assert DataModifier.make_states(test, "vanilla")[0].values[0] == 0.0
