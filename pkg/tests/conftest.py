import os
from datetime import date, timedelta

import hypothesis
import numpy as np
import pytest

from candle_dqn.data_handler import Candle, OhlcSeries
from candle_dqn.neural_core import backward

np.seterr(all="warn")

hypothesis.settings.register_profile("fast", max_examples=25, deadline=None)
hypothesis.settings.register_profile("ci", max_examples=200, deadline=None)
hypothesis.settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "fast"))


def series_from_closes(closes, first_open=None, symbol="SYN", start=date(2015, 1, 1)):
    """Candles whose open is the previous close, with high/low bracketing open and close."""
    candles = []
    previous = closes[0] if first_open is None else first_open
    for i, close in enumerate(closes):
        high, low = max(previous, close), min(previous, close)
        candles.append(Candle(start + timedelta(days=i), float(previous), float(high), float(low), float(close)))
        previous = close
    return OhlcSeries(symbol, tuple(candles))


def period2_closes(n):
    return [100.0 if i % 2 == 0 else 110.0 for i in range(n)]


@pytest.fixture
def make_series():
    return series_from_closes


@pytest.fixture
def period2_series():
    # first open 110 so the vanilla state of candle 0 already looks like a down-move
    return series_from_closes(period2_closes(60), first_open=110.0, symbol="P2")


@pytest.fixture
def monotone_series():
    return series_from_closes([100.0 * 1.005 ** i for i in range(80)], symbol="UP")


@pytest.fixture
def random_walk_series():
    def build(n=120, seed=0):
        rng = np.random.default_rng(seed)
        closes = 100.0 * np.exp(np.cumsum(rng.normal(0.0, 0.01, n)))
        return series_from_closes(list(closes), symbol="RW")

    return build


def relative_gradient_error(loss_fn, tensors, h=1e-5):
    """
    Max |analytic - numeric| over every entry of ``tensors``, divided by the
    largest gradient magnitude. ``loss_fn`` rebuilds the scalar loss from the
    current tensor values.
    """
    for tensor in tensors:
        tensor.grad = None
    backward(loss_fn())
    worst, scale = 0.0, 1e-12
    for tensor in tensors:
        analytic = tensor.grad
        numeric = np.zeros_like(tensor.values)
        for index in np.ndindex(tensor.shape):
            original = tensor.values[index]
            tensor.values[index] = original + h
            up = loss_fn().item()
            tensor.values[index] = original - h
            down = loss_fn().item()
            tensor.values[index] = original
            numeric[index] = (up - down) / (2 * h)
        worst = max(worst, float(np.max(np.abs(analytic - numeric))))
        scale = max(scale, float(np.max(np.abs(analytic))), float(np.max(np.abs(numeric))))
    return worst / scale


@pytest.fixture
def gradient_error():
    return relative_gradient_error


@pytest.fixture
def write_text(tmp_path):
    def write(name, text):
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return str(path)

    return write
