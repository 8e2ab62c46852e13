from datetime import date

import pytest

from candle_dqn.config_manager import ENV_SEED, ConfigManager, RunConfig, parse_windows
from candle_dqn.exceptions import ConfigurationError

GRU_CONFIG = """\
# GRU agent on GOOGL
data.path = data/GOOGL.csv
data.symbol = GOOGL
encoder.kind = gru
encoder.mode = windowed
encoder.window = 15   # candles per state
train.gamma = 0.8
train.episodes = 3
run.seed = 11
"""


def test_parse_windows():
    assert parse_windows("3..6") == (3, 4, 5, 6)
    assert parse_windows("5, 10,15") == (5, 10, 15)


def test_defaults():
    config = ConfigManager(environ={}).resolve()
    assert config == RunConfig()
    assert config.train.gamma == 0.9
    assert config.train.target_sync == 500
    assert config.train.episodes == 50
    assert config.var_method == "monte_carlo"


def test_reads_config_file(write_text):
    config = ConfigManager(environ={}).resolve(write_text("gru.cfg", GRU_CONFIG))
    assert config.data_path == "data/GOOGL.csv"
    assert (config.encoder.kind, config.encoder.mode, config.encoder.window_size) == ("gru", "windowed", 15)
    assert config.train.gamma == 0.8
    assert config.seed == config.train.seed == 11


def test_precedence_file_then_environment_then_flags(write_text):
    path = write_text("gru.cfg", GRU_CONFIG)
    assert ConfigManager(environ={ENV_SEED: "21"}).resolve(path).seed == 21
    config = ConfigManager(environ={ENV_SEED: "21"}).resolve(path, {"run.seed": "31", "train.gamma": "0.5"})
    assert config.seed == config.train.seed == 31
    assert config.train.gamma == 0.5


def test_none_overrides_are_ignored(write_text):
    config = ConfigManager(environ={}).resolve(write_text("gru.cfg", GRU_CONFIG), {"encoder.window": None})
    assert config.encoder.window_size == 15


def test_unknown_key_names_file_and_line(write_text):
    path = write_text("bad.cfg", "train.gamma = 0.9\ntrain.gama = 0.8\n")
    with pytest.raises(ConfigurationError, match=r"bad\.cfg:2: unknown key 'train\.gama'"):
        ConfigManager(environ={}).resolve(path)


def test_line_without_equals_sign(write_text):
    with pytest.raises(ConfigurationError, match=":1:"):
        ConfigManager(environ={}).resolve(write_text("bad.cfg", "encoder.kind gru\n"))


def test_missing_file():
    with pytest.raises(ConfigurationError, match="Cannot read"):
        ConfigManager(environ={}).resolve("/nonexistent/run.cfg")


def test_every_failing_field_is_reported():
    overrides = {"train.gamma": "1.5", "eval.tc": "2", "encoder.kind": "gru", "train.episodes": "many"}
    with pytest.raises(ConfigurationError) as info:
        ConfigManager(environ={}).resolve(overrides=overrides)
    message = str(info.value)
    for field_path in ("train.gamma", "eval.tc", "encoder.mode", "train.episodes"):
        assert field_path in message


def test_mlp_needs_batches_of_two():
    with pytest.raises(ConfigurationError, match="train.batch_size"):
        ConfigManager(environ={}).resolve(overrides={"encoder.kind": "mlp", "train.batch_size": "1"})


def test_split_dates_come_from_registry_or_config():
    config = ConfigManager(environ={}).resolve(overrides={"data.symbol": "GOOGL"})
    assert config.split_spec().split_date == date(2018, 1, 1)
    explicit = ConfigManager(environ={}).resolve(
        overrides={"data.begin": "2019-01-01", "data.split": "2019-06-01", "data.end": "2019-12-31"}
    )
    assert explicit.split_spec().split_date == date(2019, 6, 1)
    assert not ConfigManager(environ={}).resolve().has_split()


def test_partial_split_dates_are_rejected():
    with pytest.raises(ConfigurationError, match="data.split"):
        ConfigManager(environ={}).resolve(overrides={"data.split": "2019-06-01"})


def test_snapshot_reads_back_to_the_same_config(write_text, tmp_path):
    manager = ConfigManager(environ={})
    config = manager.resolve(write_text("gru.cfg", GRU_CONFIG), {"sweep.windows": "5..8", "eval.tc": "0.001"})
    snapshot = manager.write_snapshot(config, str(tmp_path / "run" / "config.txt"))
    assert manager.resolve(snapshot) == config
