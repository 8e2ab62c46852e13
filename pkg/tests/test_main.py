import json
import os
from datetime import date

import numpy as np
import pandas as pd
import pytest

from candle_dqn.config_manager import ENV_SEED
from candle_dqn.data_handler import write_csv
from candle_dqn.evaluation_manager import TABLE_COLUMNS
from candle_dqn.main import main

from .conftest import series_from_closes

RUN_CONFIG = """\
data.path = {path}
data.symbol = SYN
data.begin = 2020-01-01
data.split = 2020-03-01
data.end = 2020-04-30
encoder.kind = identity
encoder.mode = windowed
encoder.window = 5
train.episodes = 2
train.batch_size = 4
train.replay_capacity = 20
train.target_sync = 10
train.head_hidden = 8
eval.n_sims = 200
run.seed = 3
"""


@pytest.fixture(autouse=True)
def no_seed_from_environment(monkeypatch):
    monkeypatch.delenv(ENV_SEED, raising=False)


@pytest.fixture
def run_config(tmp_path):
    rng = np.random.default_rng(8)
    closes = list(100.0 * np.exp(np.cumsum(rng.normal(0.0, 0.01, 120))))
    data_path = write_csv(series_from_closes(closes, symbol="SYN", start=date(2020, 1, 1)), str(tmp_path / "SYN.csv"))
    config_path = tmp_path / "run.cfg"
    config_path.write_text(RUN_CONFIG.format(path=data_path), encoding="utf-8")
    return str(config_path)


def read(directory, name):
    with open(os.path.join(directory, name), "rb") as handle:
        return handle.read()


def train_and_evaluate(config, out, *extra):
    assert main(["train", "--config", config, "--out", out, *extra]) == 0
    assert main(["evaluate", "--config", config, "--out", out, *extra]) == 0


def test_train_and_evaluate_write_every_artifact(run_config, tmp_path):
    out = str(tmp_path / "run")
    train_and_evaluate(run_config, out)
    for name in ("config.txt", "checkpoint.cdqn", "training_log.csv", "report.csv", "report.json",
                 "report.txt", "profit_curve.csv", "decisions.csv"):
        assert os.path.isfile(os.path.join(out, name)), name
    report = pd.read_csv(os.path.join(out, "report.csv"))
    assert list(report.columns) == ["Agent"] + TABLE_COLUMNS
    assert report["Agent"].tolist() == ["DQN-windowed", "B&H"]
    assert len(pd.read_csv(os.path.join(out, "training_log.csv"))) == 2
    decisions = pd.read_csv(os.path.join(out, "decisions.csv"))
    assert list(decisions.columns) == ["date", "close", "action"]


def test_runs_with_the_same_seed_are_byte_identical(run_config, tmp_path):
    first, second = str(tmp_path / "first"), str(tmp_path / "second")
    train_and_evaluate(run_config, first)
    train_and_evaluate(run_config, second)
    for name in ("checkpoint.cdqn", "training_log.csv", "report.csv", "report.json", "decisions.csv"):
        assert read(first, name) == read(second, name), name


def test_seed_flag_changes_the_run(run_config, tmp_path):
    base, other = str(tmp_path / "base"), str(tmp_path / "other")
    assert main(["train", "--config", run_config, "--out", base]) == 0
    assert main(["train", "--config", run_config, "--out", other, "--seed", "4"]) == 0
    assert read(base, "checkpoint.cdqn") != read(other, "checkpoint.cdqn")
    assert "run.seed = 4" in read(other, "config.txt").decode()


def test_seed_from_environment(run_config, tmp_path, monkeypatch):
    monkeypatch.setenv(ENV_SEED, "9")
    out = str(tmp_path / "env")
    assert main(["train", "--config", run_config, "--out", out]) == 0
    assert "run.seed = 9" in read(out, "config.txt").decode()


def test_decision_slice(run_config, tmp_path):
    out = str(tmp_path / "slice")
    train_and_evaluate(run_config, out)
    assert main(["evaluate", "--config", run_config, "--out", out, "--slice", "3:10"]) == 0
    assert len(pd.read_csv(os.path.join(out, "decisions.csv"))) == 10


def test_transaction_cost_only_changes_wealth(run_config, tmp_path):
    trained = str(tmp_path / "trained")
    assert main(["train", "--config", run_config, "--out", trained]) == 0
    checkpoint = os.path.join(trained, "checkpoint.cdqn")
    free, costly = str(tmp_path / "tc0"), str(tmp_path / "tc1")
    assert main(["evaluate", "--config", run_config, "--out", free, "--checkpoint", checkpoint, "--tc", "0"]) == 0
    assert main(["evaluate", "--config", run_config, "--out", costly, "--checkpoint", checkpoint, "--tc", "0.01"]) == 0
    assert read(free, "decisions.csv") == read(costly, "decisions.csv")
    free_report = pd.read_csv(os.path.join(free, "report.csv")).set_index("Agent")
    costly_report = pd.read_csv(os.path.join(costly, "report.csv")).set_index("Agent")
    assert free_report["Initial Investment"].equals(costly_report["Initial Investment"])
    assert costly_report.loc["B&H", "Final Portfolio Value"] == pytest.approx(
        0.99 * free_report.loc["B&H", "Final Portfolio Value"]
    )
    assert costly_report.loc["B&H", "Total Return"] < free_report.loc["B&H", "Total Return"]
    assert costly_report.iloc[0]["Final Portfolio Value"] <= free_report.iloc[0]["Final Portfolio Value"]


def test_missing_data_file_exits_with_data_code(tmp_path):
    code = main(["train", "--data", str(tmp_path / "absent.csv"), "--symbol", "GOOGL", "--out", str(tmp_path)])
    assert code == 3


def test_invalid_configuration_exits_with_config_code(run_config, tmp_path):
    assert main(["train", "--config", run_config, "--out", str(tmp_path), "--set", "train.gamma=2"]) == 2
    assert main(["train", "--config", run_config, "--out", str(tmp_path), "--set", "train.gama=0.5"]) == 2
    assert main(["train", "--config", run_config, "--out", str(tmp_path), "--encoder", "transformer"]) == 2


def test_checkpoint_for_another_window_exits_with_compat_code(run_config, tmp_path):
    out = str(tmp_path / "w5")
    assert main(["train", "--config", run_config, "--out", out]) == 0
    assert main(["evaluate", "--config", run_config, "--out", out, "--window", "6"]) == 4


def test_sweep_writes_one_row_per_window(run_config, tmp_path):
    out = str(tmp_path / "sweep")
    assert main(["sweep", "--config", run_config, "--out", out, "--windows", "10..12", "--jobs", "2"]) == 0
    heatmap = pd.read_csv(os.path.join(out, "heatmap.csv"))
    assert heatmap["w"].tolist() == [10, 11, 12]
    assert heatmap["normalized"].between(0.0, 1.0).all()


def test_sweep_with_vanilla_encoder_is_a_config_error(run_config, tmp_path):
    out = str(tmp_path / "vanilla")
    assert main(["sweep", "--config", run_config, "--out", out, "--set", "encoder.mode=vanilla",
                 "--set", "encoder.window=", "--windows", "5"]) == 2


def test_report_merges_evaluations(run_config, tmp_path):
    first, second = str(tmp_path / "a"), str(tmp_path / "b")
    train_and_evaluate(run_config, first)
    train_and_evaluate(run_config, second, "--seed", "5")
    merged = str(tmp_path / "merged")
    code = main(["report", os.path.join(first, "report.json"), os.path.join(second, "report.json"), "--out", merged])
    assert code == 0
    table = pd.read_csv(os.path.join(merged, "comparison.csv"))
    assert len(table) == 4
    with open(os.path.join(merged, "comparison.json"), encoding="utf-8") as handle:
        assert len(json.load(handle)["rows"]) == 4


def test_report_of_a_missing_file(tmp_path):
    assert main(["report", str(tmp_path / "nothing.json"), "--out", str(tmp_path)]) == 3


def test_ingest_writes_clean_copy_and_summary(run_config, tmp_path):
    out = str(tmp_path / "ingest")
    assert main(["ingest", "--config", run_config, "--out", out]) == 0
    with open(os.path.join(out, "ingest.json"), encoding="utf-8") as handle:
        summary = json.load(handle)
    assert summary["rows"] == 120
    assert summary["skipped_rows"] == 0
    assert summary["train_size"] + summary["test_size"] == 120
    assert os.path.isfile(os.path.join(out, "SYN.csv"))
