"""
candle-dqn command line.

    candle-dqn ingest   --data data/GOOGL.csv --out out/
    candle-dqn train    --config runs/gru.cfg --seed 7
    candle-dqn evaluate --config runs/gru.cfg --tc 0.01 --slice 0:100
    candle-dqn sweep    --config runs/gru.cfg --windows 3..75 --jobs 4
    candle-dqn report   out/gru/report.json out/cnn/report.json --out out/

Exit codes: 0 success, 2 configuration error, 3 data error, 4 checkpoint
compatibility error, 1 anything else.
"""
import argparse
import json
import logging
import os
import sys
from typing import Dict, List, Optional, Tuple

import numpy as np

from .backtest_manager import (
    buy_and_hold,
    compare_report,
    decisions_frame,
    profit_curve_frame,
    run_backtest,
    window_sweep,
)
from .config_manager import ConfigManager, RunConfig
from .data_handler import DataHandler, OhlcSeries, load_csv, write_csv
from .dataset_manager import DatasetManager
from .dqn_agent import DQNAgent
from .encoders import agent_label
from .evaluation_manager import EvaluationManager
from .exceptions import CandleDQNError, ConfigurationError, DataError
from .trade_environment import RewardParams, TradeEnvironment
from .utils import Utility, render_text, report_records, table_from_records

logger = logging.getLogger("candle_dqn")

CHECKPOINT_NAME = "checkpoint.cdqn"
SNAPSHOT_NAME = "config.txt"
EXIT_DATA = DataError.exit_code


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="Config file of 'key = value' lines.")
    common.add_argument("--data", help="Yahoo-format OHLC CSV (data.path).")
    common.add_argument("--symbol", help="Instrument name; selects registered split dates (data.symbol).")
    common.add_argument("--seed", type=int, help="Random seed (run.seed); falls back to $CANDLE_DQN_SEED.")
    common.add_argument("--tc", type=float, help="Evaluation transaction cost in [0, 1) (eval.tc).")
    common.add_argument("--encoder", help="identity, mlp, gru, cnn or cnn_gru (encoder.kind).")
    common.add_argument("--window", type=int, help="Window size; implies windowed states (encoder.window).")
    common.add_argument("--out", help="Output directory (run.out).")
    common.add_argument("--jobs", type=int, help="Parallel sweep cells (run.jobs).")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="Override any config key, e.g. --set train.gamma=0.5.")
    common.add_argument("--verbose", action="store_true", help="Log at DEBUG level.")
    common.add_argument("--progress", action="store_true", help="Show progress bars.")

    parser = argparse.ArgumentParser(prog="candle-dqn", description="Candlestick DQN trading agents.")
    commands = parser.add_subparsers(dest="command", required=True)

    commands.add_parser("ingest", parents=[common], help="Validate a CSV and write a cleaned copy with a summary.")
    train = commands.add_parser("train", parents=[common], help="Train an agent on the training split.")
    train.add_argument("--checkpoint", help="Checkpoint path (default <out>/checkpoint.cdqn).")
    evaluate = commands.add_parser("evaluate", parents=[common], help="Backtest a checkpoint on the test split.")
    evaluate.add_argument("--checkpoint", help="Checkpoint path (default <out>/checkpoint.cdqn).")
    evaluate.add_argument("--slice", help="Restrict decisions.csv to START:LENGTH rows.")
    sweep = commands.add_parser("sweep", parents=[common], help="Train and test one agent per window size.")
    sweep.add_argument("--windows", help="Window sizes, '3..75' or '5,10,15,20' (sweep.windows).")
    report = commands.add_parser("report", parents=[common], help="Merge report.json files into one table.")
    report.add_argument("reports", nargs="+", help="report.json files written by evaluate.")
    return parser


def overrides_from_args(args: argparse.Namespace) -> Dict[str, str]:
    overrides = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigurationError(f"--set expects KEY=VALUE, got '{item}'")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    flags = {
        "data.path": args.data,
        "data.symbol": args.symbol,
        "run.seed": args.seed,
        "eval.tc": args.tc,
        "encoder.kind": args.encoder,
        "encoder.window": args.window,
        "run.out": args.out,
        "run.jobs": args.jobs,
        "sweep.windows": getattr(args, "windows", None),
    }
    if args.window is not None and "encoder.mode" not in overrides:
        overrides["encoder.mode"] = "windowed"
    overrides.update({key: value for key, value in flags.items() if value is not None})
    return overrides


def parse_slice(text: Optional[str]) -> Tuple[int, Optional[int]]:
    if text is None:
        return 0, None
    try:
        start, length = text.split(":", 1)
        return int(start), (int(length) if length else None)
    except ValueError as e:
        raise ConfigurationError(f"--slice expects START:LENGTH, got '{text}'") from e


def require_data(config: RunConfig) -> str:
    if config.data_path is None:
        raise ConfigurationError("data.path: no input CSV given (use --data or data.path).")
    if not os.path.isfile(config.data_path):
        raise DataError(f"Data file '{config.data_path}' does not exist.")
    return config.data_path


def load_series(config: RunConfig) -> OhlcSeries:
    require_data(config)
    return load_csv(config.data_path, config.symbol)


def split_series(config: RunConfig, series: OhlcSeries):
    return DatasetManager().prepare(series, config.split_spec())


def cmd_ingest(config: RunConfig, args) -> int:
    handler = DataHandler(require_data(config))
    series = handler.load_series(config.symbol)
    summary = {
        "symbol": series.symbol,
        "rows": len(series),
        "skipped_rows": series.skipped_rows,
        "skip_reasons": dict(sorted(handler.skip_reasons.items())),
        "first_date": series[0].date.isoformat(),
        "last_date": series[-1].date.isoformat(),
    }
    if config.has_split():
        train, test = split_series(config, series)
        summary.update({"train_size": len(train), "test_size": len(test)})
    utility = Utility(config.out_dir)
    write_csv(series, utility.path(f"{series.symbol}.csv"))
    logger.info("Wrote %s", utility.path(f"{series.symbol}.csv"))
    utility.write_json(summary, "ingest.json")
    return 0


def cmd_train(config: RunConfig, args) -> int:
    train_series, _ = split_series(config, load_series(config))
    env = TradeEnvironment(train_series, config.encoder.mode, config.encoder.window_size, config.scheme,
                           RewardParams(0.0))
    utility = Utility(config.out_dir)
    ConfigManager().write_snapshot(config, utility.path(SNAPSHOT_NAME))

    rng = np.random.default_rng(config.train.seed)
    agent = DQNAgent.create(config.encoder, config.train, rng)
    logger.info("Training %s on %s (%d states, %d episodes)",
                agent_label(config.encoder), train_series.symbol, len(env), config.train.episodes)
    log = agent.train(env, rng, progress=args.progress)
    agent.save(args.checkpoint or utility.path(CHECKPOINT_NAME))
    utility.write_text(log.to_csv(), "training_log.csv")
    return 0


def cmd_evaluate(config: RunConfig, args) -> int:
    start, length = parse_slice(args.slice)
    train_series, test_series = split_series(config, load_series(config))
    utility = Utility(config.out_dir)
    agent = DQNAgent.load(args.checkpoint or utility.path(CHECKPOINT_NAME), config.encoder)
    ConfigManager().write_snapshot(config, utility.path(SNAPSHOT_NAME))

    evaluator = EvaluationManager(config.alpha, config.var_method, config.n_sims, seed=config.seed)
    result = run_backtest(agent.policy, test_series, config.eval_tc, config.initial_wealth, config.scheme, evaluator,
                          previous_close=train_series.closes[-1])
    # buy-and-hold enters on the first close the agent trades on
    first_index = len(test_series) - len(result.trade_log)
    _, baseline = buy_and_hold(test_series, config.eval_tc, config.initial_wealth, first_index, evaluator)

    label = agent_label(config.encoder)
    table = compare_report([(label, result.report), ("B&H", baseline)])
    utility.write_frame(table, "report.csv")
    utility.write_json(
        {
            "symbol": test_series.symbol,
            "rows": report_records(table),
            "details": {label: result.report.to_dict(), "B&H": baseline.to_dict()},
        },
        "report.json",
    )
    utility.write_text(render_text(table), "report.txt")
    utility.write_frame(profit_curve_frame(result), "profit_curve.csv")
    utility.write_frame(decisions_frame(result, start, length), "decisions.csv")
    return 0


def cmd_sweep(config: RunConfig, args) -> int:
    train_series, test_series = split_series(config, load_series(config))
    utility = Utility(config.out_dir)
    ConfigManager().write_snapshot(config, utility.path(SNAPSHOT_NAME))
    result = window_sweep(
        train_series,
        test_series,
        config.encoder,
        config.windows,
        config.train,
        config.eval_tc,
        config.initial_wealth,
        config.scheme,
        config.jobs,
        args.progress,
    )
    utility.write_frame(result.to_frame(), "heatmap.csv")
    return 0


def cmd_report(config: RunConfig, args) -> int:
    records: List[dict] = []
    for path in args.reports:
        try:
            with open(path, "r", encoding="utf-8") as handle:
                payload = json.load(handle)
            records.extend(payload["rows"])
        except FileNotFoundError as e:
            raise DataError(f"Report '{path}' does not exist.") from e
        except (json.JSONDecodeError, KeyError, TypeError) as e:
            raise DataError(f"Report '{path}' is not a report.json written by evaluate: {e}") from e
    table = table_from_records(records)
    utility = Utility(config.out_dir)
    utility.write_frame(table, "comparison.csv")
    utility.write_json({"rows": report_records(table)}, "comparison.json")
    utility.write_text(render_text(table), "comparison.txt")
    return 0


COMMANDS = {
    "ingest": cmd_ingest,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "sweep": cmd_sweep,
    "report": cmd_report,
}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        config = ConfigManager().resolve(args.config, overrides_from_args(args))
        return COMMANDS[args.command](config, args)
    except CandleDQNError as e:
        logger.error("%s", e)
        return e.exit_code
    except FileNotFoundError as e:
        logger.error("%s", e)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
