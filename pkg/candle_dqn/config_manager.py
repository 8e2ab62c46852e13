"""
Run configuration.

Config files are flat ``key = value`` text with dotted section names::

    # GRU agent on GOOGL
    data.path = data/GOOGL.csv
    encoder.kind = gru
    encoder.mode = windowed
    encoder.window = 15
    train.gamma = 0.9

Values resolve as dataclass defaults < config file < CANDLE_DQN_SEED (seed
only) < command-line flags. Unknown keys are errors.
"""
import logging
import os
from dataclasses import dataclass, field, fields, replace
from typing import Callable, Dict, List, Mapping, Optional, Tuple

from .backtest_manager import CI_SWEEP_WINDOWS
from .data_modifier import SCHEMES
from .dataset_manager import DatasetManager, SplitSpec
from .dqn_agent import TrainConfig
from .encoders import EncoderConfig
from .evaluation_manager import VAR_METHODS
from .exceptions import ConfigurationError

logger = logging.getLogger(__name__)

ENV_SEED = "CANDLE_DQN_SEED"


def _optional(convert: Callable) -> Callable:
    def parse(text: str):
        return None if text.strip() == "" else convert(text)

    return parse


def parse_windows(text: str) -> Tuple[int, ...]:
    """``3..75`` (inclusive) or a comma list such as ``5,10,15,20``."""
    text = text.strip()
    if ".." in text:
        low, high = (int(part) for part in text.split("..", 1))
        return tuple(range(low, high + 1))
    return tuple(int(part) for part in text.split(",") if part.strip())


def format_windows(windows) -> str:
    return ",".join(str(w) for w in windows)


def _str(text: str) -> str:
    return text.strip()


# key -> (section, attribute, parser)
KEYS: Dict[str, Tuple[str, str, Callable]] = {
    "data.path": ("run", "data_path", _optional(_str)),
    "data.symbol": ("run", "symbol", _optional(_str)),
    "data.begin": ("run", "begin", _optional(_str)),
    "data.split": ("run", "split", _optional(_str)),
    "data.end": ("run", "end", _optional(_str)),
    "data.scheme": ("run", "scheme", _str),
    "encoder.kind": ("encoder", "kind", _str),
    "encoder.mode": ("encoder", "mode", _str),
    "encoder.window": ("encoder", "window_size", _optional(int)),
    "encoder.feature_size": ("encoder", "feature_size", int),
    "encoder.mlp_hidden": ("encoder", "mlp_hidden", int),
    "encoder.gru_hidden": ("encoder", "gru_hidden", int),
    "encoder.cnn_channels": ("encoder", "cnn_channels", int),
    "encoder.cnn_kernel": ("encoder", "cnn_kernel", int),
    "encoder.cnn_gru_channels": ("encoder", "cnn_gru_channels", int),
    "train.episodes": ("train", "episodes", int),
    "train.gamma": ("train", "gamma", float),
    "train.epsilon_start": ("train", "epsilon_start", float),
    "train.epsilon_end": ("train", "epsilon_end", float),
    "train.epsilon_decay": ("train", "epsilon_decay", float),
    "train.batch_size": ("train", "batch_size", int),
    "train.replay_capacity": ("train", "replay_capacity", int),
    "train.target_sync": ("train", "target_sync", int),
    "train.learning_rate": ("train", "learning_rate", float),
    "train.head_hidden": ("train", "head_hidden", int),
    "train.eviction": ("train", "eviction", _str),
    "eval.tc": ("run", "eval_tc", float),
    "eval.initial_wealth": ("run", "initial_wealth", float),
    "eval.alpha": ("run", "alpha", float),
    "eval.var_method": ("run", "var_method", _str),
    "eval.n_sims": ("run", "n_sims", int),
    "sweep.windows": ("run", "windows", parse_windows),
    "run.seed": ("run", "seed", int),
    "run.out": ("run", "out_dir", _str),
    "run.jobs": ("run", "jobs", int),
}


@dataclass
class RunConfig:
    data_path: Optional[str] = None
    symbol: Optional[str] = None
    begin: Optional[str] = None
    split: Optional[str] = None
    end: Optional[str] = None
    scheme: str = "prev_close"
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval_tc: float = 0.0
    initial_wealth: float = 1000.0
    alpha: float = 5.0
    var_method: str = "monte_carlo"
    n_sims: int = 1000
    windows: Tuple[int, ...] = CI_SWEEP_WINDOWS
    out_dir: str = "out"
    seed: int = 0
    jobs: int = 1

    def problems(self) -> List[str]:
        problems = []
        if self.scheme not in SCHEMES:
            problems.append(f"data.scheme: unknown scheme '{self.scheme}', use one of {SCHEMES}")
        if not 0.0 <= self.eval_tc < 1.0:
            problems.append(f"eval.tc: must lie in [0, 1), got {self.eval_tc}")
        if self.initial_wealth <= 0:
            problems.append(f"eval.initial_wealth: must be > 0, got {self.initial_wealth}")
        if not 0.0 < self.alpha < 50.0:
            problems.append(f"eval.alpha: must lie in (0, 50), got {self.alpha}")
        if self.var_method not in VAR_METHODS:
            problems.append(f"eval.var_method: unknown method '{self.var_method}', use one of {VAR_METHODS}")
        if self.n_sims < 1:
            problems.append(f"eval.n_sims: must be >= 1, got {self.n_sims}")
        if not self.windows or min(self.windows) < 1:
            problems.append(f"sweep.windows: need positive window sizes, got {self.windows}")
        if self.jobs < 1:
            problems.append(f"run.jobs: must be >= 1, got {self.jobs}")
        if self.encoder.kind == "mlp" and self.train.batch_size < 2:
            problems.append("train.batch_size: the mlp encoder batch-normalizes, so batches need >= 2 experiences")
        if any(value is not None for value in (self.begin, self.split, self.end)) and None in (self.begin, self.split, self.end):
            problems.append("data.split: give data.begin, data.split and data.end together")
        return problems

    def split_spec(self) -> SplitSpec:
        """Explicit split dates, else the registered dates for ``symbol``."""
        if self.split is not None:
            return SplitSpec.from_strings(self.begin, self.split, self.end)
        if self.symbol is None:
            raise ConfigurationError("data.split: no split dates given and no data.symbol to look them up.")
        return DatasetManager().split_spec_for(self.symbol)

    def has_split(self) -> bool:
        try:
            self.split_spec()
        except ConfigurationError:
            return False
        return True

    def values(self) -> Dict[str, object]:
        sections = {"run": self, "encoder": self.encoder, "train": self.train}
        return {key: getattr(sections[section], attr) for key, (section, attr, _) in KEYS.items()}

    def to_text(self) -> str:
        """Snapshot in config-file format; reading it back yields an equal RunConfig."""
        lines = ["# candle-dqn run configuration"]
        for key, value in self.values().items():
            if key == "sweep.windows":
                text = format_windows(value)
            elif value is None:
                text = ""
            elif isinstance(value, float):
                text = repr(value)
            else:
                text = str(value)
            lines.append(f"{key} = {text}".rstrip())
        return "\n".join(lines) + "\n"


class ConfigManager:
    """Reads config files, applies environment and flag overrides, validates."""

    def __init__(self, environ: Optional[Mapping[str, str]] = None):
        self.environ = os.environ if environ is None else environ

    @staticmethod
    def parse_text(text: str, source: str = "<config>") -> Dict[str, str]:
        entries = {}
        for number, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigurationError(f"{source}:{number}: expected 'key = value', got '{raw.strip()}'")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in KEYS:
                raise ConfigurationError(f"{source}:{number}: unknown key '{key}'")
            entries[key] = value
        return entries

    def read_file(self, path: str) -> Dict[str, str]:
        try:
            with open(path, "r", encoding="utf-8") as handle:
                text = handle.read()
        except OSError as e:
            raise ConfigurationError(f"Cannot read config file '{path}': {e}") from e
        return self.parse_text(text, path)

    def resolve(self, config_path: Optional[str] = None, overrides: Optional[Mapping[str, str]] = None) -> RunConfig:
        """
        Build and validate a RunConfig.

        Raises:
            ConfigurationError: Listing every failing field path.
        """
        entries: Dict[str, str] = {}
        if config_path is not None:
            entries.update(self.read_file(config_path))
        if self.environ.get(ENV_SEED):
            entries["run.seed"] = self.environ[ENV_SEED]
        for key, value in (overrides or {}).items():
            if key not in KEYS:
                raise ConfigurationError(f"unknown key '{key}'")
            if value is not None:
                entries[key] = str(value)
        return self.build(entries)

    @staticmethod
    def build(entries: Mapping[str, str]) -> RunConfig:
        parsed: Dict[str, Dict[str, object]] = {"run": {}, "encoder": {}, "train": {}}
        problems = []
        for key, text in entries.items():
            section, attr, parse = KEYS[key]
            try:
                parsed[section][attr] = parse(text)
            except ValueError:
                problems.append(f"{key}: cannot parse '{text}'")

        defaults = RunConfig()
        encoder, train = defaults.encoder, defaults.train
        try:
            encoder = EncoderConfig(**{**_as_kwargs(defaults.encoder), **parsed["encoder"]})
        except ConfigurationError as e:
            problems.append(str(e))
        seed = parsed["run"].get("seed", defaults.seed)
        try:
            train = TrainConfig(**{**_as_kwargs(defaults.train), **parsed["train"], "seed": seed})
        except ConfigurationError as e:
            problems.append(str(e))

        config = replace(defaults, encoder=encoder, train=train, **parsed["run"])
        problems.extend(config.problems())
        if problems:
            raise ConfigurationError("invalid configuration:\n  " + "\n  ".join(problems))
        return config

    def write_snapshot(self, config: RunConfig, path: str) -> str:
        directory = os.path.dirname(os.path.abspath(path))
        os.makedirs(directory, exist_ok=True)
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(config.to_text())
        logger.info("Config snapshot written to %s", path)
        return path


def _as_kwargs(instance) -> dict:
    return {f.name: getattr(instance, f.name) for f in fields(instance)}
