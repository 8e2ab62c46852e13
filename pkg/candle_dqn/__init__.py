from .data_handler import DataHandler, OhlcSeries, Candle, load_csv, write_csv
from .data_modifier import DataModifier, RawState
from .dataset_manager import DatasetManager, SplitSpec
from .trade_environment import Action, EnvState, RewardParams, TradeEnvironment, EquityCurve, execute_equity
from .encoders import Encoder, EncoderConfig, agent_label, encoder_param_count
from .dqn_agent import DQNAgent, QNetwork, ReplayMemory, TrainConfig, train, greedy_policy
from .evaluation_manager import EvaluationManager, MetricsReport
from .backtest_manager import run_backtest, buy_and_hold, window_sweep, compare_report
from .checkpoint_manager import CheckpointManager
from .config_manager import ConfigManager, RunConfig
from .utils import Utility

__all__ = [
    "DataHandler",
    "OhlcSeries",
    "Candle",
    "load_csv",
    "write_csv",
    "DataModifier",
    "RawState",
    "DatasetManager",
    "SplitSpec",
    "Action",
    "EnvState",
    "RewardParams",
    "TradeEnvironment",
    "EquityCurve",
    "execute_equity",
    "Encoder",
    "EncoderConfig",
    "agent_label",
    "encoder_param_count",
    "DQNAgent",
    "QNetwork",
    "ReplayMemory",
    "TrainConfig",
    "train",
    "greedy_policy",
    "EvaluationManager",
    "MetricsReport",
    "run_backtest",
    "buy_and_hold",
    "window_sweep",
    "compare_report",
    "CheckpointManager",
    "ConfigManager",
    "RunConfig",
    "Utility",
]
