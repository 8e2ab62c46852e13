"""
Feature extractors mapping a RawState to a fixed-size feature vector.

    identity  flattened input, F = 4 (vanilla) or 4w (windowed)
    mlp       Linear(in, H) -> BatchNorm(H) -> ReLU -> Linear(H, F)
    gru       GRU over the w candles, last hidden state -> Linear(H, F)
    cnn       conv1d over time (4 input channels, kernel k) -> ReLU -> flatten -> Linear(., F)
    cnn_gru   per-candle conv across the 4 prices -> ReLU -> GRU over w -> Linear(H, F)

Parameters live in a ParamSet, optionally under a name prefix, so the Q-network
can keep encoder and head in one set.
"""
import math
from dataclasses import asdict, dataclass
from typing import Dict, List, NamedTuple, Optional

import numpy as np

from .data_modifier import MODES, RawState
from .exceptions import ConfigurationError, DimensionError
from .neural_core import (
    GRU_BIASES,
    GRU_WEIGHTS,
    RunningStats,
    Tensor,
    as_tensor,
    batchnorm_forward,
    conv1d_forward,
    gru_cell_forward,
    gru_param_shapes,
    linear_forward,
    relu,
    reshape,
    transpose,
)
from .optimizer import ParamSet

KINDS = ("identity", "mlp", "gru", "cnn", "cnn_gru")
WINDOWED_ONLY = ("gru", "cnn", "cnn_gru")
FORWARD_MODES = ("train", "eval")


@dataclass
class EncoderConfig:
    kind: str = "identity"
    mode: str = "vanilla"
    window_size: Optional[int] = None
    feature_size: int = 128
    mlp_hidden: int = 128
    gru_hidden: int = 128
    cnn_channels: int = 32
    cnn_kernel: int = 3
    cnn_gru_channels: int = 16

    def __post_init__(self):
        problems = self.problems()
        if problems:
            raise ConfigurationError("; ".join(problems))

    def problems(self, prefix: str = "encoder.") -> List[str]:
        problems = []
        if self.kind not in KINDS:
            problems.append(f"{prefix}kind: unknown encoder '{self.kind}', use one of {KINDS}")
        if self.mode not in MODES:
            problems.append(f"{prefix}mode: unknown state mode '{self.mode}', use one of {MODES}")
        if self.kind in WINDOWED_ONLY and self.mode != "windowed":
            problems.append(f"{prefix}mode: encoder '{self.kind}' needs windowed states, got '{self.mode}'")
        if self.mode == "windowed" and (self.window_size is None or self.window_size < 1):
            problems.append(f"{prefix}window: windowed states need a positive window size, got {self.window_size}")
        if self.kind == "cnn" and self.window_size is not None and self.window_size < self.cnn_kernel:
            problems.append(f"{prefix}window: cnn kernel {self.cnn_kernel} is longer than window {self.window_size}")
        for name in ("feature_size", "mlp_hidden", "gru_hidden", "cnn_channels", "cnn_kernel", "cnn_gru_channels"):
            if getattr(self, name) < 1:
                problems.append(f"{prefix}{name}: must be >= 1, got {getattr(self, name)}")
        return problems

    @property
    def input_size(self) -> int:
        return 4 if self.mode == "vanilla" else 4 * self.window_size

    @property
    def output_size(self) -> int:
        return self.input_size if self.kind == "identity" else self.feature_size

    def to_dict(self) -> dict:
        return asdict(self)


class ParamSpec(NamedTuple):
    """A named tensor and how to initialize it: uniform(-bound, bound), or ``fill`` when bound is None."""

    name: str
    shape: tuple
    bound: Optional[float] = None
    fill: float = 0.0


def linear_specs(prefix: str, in_size: int, out_size: int) -> List[ParamSpec]:
    bound = 1.0 / math.sqrt(in_size)
    return [ParamSpec(f"{prefix}weight", (in_size, out_size), bound), ParamSpec(f"{prefix}bias", (out_size,), bound)]


def _gru_specs(prefix: str, in_size: int, hidden: int) -> List[ParamSpec]:
    bound = 1.0 / math.sqrt(hidden)
    shapes = gru_param_shapes(in_size, hidden)
    return [ParamSpec(f"{prefix}{name}", shapes[name], bound) for name in GRU_WEIGHTS + GRU_BIASES]


def _conv_specs(prefix: str, out_ch: int, in_ch: int, k: int) -> List[ParamSpec]:
    bound = 1.0 / math.sqrt(in_ch * k)
    return [ParamSpec(f"{prefix}kernels", (out_ch, in_ch, k), bound), ParamSpec(f"{prefix}bias", (out_ch,), bound)]


def encoder_param_specs(config: EncoderConfig) -> List[ParamSpec]:
    kind = config.kind
    if kind == "identity":
        return []
    if kind == "mlp":
        hidden = config.mlp_hidden
        return (
            linear_specs("l1.", config.input_size, hidden)
            + [ParamSpec("bn.gamma", (hidden,), fill=1.0), ParamSpec("bn.beta", (hidden,))]
            + linear_specs("l2.", hidden, config.feature_size)
        )
    if kind == "gru":
        return _gru_specs("gru.", 4, config.gru_hidden) + linear_specs("proj.", config.gru_hidden, config.feature_size)
    if kind == "cnn":
        out_len = config.window_size - config.cnn_kernel + 1
        return (
            _conv_specs("conv.", config.cnn_channels, 4, config.cnn_kernel)
            + linear_specs("proj.", config.cnn_channels * out_len, config.feature_size)
        )
    return (
        _conv_specs("conv.", config.cnn_gru_channels, 1, 4)
        + _gru_specs("gru.", config.cnn_gru_channels, config.gru_hidden)
        + linear_specs("proj.", config.gru_hidden, config.feature_size)
    )


def encoder_buffer_specs(config: EncoderConfig) -> List[ParamSpec]:
    if config.kind != "mlp":
        return []
    return [ParamSpec("bn.running_mean", (config.mlp_hidden,)), ParamSpec("bn.running_var", (config.mlp_hidden,), fill=1.0)]


def encoder_param_shapes(config: EncoderConfig) -> Dict[str, tuple]:
    return {spec.name: spec.shape for spec in encoder_param_specs(config)}


def encoder_param_count(config: EncoderConfig) -> int:
    """Number of learnable scalars; identity has none."""
    return int(sum(np.prod(shape) for shape in encoder_param_shapes(config).values()))


def agent_label(config: EncoderConfig) -> str:
    if config.kind == "identity":
        return f"DQN-{config.mode}"
    if config.kind == "mlp":
        return f"MLP-{config.mode}"
    return {"gru": "GRU", "cnn": "CNN", "cnn_gru": "CNN-GRU"}[config.kind]


def initialize(params: ParamSet, specs: List[ParamSpec], rng: np.random.Generator, prefix: str = "",
               buffers: List[ParamSpec] = ()) -> ParamSet:
    """Register ``specs`` in ``params``, drawing values from ``rng`` in spec order."""
    for spec in specs:
        if spec.bound is None:
            values = np.full(spec.shape, spec.fill)
        else:
            values = rng.uniform(-spec.bound, spec.bound, size=spec.shape)
        params.add(prefix + spec.name, values)
    for spec in buffers:
        params.add_buffer(prefix + spec.name, np.full(spec.shape, spec.fill))
    return params


class Encoder:
    """Binds an EncoderConfig to its parameters in a ParamSet."""

    def __init__(self, config: EncoderConfig, params: ParamSet, prefix: str = ""):
        missing = [prefix + name for name in encoder_param_shapes(config) if prefix + name not in params]
        if missing:
            raise ConfigurationError(f"ParamSet lacks encoder parameters {missing}.")
        self.config = config
        self.params = params
        self.prefix = prefix

    @classmethod
    def create(cls, config: EncoderConfig, rng: np.random.Generator, params: Optional[ParamSet] = None,
               prefix: str = "") -> "Encoder":
        params = ParamSet() if params is None else params
        initialize(params, encoder_param_specs(config), rng, prefix, encoder_buffer_specs(config))
        return cls(config, params, prefix)

    def _p(self, name: str) -> Tensor:
        return self.params[self.prefix + name]

    def _gru(self, prefix: str) -> Dict[str, Tensor]:
        return {name: self._p(prefix + name) for name in GRU_WEIGHTS + GRU_BIASES}

    def check_batch(self, values: np.ndarray):
        expected = (4,) if self.config.mode == "vanilla" else (self.config.window_size, 4)
        if values.ndim != len(expected) + 1 or values.shape[1:] != expected:
            raise DimensionError(f"{agent_label(self.config)} encoder expects batches of shape (B, {expected}), got {values.shape}")

    def forward(self, batch, mode: str = "eval") -> Tensor:
        """Encode a batch of state values, (B, 4) or (B, w, 4), into (B, F)."""
        if mode not in FORWARD_MODES:
            raise ConfigurationError(f"Unknown forward mode '{mode}'. Use one of {FORWARD_MODES}.")
        x = as_tensor(batch)
        self.check_batch(x.values)
        n = x.shape[0]
        kind = self.config.kind

        if kind == "identity":
            return reshape(x, (n, self.config.input_size))
        if kind == "mlp":
            hidden = linear_forward(reshape(x, (n, self.config.input_size)), self._p("l1.weight"), self._p("l1.bias"))
            running = RunningStats(
                self.params.buffers[self.prefix + "bn.running_mean"], self.params.buffers[self.prefix + "bn.running_var"]
            )
            hidden = relu(batchnorm_forward(hidden, self._p("bn.gamma"), self._p("bn.beta"), running, mode))
            return linear_forward(hidden, self._p("l2.weight"), self._p("l2.bias"))
        if kind == "gru":
            return self._project(self._run_gru(x, self._gru("gru.")))
        if kind == "cnn":
            conv = relu(conv1d_forward(transpose(x, (0, 2, 1)), self._p("conv.kernels"), self._p("conv.bias")))
            flat = reshape(conv, (n, conv.shape[1] * conv.shape[2]))
            return self._project(flat)

        w, channels = self.config.window_size, self.config.cnn_gru_channels
        per_candle = reshape(x, (n * w, 1, 4))
        conv = relu(conv1d_forward(per_candle, self._p("conv.kernels"), self._p("conv.bias")))
        sequence = reshape(conv, (n, w, channels))
        return self._project(self._run_gru(sequence, self._gru("gru.")))

    def _run_gru(self, sequence: Tensor, params: Dict[str, Tensor]) -> Tensor:
        # zero initial hidden state for every window
        h = Tensor(np.zeros((sequence.shape[0], self.config.gru_hidden)))
        for t in range(sequence.shape[1]):
            h = gru_cell_forward(sequence[:, t, :], h, params)
        return h

    def _project(self, hidden: Tensor) -> Tensor:
        return linear_forward(hidden, self._p("proj.weight"), self._p("proj.bias"))

    def encode(self, state: RawState, mode: str = "eval") -> Tensor:
        """
        Encode one state into a (F,) feature tensor.

        Raises:
            ConfigurationError: If the state's mode or window size does not match the config.
        """
        if state.mode != self.config.mode:
            raise ConfigurationError(
                f"{agent_label(self.config)} encoder expects {self.config.mode} states, got {state.mode}."
            )
        if state.mode == "windowed" and state.window_size != self.config.window_size:
            raise ConfigurationError(
                f"Encoder window is {self.config.window_size}, state window is {state.window_size}."
            )
        features = self.forward(state.values[None], mode)
        return reshape(features, (self.config.output_size,))
