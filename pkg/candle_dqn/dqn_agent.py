"""
Deep Q-learning decoder: replay memory, Q-network over encoder features,
epsilon-greedy behaviour, target network and the training loop.
"""
import logging
import math
import threading
from collections import deque
from dataclasses import asdict, dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from tqdm import tqdm

from .checkpoint_manager import CheckpointManager
from .data_modifier import DataModifier, RawState
from .encoders import Encoder, EncoderConfig, encoder_param_count, initialize, linear_specs
from .exceptions import CompatibilityError, ConfigurationError, DimensionError, NotEnoughSamplesError, NumericalError
from .neural_core import Tensor, backward, huber_loss, linear_forward, no_grad, relu, reshape, take
from .optimizer import AdamState, ParamSet, adam_step
from .trade_environment import Action

logger = logging.getLogger(__name__)

N_ACTIONS = len(Action)
EVICTION_POLICIES = ("random", "fifo")


@dataclass(frozen=True, eq=False)
class Experience:
    state: RawState
    action: Action
    reward: float
    next_state: RawState
    terminal: bool

    def __post_init__(self):
        if not math.isfinite(self.reward):
            raise NumericalError(f"Experience reward must be finite, got {self.reward}.")


class ReplayMemory:
    """
    Bounded experience store. Once full, ``random`` eviction overwrites a
    uniformly chosen slot and ``fifo`` overwrites the oldest one.
    """

    def __init__(self, capacity: int, eviction: str = "random"):
        if capacity < 1:
            raise ConfigurationError(f"Replay capacity must be >= 1, got {capacity}.")
        if eviction not in EVICTION_POLICIES:
            raise ConfigurationError(f"Unknown eviction policy '{eviction}'. Use one of {EVICTION_POLICIES}.")
        self.capacity = capacity
        self.eviction = eviction
        self.buffer: List[Experience] = []
        self._next_fifo = 0

    def __len__(self) -> int:
        return len(self.buffer)

    def store(self, experience: Experience, rng: np.random.Generator) -> int:
        """Insert ``experience`` and return the slot it landed in."""
        if len(self.buffer) < self.capacity:
            self.buffer.append(experience)
            return len(self.buffer) - 1
        if self.eviction == "random":
            slot = int(rng.integers(self.capacity))
        else:
            slot = self._next_fifo
            self._next_fifo = (self._next_fifo + 1) % self.capacity
        self.buffer[slot] = experience
        return slot

    def sample_indices(self, batch_size: int, rng: np.random.Generator) -> np.ndarray:
        if len(self.buffer) < batch_size:
            raise NotEnoughSamplesError(f"Replay memory holds {len(self.buffer)} experiences; batch needs {batch_size}.")
        return rng.integers(len(self.buffer), size=batch_size)

    def sample_batch(self, batch_size: int, rng: np.random.Generator) -> List[Experience]:
        """Draw ``batch_size`` experiences uniformly with replacement."""
        return [self.buffer[i] for i in self.sample_indices(batch_size, rng)]


class QNetwork:
    """Encoder followed by Linear(F, H) -> ReLU -> Linear(H, 3); outputs are ordered Buy, Sell, Noop."""

    def __init__(self, encoder_config: EncoderConfig, params: ParamSet, head_hidden: int = 128):
        self.encoder_config = encoder_config
        self.head_hidden = head_hidden
        self.params = params
        self.encoder = Encoder(encoder_config, params, prefix="encoder.")

    @staticmethod
    def head_specs(encoder_config: EncoderConfig, head_hidden: int):
        return linear_specs("head.l1.", encoder_config.output_size, head_hidden) + linear_specs(
            "head.l2.", head_hidden, N_ACTIONS
        )

    @classmethod
    def create(cls, encoder_config: EncoderConfig, rng: np.random.Generator, head_hidden: int = 128) -> "QNetwork":
        params = ParamSet()
        Encoder.create(encoder_config, rng, params, prefix="encoder.")
        initialize(params, cls.head_specs(encoder_config, head_hidden), rng)
        return cls(encoder_config, params, head_hidden)

    def forward(self, batch, mode: str = "eval") -> Tensor:
        """(B, 3) action values for a batch of state values."""
        features = self.encoder.forward(batch, mode)
        hidden = relu(linear_forward(features, self.params["head.l1.weight"], self.params["head.l1.bias"]))
        return linear_forward(hidden, self.params["head.l2.weight"], self.params["head.l2.bias"])

    def q_values(self, state: RawState, mode: str = "eval") -> Tensor:
        features = self.encoder.encode(state, mode)
        batch = reshape(features, (1, features.shape[0]))
        hidden = relu(linear_forward(batch, self.params["head.l1.weight"], self.params["head.l1.bias"]))
        return reshape(linear_forward(hidden, self.params["head.l2.weight"], self.params["head.l2.bias"]), (N_ACTIONS,))

    def clone(self) -> "QNetwork":
        return QNetwork(self.encoder_config, self.params.clone(), self.head_hidden)


def greedy_action(q: np.ndarray) -> Action:
    # np.argmax returns the first maximum, so ties resolve Buy < Sell < Noop
    return Action(int(np.argmax(q)))


def select_action(net: QNetwork, state: RawState, epsilon: float, rng: np.random.Generator) -> Action:
    """Uniform random action with probability ``epsilon``, else the eval-mode argmax."""
    if not 0.0 <= epsilon <= 1.0:
        raise ConfigurationError(f"epsilon must lie in [0, 1], got {epsilon}.")
    if rng.random() < epsilon:
        return Action(int(rng.integers(N_ACTIONS)))
    with no_grad():
        return greedy_action(net.q_values(state, "eval").values)


def greedy_policy(net: QNetwork, states: Sequence[RawState]) -> List[Action]:
    if len(states) == 0:
        return []
    with no_grad():
        q = net.forward(DataModifier.stack(states), "eval").values
    return [greedy_action(row) for row in q]


def compute_targets(batch: Sequence[Experience], target_net: QNetwork, gamma: float) -> Tensor:
    """
    Bellman targets y = r for terminal transitions, r + gamma * max_a Q'(s', a)
    otherwise. Q' is the target network in eval mode; the result is detached.
    """
    rewards = np.array([e.reward for e in batch], dtype=np.float64)
    terminal = np.array([e.terminal for e in batch], dtype=bool)
    with no_grad():
        next_q = target_net.forward(DataModifier.stack([e.next_state for e in batch]), "eval").values
    return Tensor(rewards + gamma * np.where(terminal, 0.0, next_q.max(axis=1)))


@dataclass
class TrainConfig:
    episodes: int = 50
    gamma: float = 0.9
    epsilon_start: float = 0.9
    epsilon_end: float = 0.05
    epsilon_decay: float = 1000.0
    batch_size: int = 10
    replay_capacity: int = 20
    target_sync: int = 500
    learning_rate: float = 1e-4
    head_hidden: int = 128
    eviction: str = "random"
    seed: int = 0

    def __post_init__(self):
        problems = self.problems()
        if problems:
            raise ConfigurationError("; ".join(problems))

    def problems(self, prefix: str = "train.") -> List[str]:
        problems = []
        if self.episodes < 0:
            problems.append(f"{prefix}episodes: must be >= 0, got {self.episodes}")
        if not 0.0 <= self.gamma <= 1.0:
            problems.append(f"{prefix}gamma: must lie in [0, 1], got {self.gamma}")
        for name in ("epsilon_start", "epsilon_end"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                problems.append(f"{prefix}{name}: must lie in [0, 1], got {getattr(self, name)}")
        if self.epsilon_decay <= 0:
            problems.append(f"{prefix}epsilon_decay: must be > 0, got {self.epsilon_decay}")
        for name in ("batch_size", "replay_capacity", "target_sync", "head_hidden"):
            if getattr(self, name) < 1:
                problems.append(f"{prefix}{name}: must be >= 1, got {getattr(self, name)}")
        if self.batch_size > self.replay_capacity:
            problems.append(f"{prefix}batch_size: must be <= {prefix}replay_capacity ({self.replay_capacity})")
        if self.learning_rate <= 0:
            problems.append(f"{prefix}learning_rate: must be > 0, got {self.learning_rate}")
        if self.eviction not in EVICTION_POLICIES:
            problems.append(f"{prefix}eviction: unknown policy '{self.eviction}', use one of {EVICTION_POLICIES}")
        return problems

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class EpsilonSchedule:
    start: float = 0.9
    end: float = 0.05
    decay: float = 1000.0

    def __call__(self, step: int) -> float:
        return self.end + (self.start - self.end) * math.exp(-step / self.decay)


def optimize_step(policy_net: QNetwork, target_net: QNetwork, memory: ReplayMemory, cfg: TrainConfig,
                  adam: AdamState, rng: np.random.Generator) -> Optional[float]:
    """
    One Adam step on the Huber loss between Q(s, a) and the Bellman targets.

    Returns:
        The loss, or None when the memory holds fewer than ``cfg.batch_size`` experiences.
    """
    try:
        batch = memory.sample_batch(cfg.batch_size, rng)
    except NotEnoughSamplesError:
        return None
    targets = compute_targets(batch, target_net, cfg.gamma)
    actions = np.array([int(e.action) for e in batch])
    q_all = policy_net.forward(DataModifier.stack([e.state for e in batch]), "train")
    q = take(q_all, (np.arange(len(batch)), actions))
    loss = huber_loss(q, targets)
    backward(loss)
    adam_step(policy_net.params, adam)
    return loss.item()


def sync_target(policy_net: QNetwork, target_net: QNetwork):
    """Copy policy parameters and buffers into the target network in place."""
    target_net.params.copy_from(policy_net.params)


@dataclass(frozen=True)
class EpisodeRecord:
    episode: int
    steps: int
    epsilon: float
    cum_reward: float
    mean_loss: float

    def csv_line(self) -> str:
        return f"{self.episode},{self.steps},{self.epsilon!r},{self.cum_reward!r},{self.mean_loss!r}"


LOG_COLUMNS = ["episode", "steps", "epsilon", "cum_reward", "mean_loss"]


@dataclass
class TrainingLog:
    records: List[EpisodeRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def append(self, record: EpisodeRecord):
        self.records.append(record)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([asdict(r) for r in self.records], columns=LOG_COLUMNS)

    def to_csv(self) -> str:
        return "\n".join([",".join(LOG_COLUMNS)] + [r.csv_line() for r in self.records]) + "\n"


class LogChannel:
    """
    Bounded queue of log lines between the training loop and a reporter
    thread. ``send`` never blocks; when full the oldest queued line is dropped.
    """

    def __init__(self, maxsize: int = 256):
        self._lines = deque(maxlen=maxsize)
        self._condition = threading.Condition()
        self._closed = False
        self.dropped = 0

    def send(self, line: str):
        with self._condition:
            if len(self._lines) == self._lines.maxlen:
                self.dropped += 1
            self._lines.append(line)
            self._condition.notify()

    def close(self):
        with self._condition:
            self._closed = True
            self._condition.notify_all()

    def receive(self, timeout: Optional[float] = None) -> Optional[str]:
        """Next line, or None once the channel is closed and drained (or on timeout)."""
        with self._condition:
            self._condition.wait_for(lambda: self._lines or self._closed, timeout)
            return self._lines.popleft() if self._lines else None


def start_reporter(channel: LogChannel, sink: Callable[[str], None]) -> threading.Thread:
    def run():
        while True:
            line = channel.receive()
            if line is None:
                return
            sink(line)

    thread = threading.Thread(target=run, name="training-reporter", daemon=True)
    thread.start()
    return thread


class DQNAgent:
    """Policy and target networks with their optimizer state and configs."""

    def __init__(self, policy: QNetwork, target: QNetwork, adam: AdamState, train_config: TrainConfig):
        self.policy = policy
        self.target = target
        self.adam = adam
        self.train_config = train_config

    @classmethod
    def create(cls, encoder_config: EncoderConfig, train_config: TrainConfig,
               rng: Optional[np.random.Generator] = None) -> "DQNAgent":
        rng = np.random.default_rng(train_config.seed) if rng is None else rng
        policy = QNetwork.create(encoder_config, rng, train_config.head_hidden)
        adam = AdamState.for_params(policy.params, learning_rate=train_config.learning_rate)
        return cls(policy, policy.clone(), adam, train_config)

    @property
    def encoder_config(self) -> EncoderConfig:
        return self.policy.encoder_config

    def train(self, env, rng: Optional[np.random.Generator] = None, progress: bool = False,
              channel: Optional[LogChannel] = None) -> TrainingLog:
        """
        Runs ``episodes`` full passes over ``env``. One optimization step follows
        every environment step once the memory holds a batch; the target network
        is synced every ``target_sync`` optimization steps.
        """
        cfg = self.train_config
        rng = np.random.default_rng(cfg.seed) if rng is None else rng
        memory = ReplayMemory(cfg.replay_capacity, cfg.eviction)
        schedule = EpsilonSchedule(cfg.epsilon_start, cfg.epsilon_end, cfg.epsilon_decay)
        log = TrainingLog()
        total_steps = 0

        for episode in tqdm(range(cfg.episodes), desc="episodes", disable=not progress):
            state, observation = env.reset()
            done = False
            cum_reward, losses, steps = 0.0, [], 0
            epsilon = schedule(total_steps)
            while not done:
                epsilon = schedule(total_steps)
                action = select_action(self.policy, observation, epsilon, rng)
                next_state, reward, done = env.step(state, action)
                next_observation = env.observation(next_state)
                memory.store(Experience(observation, action, reward, next_observation, done), rng)

                loss = optimize_step(self.policy, self.target, memory, cfg, self.adam, rng)
                if loss is not None:
                    losses.append(loss)
                    if self.policy.params.step_count % cfg.target_sync == 0:
                        sync_target(self.policy, self.target)
                        logger.debug("Target network synced at optimization step %d", self.policy.params.step_count)

                state, observation = next_state, next_observation
                cum_reward += reward
                steps += 1
                total_steps += 1

            record = EpisodeRecord(episode, steps, epsilon, cum_reward, float(np.mean(losses)) if losses else float("nan"))
            log.append(record)
            logger.info("Episode %d: %d steps, epsilon %.4f, reward %.4f, mean loss %.6f",
                        episode, steps, epsilon, cum_reward, record.mean_loss)
            if channel is not None:
                channel.send(record.csv_line())
        return log

    def checkpoint_arrays(self) -> dict:
        arrays = self.policy.params.to_arrays("policy/")
        arrays.update(self.target.params.to_arrays("target/"))
        arrays.update(self.adam.to_arrays("adam/"))
        return arrays

    def checkpoint_metadata(self) -> dict:
        return {
            "encoder": self.encoder_config.to_dict(),
            "train": self.train_config.to_dict(),
            "head_hidden": self.policy.head_hidden,
            "encoder_param_count": encoder_param_count(self.encoder_config),
            "policy_step_count": self.policy.params.step_count,
            "target_step_count": self.target.params.step_count,
            "adam": self.adam.hyperparameters(),
        }

    def save(self, path: str, manager: Optional[CheckpointManager] = None) -> str:
        manager = manager or CheckpointManager()
        return manager.save(path, self.checkpoint_arrays(), self.checkpoint_metadata())

    @classmethod
    def load(cls, path: str, encoder_config: Optional[EncoderConfig] = None,
             manager: Optional[CheckpointManager] = None) -> "DQNAgent":
        """
        Restore an agent. When ``encoder_config`` is given, the checkpoint must
        hold parameters of exactly the shapes that config implies.

        Raises:
            CompatibilityError: If the stored parameters do not fit the config.
        """
        manager = manager or CheckpointManager()
        arrays, metadata = manager.load(path)
        try:
            stored_config = EncoderConfig(**metadata["encoder"])
            train_config = TrainConfig(**metadata["train"])
        except (KeyError, TypeError) as e:
            raise CompatibilityError(f"Checkpoint '{path}' lacks a usable config block: {e}") from e

        config = encoder_config or stored_config
        agent = cls.create(config, train_config, np.random.default_rng(0))
        try:
            agent.policy.params.load_arrays(arrays, "policy/")
            agent.target.params.load_arrays(arrays, "target/")
        except DimensionError as e:
            raise CompatibilityError(
                f"Checkpoint '{path}' was written for {stored_config.kind}/{stored_config.mode} "
                f"(window {stored_config.window_size}) and does not fit this encoder: {e}"
            ) from e
        agent.adam.load_arrays(arrays, "adam/")
        agent.policy.params.step_count = int(metadata.get("policy_step_count", 0))
        agent.target.params.step_count = int(metadata.get("target_step_count", 0))
        return agent


def train(env, encoder_config: EncoderConfig, cfg: TrainConfig, progress: bool = False,
          channel: Optional[LogChannel] = None) -> Tuple[QNetwork, TrainingLog]:
    """Train a fresh agent on ``env``; deterministic given ``cfg.seed``."""
    rng = np.random.default_rng(cfg.seed)
    agent = DQNAgent.create(encoder_config, cfg, rng)
    log = agent.train(env, rng, progress, channel)
    return agent.policy, log
