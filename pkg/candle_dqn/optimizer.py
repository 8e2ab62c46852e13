from dataclasses import dataclass, field
from typing import Dict, Iterator, Tuple

import numpy as np

from .exceptions import CandleDQNError, ConfigurationError, DimensionError, UnpopulatedGradientError
from .neural_core import Tensor


class ParamSet:
    """
    Named learnable tensors plus named non-learnable buffers (batch-norm
    running statistics) and the optimizer step counter.

    Two ParamSets with the same names and shapes are sync-compatible.
    """

    def __init__(self):
        self.tensors: Dict[str, Tensor] = {}
        self.buffers: Dict[str, np.ndarray] = {}
        self.step_count = 0

    def add(self, name: str, values) -> Tensor:
        if name in self.tensors or name in self.buffers:
            raise CandleDQNError(f"Parameter name '{name}' is already registered.")
        param = Tensor(values, requires_grad=True)
        self.tensors[name] = param
        return param

    def add_buffer(self, name: str, values) -> np.ndarray:
        if name in self.tensors or name in self.buffers:
            raise CandleDQNError(f"Buffer name '{name}' is already registered.")
        buffer = np.array(values, dtype=np.float64)
        self.buffers[name] = buffer
        return buffer

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self.tensors

    def __iter__(self) -> Iterator[Tuple[str, Tensor]]:
        return iter(self.tensors.items())

    def __len__(self) -> int:
        return len(self.tensors)

    def num_scalars(self) -> int:
        return int(sum(t.size for t in self.tensors.values()))

    def zero_grad(self):
        for param in self.tensors.values():
            param.grad = np.zeros_like(param.values)

    def shapes(self) -> Dict[str, tuple]:
        shapes = {name: t.shape for name, t in self.tensors.items()}
        shapes.update({f"buffer:{name}": b.shape for name, b in self.buffers.items()})
        return shapes

    def mismatches(self, other: "ParamSet") -> list:
        mine, theirs = self.shapes(), other.shapes()
        problems = []
        for name in sorted(set(mine) | set(theirs)):
            if mine.get(name) != theirs.get(name):
                problems.append(f"{name}: {mine.get(name)} vs {theirs.get(name)}")
        return problems

    def is_sync_compatible(self, other: "ParamSet") -> bool:
        return not self.mismatches(other)

    def copy_from(self, other: "ParamSet"):
        """Overwrite values and buffers in place with a deep copy of ``other``'s."""
        problems = self.mismatches(other)
        if problems:
            raise DimensionError("ParamSets are not sync-compatible: " + "; ".join(problems))
        for name, param in self.tensors.items():
            param.values[...] = other.tensors[name].values
        for name, buffer in self.buffers.items():
            buffer[...] = other.buffers[name]

    def clone(self) -> "ParamSet":
        copy = ParamSet()
        for name, param in self.tensors.items():
            copy.add(name, param.values)
        for name, buffer in self.buffers.items():
            copy.add_buffer(name, buffer)
        copy.step_count = self.step_count
        return copy

    def to_arrays(self, prefix: str = "") -> Dict[str, np.ndarray]:
        arrays = {f"{prefix}param/{name}": t.values for name, t in self.tensors.items()}
        arrays.update({f"{prefix}buffer/{name}": b for name, b in self.buffers.items()})
        return arrays

    def load_arrays(self, arrays: Dict[str, np.ndarray], prefix: str = ""):
        problems = []
        for kind, store in (("param", {n: t.values for n, t in self.tensors.items()}), ("buffer", self.buffers)):
            for name, target in store.items():
                key = f"{prefix}{kind}/{name}"
                if key not in arrays:
                    problems.append(f"{key}: missing")
                elif arrays[key].shape != target.shape:
                    problems.append(f"{key}: expected {target.shape}, found {arrays[key].shape}")
        if problems:
            raise DimensionError("Stored parameters do not fit: " + "; ".join(problems))
        for name, param in self.tensors.items():
            param.values[...] = arrays[f"{prefix}param/{name}"]
        for name, buffer in self.buffers.items():
            buffer[...] = arrays[f"{prefix}buffer/{name}"]


@dataclass
class AdamState:
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    first_moment: Dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        for name in ("learning_rate", "beta1", "beta2", "eps"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"Adam hyperparameter '{name}' must be strictly positive.")
        if self.beta1 >= 1 or self.beta2 >= 1:
            raise ConfigurationError("Adam betas must be below 1.")

    @classmethod
    def for_params(cls, params: ParamSet, learning_rate: float = 1e-4, beta1: float = 0.9,
                   beta2: float = 0.999, eps: float = 1e-8) -> "AdamState":
        state = cls(learning_rate, beta1, beta2, eps)
        for name, param in params:
            state.first_moment[name] = np.zeros_like(param.values)
            state.second_moment[name] = np.zeros_like(param.values)
        return state

    def to_arrays(self, prefix: str = "adam/") -> Dict[str, np.ndarray]:
        arrays = {f"{prefix}m/{name}": m for name, m in self.first_moment.items()}
        arrays.update({f"{prefix}v/{name}": v for name, v in self.second_moment.items()})
        return arrays

    def load_arrays(self, arrays: Dict[str, np.ndarray], prefix: str = "adam/"):
        for name in self.first_moment:
            self.first_moment[name] = np.array(arrays[f"{prefix}m/{name}"])
            self.second_moment[name] = np.array(arrays[f"{prefix}v/{name}"])

    def hyperparameters(self) -> dict:
        return {"learning_rate": self.learning_rate, "beta1": self.beta1, "beta2": self.beta2, "eps": self.eps}


def adam_step(params: ParamSet, state: AdamState) -> ParamSet:
    """
    Apply one bias-corrected Adam update to every parameter, then zero the
    gradients and increment ``params.step_count``.

    Raises:
        UnpopulatedGradientError: If a parameter has no gradient.
    """
    names = list(params.tensors)
    for name in names:
        if params[name].grad is None:
            raise UnpopulatedGradientError(f"Parameter '{name}' has no gradient; run backward first.")

    params.step_count += 1
    t = params.step_count
    correction1 = 1.0 - state.beta1 ** t
    correction2 = 1.0 - state.beta2 ** t
    for name in names:
        param = params[name]
        grad = param.grad
        m = state.first_moment.setdefault(name, np.zeros_like(param.values))
        v = state.second_moment.setdefault(name, np.zeros_like(param.values))
        m *= state.beta1
        m += (1.0 - state.beta1) * grad
        v *= state.beta2
        v += (1.0 - state.beta2) * grad * grad
        param.values -= state.learning_rate * (m / correction1) / (np.sqrt(v / correction2) + state.eps)
        param.grad = np.zeros_like(param.values)
    return params
