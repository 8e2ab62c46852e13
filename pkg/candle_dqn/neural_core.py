"""
Dense tensors with reverse-mode automatic differentiation.

Every operation records a backward closure on its output when any input
requires a gradient. ``backward`` walks the recorded graph from a scalar loss
and accumulates gradients into the leaf tensors; it never clears them, the
optimizer step does.
"""
import contextlib
import threading
from typing import Mapping, NamedTuple, Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from .exceptions import (
    DegenerateBatchError,
    DimensionError,
    EmptyInputError,
    InsufficientLengthError,
    NumericalError,
    RankError,
)

BN_MOMENTUM = 0.1
BN_EPSILON = 1e-5

_grad_state = threading.local()


def is_grad_enabled() -> bool:
    return getattr(_grad_state, "enabled", True)


@contextlib.contextmanager
def no_grad():
    """Disable graph recording on the current thread."""
    previous = is_grad_enabled()
    _grad_state.enabled = False
    try:
        yield
    finally:
        _grad_state.enabled = previous


class Tensor:
    """A dense float64 array that can take part in the autodiff graph."""

    __slots__ = ("values", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, values, requires_grad: bool = False, copy: bool = True):
        array = np.array(values, dtype=np.float64) if copy else np.asarray(values, dtype=np.float64)
        self.values = array
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self._parents: tuple = ()
        self._backward = None

    @property
    def shape(self) -> tuple:
        return self.values.shape

    @property
    def ndim(self) -> int:
        return self.values.ndim

    @property
    def size(self) -> int:
        return self.values.size

    def item(self) -> float:
        return float(self.values.reshape(-1)[0])

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # operators
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return take(self, index)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes if axes else None)

    def sum(self, axis=None, keepdims: bool = False):
        return tensor_sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return tensor_mean(self, axis, keepdims)


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _node(values, parents: Sequence[Tensor], backward) -> Tensor:
    out = Tensor(values, copy=False)
    if is_grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# elementwise and structural ops

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(grad):
        return _unbroadcast(grad, a.shape), _unbroadcast(grad, b.shape)

    return _node(a.values + b.values, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(grad):
        return _unbroadcast(grad, a.shape), _unbroadcast(-grad, b.shape)

    return _node(a.values - b.values, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(grad):
        return _unbroadcast(grad * b.values, a.shape), _unbroadcast(grad * a.values, b.shape)

    return _node(a.values * b.values, (a, b), backward)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(
            f"matmul inner dimensions disagree: left axis 1 has {a.shape[1]}, right axis 0 has {b.shape[0]}"
        )

    def backward(grad):
        return grad @ b.values.T, a.values.T @ grad

    return _node(a.values @ b.values, (a, b), backward)


def take(x: Tensor, index) -> Tensor:
    def backward(grad):
        full = np.zeros_like(x.values)
        np.add.at(full, index, grad)
        return (full,)

    return _node(x.values[index], (x,), backward)


def reshape(x: Tensor, shape) -> Tensor:
    original = x.shape

    def backward(grad):
        return (grad.reshape(original),)

    return _node(x.values.reshape(shape), (x,), backward)


def transpose(x: Tensor, axes=None) -> Tensor:
    axes = tuple(reversed(range(x.ndim))) if axes is None else tuple(axes)
    inverse = tuple(np.argsort(axes))

    def backward(grad):
        return (grad.transpose(inverse),)

    return _node(x.values.transpose(axes), (x,), backward)


def tensor_sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    def backward(grad):
        if axis is not None and not keepdims:
            grad = np.expand_dims(grad, axis)
        return (np.broadcast_to(grad, x.shape).copy(),)

    return _node(x.values.sum(axis=axis, keepdims=keepdims), (x,), backward)


def tensor_mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    count = x.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return mul(tensor_sum(x, axis, keepdims), 1.0 / count)


def relu(x: Tensor) -> Tensor:
    # subgradient at 0 is 0
    mask = x.values > 0

    def backward(grad):
        return (grad * mask,)

    return _node(np.where(mask, x.values, 0.0), (x,), backward)


def sigmoid(x: Tensor) -> Tensor:
    s = expit(x.values)

    def backward(grad):
        return (grad * s * (1.0 - s),)

    return _node(s, (x,), backward)


def tanh(x: Tensor) -> Tensor:
    t = np.tanh(x.values)

    def backward(grad):
        return (grad * (1.0 - t * t),)

    return _node(t, (x,), backward)


# reverse pass

def _topological_order(root: Tensor) -> list:
    order, visited = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))
    return order


def backward(loss: Tensor):
    """
    Accumulate d(loss)/d(leaf) into ``grad`` of every reachable leaf that
    requires a gradient. Calling twice without zeroing adds the gradients.

    Raises:
        RankError: If ``loss`` is not a scalar.
        NumericalError: If the loss or a resulting gradient is not finite.
    """
    if loss.size != 1:
        raise RankError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not np.isfinite(loss.values).all():
        raise NumericalError("loss is not finite")
    if not loss.requires_grad:
        return

    order = _topological_order(loss)
    pending = {id(loss): np.ones_like(loss.values)}
    leaves = []
    for node in reversed(order):
        grad = pending.pop(id(node), None)
        if grad is None:
            continue
        if node._backward is None:
            node.grad = grad.copy() if node.grad is None else node.grad + grad
            leaves.append(node)
            continue
        for parent, parent_grad in zip(node._parents, node._backward(grad)):
            if parent_grad is None or not parent.requires_grad:
                continue
            key = id(parent)
            pending[key] = pending[key] + parent_grad if key in pending else parent_grad
    if loss._backward is not None:
        loss.grad = np.ones_like(loss.values)

    for leaf in leaves:
        if not np.isfinite(leaf.grad).all():
            raise NumericalError(f"non-finite gradient on leaf of shape {leaf.shape}")


# layer kernels

def linear_forward(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """y = xW + b for x of shape (batch, in), W (in, out), b (out)."""
    if x.ndim != 2:
        raise DimensionError(f"linear input must be (batch, in), got {x.shape}")
    if weight.ndim != 2 or bias.ndim != 1:
        raise DimensionError(f"linear weight must be 2-D and bias 1-D, got {weight.shape} and {bias.shape}")
    if x.shape[1] != weight.shape[0]:
        raise DimensionError(f"linear input axis 1 ({x.shape[1]}) != weight axis 0 ({weight.shape[0]})")
    if bias.shape[0] != weight.shape[1]:
        raise DimensionError(f"linear bias axis 0 ({bias.shape[0]}) != weight axis 1 ({weight.shape[1]})")

    def backward(grad):
        return grad @ weight.values.T, x.values.T @ grad, grad.sum(axis=0)

    return _node(x.values @ weight.values + bias.values, (x, weight, bias), backward)


class RunningStats(NamedTuple):
    mean: np.ndarray
    var: np.ndarray


def batchnorm_forward(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running: RunningStats,
    mode: str = "train",
    momentum: float = BN_MOMENTUM,
    eps: float = BN_EPSILON,
) -> Tensor:
    """
    Batch normalization over axis 0 of a (batch, features) input.

    Train mode normalizes with the biased batch variance and updates
    ``running`` in place (unbiased variance, fixed momentum). Eval mode uses
    ``running`` only, so a row's output does not depend on its batch.
    """
    if x.ndim != 2 or x.shape[1] != gamma.shape[0] or gamma.shape != beta.shape:
        raise DimensionError(
            f"batchnorm expects (batch, {gamma.shape[0]}) input with matching gamma/beta, got {x.shape}"
        )
    xv = x.values
    if mode == "train":
        n = xv.shape[0]
        if n < 2:
            raise DegenerateBatchError(f"batchnorm in train mode needs batch >= 2, got {n}")
        mu = xv.mean(axis=0)
        var = xv.var(axis=0)
        inv_std = 1.0 / np.sqrt(var + eps)
        x_hat = (xv - mu) * inv_std
        running.mean[...] = (1.0 - momentum) * running.mean + momentum * mu
        running.var[...] = (1.0 - momentum) * running.var + momentum * var * n / (n - 1)

        def backward(grad):
            d_hat = grad * gamma.values
            dx = inv_std / n * (n * d_hat - d_hat.sum(axis=0) - x_hat * (d_hat * x_hat).sum(axis=0))
            return dx, (grad * x_hat).sum(axis=0), grad.sum(axis=0)
    elif mode == "eval":
        inv_std = 1.0 / np.sqrt(running.var + eps)
        x_hat = (xv - running.mean) * inv_std

        def backward(grad):
            return grad * gamma.values * inv_std, (grad * x_hat).sum(axis=0), grad.sum(axis=0)
    else:
        raise ValueError(f"Unknown batchnorm mode '{mode}'. Use 'train' or 'eval'.")

    return _node(gamma.values * x_hat + beta.values, (x, gamma, beta), backward)


def conv1d_forward(x: Tensor, kernels: Tensor, bias: Tensor) -> Tensor:
    """
    Valid cross-correlation along the last (time) axis.

    ``x`` is (channels, time) or (batch, channels, time); ``kernels`` is
    (out_ch, in_ch, k). The output time length is time - k + 1.
    """
    if kernels.ndim != 3 or bias.shape != (kernels.shape[0],):
        raise DimensionError(
            f"conv1d kernels must be (out_ch, in_ch, k) with bias (out_ch,), got {kernels.shape} and {bias.shape}"
        )
    if x.ndim not in (2, 3):
        raise DimensionError(f"conv1d input must be (channels, time) or (batch, channels, time), got {x.shape}")
    squeeze = x.ndim == 2
    xv = x.values[None] if squeeze else x.values
    out_ch, in_ch, k = kernels.shape
    if xv.shape[1] != in_ch:
        raise DimensionError(f"conv1d input channel axis has {xv.shape[1]}, kernels expect {in_ch}")
    length = xv.shape[2]
    if length < k:
        raise InsufficientLengthError(f"conv1d window of length {length} is shorter than kernel size {k}")

    out_len = length - k + 1
    windows = sliding_window_view(xv, k, axis=2)
    out = np.einsum("bctj,ocj->bot", windows, kernels.values) + bias.values[None, :, None]

    def backward(grad):
        g = grad[None] if squeeze else grad
        d_kernels = np.einsum("bot,bctj->ocj", g, windows)
        d_bias = g.sum(axis=(0, 2))
        dx = np.zeros_like(xv)
        for j in range(k):
            dx[:, :, j:j + out_len] += np.einsum("bot,oc->bct", g, kernels.values[:, :, j])
        return (dx[0] if squeeze else dx), d_kernels, d_bias

    return _node(out[0] if squeeze else out, (x, kernels, bias), backward)


GRU_WEIGHTS = ("w_ir", "w_iz", "w_in", "w_hr", "w_hz", "w_hn")
GRU_BIASES = ("b_ir", "b_iz", "b_in", "b_hr", "b_hz", "b_hn")


def gru_param_shapes(input_size: int, hidden_size: int) -> dict:
    shapes = {}
    for name in GRU_WEIGHTS:
        shapes[name] = (input_size if name.startswith("w_i") else hidden_size, hidden_size)
    for name in GRU_BIASES:
        shapes[name] = (hidden_size,)
    return shapes


def gru_cell_forward(x_t: Tensor, h_prev: Tensor, params: Mapping[str, Tensor]) -> Tensor:
    """
    One GRU step:

        r = sigmoid(x W_ir + b_ir + h W_hr + b_hr)
        z = sigmoid(x W_iz + b_iz + h W_hz + b_hz)
        n = tanh(x W_in + b_in + r * (h W_hn + b_hn))
        h' = (1 - z) * n + z * h

    Inputs are (in,) / (hidden,) or batched (batch, in) / (batch, hidden).
    """
    squeeze = x_t.ndim == 1
    if squeeze != (h_prev.ndim == 1):
        raise DimensionError(f"gru input {x_t.shape} and hidden {h_prev.shape} must both be batched or not")
    hidden_size = params["w_hr"].shape[1]
    input_size = params["w_ir"].shape[0]
    if x_t.shape[-1] != input_size or h_prev.shape[-1] != hidden_size:
        raise DimensionError(
            f"gru expects input size {input_size} and hidden size {hidden_size}, "
            f"got {x_t.shape[-1]} and {h_prev.shape[-1]}"
        )
    x = reshape(x_t, (1, input_size)) if squeeze else x_t
    h = reshape(h_prev, (1, hidden_size)) if squeeze else h_prev
    if x.shape[0] != h.shape[0]:
        raise DimensionError(f"gru batch axis disagrees: input {x.shape[0]}, hidden {h.shape[0]}")

    r = sigmoid(linear_forward(x, params["w_ir"], params["b_ir"]) + linear_forward(h, params["w_hr"], params["b_hr"]))
    z = sigmoid(linear_forward(x, params["w_iz"], params["b_iz"]) + linear_forward(h, params["w_hz"], params["b_hz"]))
    n = tanh(
        linear_forward(x, params["w_in"], params["b_in"])
        + r * linear_forward(h, params["w_hn"], params["b_hn"])
    )
    h_new = (1.0 - z) * n + z * h
    return reshape(h_new, (hidden_size,)) if squeeze else h_new


def huber_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Mean over the batch of 0.5 e^2 for |e| <= 1 and |e| - 0.5 otherwise."""
    if pred.shape != target.shape:
        raise DimensionError(f"huber_loss shapes differ: pred {pred.shape}, target {target.shape}")
    if pred.size == 0:
        raise EmptyInputError("huber_loss received an empty batch")
    error = pred.values - target.values
    magnitude = np.abs(error)
    elementwise = np.where(magnitude <= 1.0, 0.5 * error * error, magnitude - 0.5)
    count = error.size

    def backward(grad):
        d_error = grad * np.clip(error, -1.0, 1.0) / count
        return d_error, -d_error

    return _node(np.asarray(elementwise.mean()), (pred, target), backward)
