"""Small dense feedforward networks with hand-written backprop.

Weights are stored as ``(fan_in, fan_out)`` matrices so a layer computes
``X @ W + b`` on a row-major batch. Everything runs in float64.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import List, Sequence

import numpy as np

from .errors import ConfigurationError, NumericError, UsageError

PROB_EPS = 1e-7


class Activation(str, Enum):
    RELU = "relu"
    SIGMOID = "sigmoid"
    IDENTITY = "identity"


@dataclass(frozen=True)
class LayerSpec:
    input_dim: int
    output_dim: int
    activation: Activation = Activation.IDENTITY

    def __post_init__(self):
        if self.input_dim < 1 or self.output_dim < 1:
            raise ConfigurationError(f"layer dims must be >= 1, got {self.input_dim}->{self.output_dim}")
        object.__setattr__(self, "activation", Activation(self.activation))


@dataclass
class DenseNetwork:
    layers: List[LayerSpec]
    weights: List[np.ndarray]
    biases: List[np.ndarray]

    @property
    def input_dim(self) -> int:
        return self.layers[0].input_dim

    @property
    def output_dim(self) -> int:
        return self.layers[-1].output_dim

    def copy(self) -> "DenseNetwork":
        return DenseNetwork(list(self.layers), [w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def parameters(self) -> List[np.ndarray]:
        """Parameter arrays in (W0, b0, W1, b1, ...) order, by reference."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def flat_parameters(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.parameters()])

    def checksum(self) -> bytes:
        return self.flat_parameters().tobytes()

    def __call__(self, inputs) -> np.ndarray:
        return forward(self, inputs)[0]


@dataclass
class GradientSet:
    weights: List[np.ndarray]
    biases: List[np.ndarray]
    # gradient wrt the network input, needed to chain g into f
    inputs: np.ndarray | None = None

    def parameters(self) -> List[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out


@dataclass
class Trace:
    inputs: List[np.ndarray] = field(default_factory=list)
    pre: List[np.ndarray] = field(default_factory=list)
    post: List[np.ndarray] = field(default_factory=list)

    @property
    def batch_size(self) -> int:
        return self.inputs[0].shape[0]


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def _check_chain(specs: Sequence[LayerSpec]):
    if not specs:
        raise ConfigurationError("a network needs at least one layer")
    for i, (a, b) in enumerate(zip(specs[:-1], specs[1:])):
        if a.output_dim != b.input_dim:
            raise ConfigurationError(
                f"layer {i} outputs {a.output_dim} features but layer {i + 1} expects {b.input_dim}"
            )


def init_network(specs: Sequence[LayerSpec], rng: np.random.Generator) -> DenseNetwork:
    specs = list(specs)
    _check_chain(specs)
    weights, biases = [], []
    for spec in specs:
        bound = np.sqrt(6.0 / (spec.input_dim + spec.output_dim))
        weights.append(rng.uniform(-bound, bound, size=(spec.input_dim, spec.output_dim)))
        biases.append(np.zeros(spec.output_dim))
    return DenseNetwork(specs, weights, biases)


def mlp(input_dim: int, hidden: Sequence[int], output_activation, rng, output_dim: int = 1) -> DenseNetwork:
    """ReLU hidden layers followed by one output layer."""
    dims = [input_dim, *hidden]
    specs = [LayerSpec(a, b, Activation.RELU) for a, b in zip(dims[:-1], dims[1:])]
    specs.append(LayerSpec(dims[-1], output_dim, Activation(output_activation)))
    return init_network(specs, rng)


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _activate(z, act):
    if act is Activation.RELU:
        return np.maximum(z, 0.0)
    if act is Activation.SIGMOID:
        return sigmoid(z)
    return z


def forward(net: DenseNetwork, batch_inputs) -> tuple[np.ndarray, Trace]:
    x = np.asarray(batch_inputs, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[1] != net.input_dim:
        raise UsageError(f"network expects {net.input_dim} input columns, got {x.shape[1]}")
    if not np.all(np.isfinite(x)):
        raise NumericError("non-finite network input")
    trace = Trace()
    a = x
    for spec, w, b in zip(net.layers, net.weights, net.biases):
        trace.inputs.append(a)
        z = a @ w + b
        a = _activate(z, spec.activation)
        trace.pre.append(z)
        trace.post.append(a)
    return a, trace


def backward(net: DenseNetwork, trace: Trace, output_grads) -> GradientSet:
    """Reverse-mode gradients of a scalar whose d/d(outputs) is ``output_grads``."""
    delta = np.asarray(output_grads, dtype=np.float64)
    if delta.ndim == 1:
        delta = delta[:, None]
    if len(trace.inputs) != len(net.layers):
        raise UsageError("trace was not produced by this network")
    if delta.shape != trace.post[-1].shape:
        raise UsageError(f"output_grads shape {delta.shape} does not match outputs {trace.post[-1].shape}")
    n = len(net.layers)
    gw: List[np.ndarray] = [None] * n
    gb: List[np.ndarray] = [None] * n
    for i in range(n - 1, -1, -1):
        act = net.layers[i].activation
        if act is Activation.RELU:
            delta = delta * (trace.pre[i] > 0)
        elif act is Activation.SIGMOID:
            s = trace.post[i]
            delta = delta * s * (1.0 - s)
        gw[i] = trace.inputs[i].T @ delta
        gb[i] = delta.sum(axis=0)
        delta = delta @ net.weights[i].T
    return GradientSet(gw, gb, delta)


def sgd_step(net: DenseNetwork, grads: GradientSet, learning_rate: float) -> DenseNetwork:
    """In-place plain SGD update; returns ``net`` for chaining."""
    if learning_rate < 0:
        raise UsageError("learning_rate must be non-negative")
    params, gparams = net.parameters(), grads.parameters()
    if len(params) != len(gparams) or any(p.shape != g.shape for p, g in zip(params, gparams)):
        raise UsageError("gradient shapes do not match the network")
    if not all(np.all(np.isfinite(g)) for g in gparams):
        raise NumericError("non-finite gradient, update refused")
    if learning_rate == 0:
        return net
    updated = [p - learning_rate * g for p, g in zip(params, gparams)]
    if not all(np.all(np.isfinite(u)) for u in updated):
        raise NumericError("update would produce non-finite parameters")
    for p, u in zip(params, updated):
        p[...] = u
    return net


def binary_cross_entropy(preds, targets, sample_weights=None):
    """Weighted mean log loss.

    Returns ``(loss, per_sample, grad)`` where ``grad`` is d(loss)/d(preds)
    of the weighted mean. Predictions are clamped to
    ``[PROB_EPS, 1 - PROB_EPS]`` first; the gradient is zero where the
    clamp is active.
    """
    p_raw = np.asarray(preds, dtype=np.float64).ravel()
    t = np.asarray(targets, dtype=np.float64).ravel()
    if p_raw.shape != t.shape:
        raise UsageError(f"{p_raw.size} predictions vs {t.size} targets")
    p = np.clip(p_raw, PROB_EPS, 1.0 - PROB_EPS)
    per_sample = -(t * np.log(p) + (1.0 - t) * np.log1p(-p))
    d_sample = -(t / p - (1.0 - t) / (1.0 - p))
    d_sample = np.where((p_raw >= PROB_EPS) & (p_raw <= 1.0 - PROB_EPS), d_sample, 0.0)
    if sample_weights is None:
        n = per_sample.size
        return per_sample.mean(), per_sample, d_sample / n
    w = np.asarray(sample_weights, dtype=np.float64).ravel()
    if w.shape != per_sample.shape:
        raise UsageError(f"{w.size} weights vs {per_sample.size} samples")
    total = w.sum()
    return float(np.dot(w, per_sample) / total), per_sample, w * d_sample / total
