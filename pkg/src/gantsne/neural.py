"""Dense feed-forward networks with hand-written backprop and Adam."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .errors import ContractError, ShapeError
from .numerics import as_matrix

__all__ = [
    "Activation",
    "Layer",
    "DenseNet",
    "Tape",
    "Gradients",
    "AdamState",
    "BCE_EPS",
    "build_net",
    "forward",
    "bce_loss",
    "backward",
    "adam_apply",
]

BCE_EPS = 1e-7
INIT_STD = 0.02
LEAKY_SLOPE = 0.2

_version_counter = itertools.count()


class Activation(str, Enum):
    LEAKY_RELU = "leaky_relu"
    SIGMOID = "sigmoid"
    TANH = "tanh"
    IDENTITY = "identity"


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass
class Layer:
    weights: np.ndarray  # in x out
    biases: np.ndarray  # 1 x out
    activation: Activation = Activation.IDENTITY
    slope: float = LEAKY_SLOPE

    @property
    def n_in(self) -> int:
        return self.weights.shape[0]

    @property
    def n_out(self) -> int:
        return self.weights.shape[1]

    def activate(self, z: np.ndarray) -> np.ndarray:
        a = self.activation
        if a is Activation.LEAKY_RELU:
            return np.where(z >= 0, z, self.slope * z)
        if a is Activation.SIGMOID:
            return _sigmoid(z)
        if a is Activation.TANH:
            return np.tanh(z)
        return z

    def activation_grad(self, z: np.ndarray, out: np.ndarray) -> np.ndarray:
        a = self.activation
        if a is Activation.LEAKY_RELU:
            return np.where(z >= 0, 1.0, self.slope)
        if a is Activation.SIGMOID:
            return out * (1.0 - out)
        if a is Activation.TANH:
            return 1.0 - out * out
        return np.ones_like(z)


@dataclass
class DenseNet:
    layers: list[Layer]
    # Bumped whenever parameters change so stale tapes can be detected.
    version: int = field(default_factory=lambda: next(_version_counter))

    def __post_init__(self):
        for k, (a, b) in enumerate(zip(self.layers, self.layers[1:])):
            if a.n_out != b.n_in:
                raise ShapeError(f"layer {k} outputs {a.n_out} but layer {k + 1} expects {b.n_in}")
        for k, layer in enumerate(self.layers):
            if layer.biases.shape != (1, layer.n_out):
                raise ShapeError(f"layer {k} bias shape {layer.biases.shape}, expected (1, {layer.n_out})")

    @property
    def n_in(self) -> int:
        return self.layers[0].n_in

    @property
    def n_out(self) -> int:
        return self.layers[-1].n_out

    def parameters(self) -> list[np.ndarray]:
        """Parameter arrays in canonical order W0, b0, W1, b1, ..."""
        out = []
        for layer in self.layers:
            out += [layer.weights, layer.biases]
        return out

    def n_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def touch(self) -> None:
        self.version = next(_version_counter)

    def copy(self) -> "DenseNet":
        return DenseNet(
            [Layer(l.weights.copy(), l.biases.copy(), l.activation, l.slope) for l in self.layers]
        )


def build_net(
    sizes: Sequence[int],
    activations: Sequence[Activation],
    rng: np.random.Generator,
    init_std: float = INIT_STD,
    slope: float = LEAKY_SLOPE,
    init: str = "normal",
) -> DenseNet:
    """Zero biases; weights ~ N(0, init_std^2) for ``init="normal"`` or
    U(-a, a) with a = sqrt(6 / (fan_in + fan_out)) for ``"glorot_uniform"``."""
    if init not in ("normal", "glorot_uniform"):
        raise ValueError(f"unknown init scheme {init!r}")
    if len(activations) != len(sizes) - 1:
        raise ShapeError(f"{len(sizes) - 1} layers need {len(sizes) - 1} activations, got {len(activations)}")
    layers = []
    for n_in, n_out, act in zip(sizes, sizes[1:], activations):
        if init == "normal":
            w = init_std * rng.standard_normal((n_in, n_out))
        else:
            limit = np.sqrt(6.0 / (n_in + n_out))
            w = rng.uniform(-limit, limit, (n_in, n_out))
        layers.append(Layer(w, np.zeros((1, n_out)), Activation(act), slope))
    return DenseNet(layers)


@dataclass
class Tape:
    """Activation cache from one forward pass."""

    net_id: int
    net_version: int
    inputs: list[np.ndarray]
    pre: list[np.ndarray]
    post: list[np.ndarray]


@dataclass
class Gradients:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    input: np.ndarray

    def as_list(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out


def forward(net: DenseNet, x) -> tuple[np.ndarray, Tape]:
    x = as_matrix(x)
    if x.shape[1] != net.n_in:
        raise ShapeError(f"input has {x.shape[1]} columns, network expects {net.n_in}")
    inputs, pre, post = [], [], []
    h = x
    for layer in net.layers:
        inputs.append(h)
        z = h @ layer.weights + layer.biases
        h = layer.activate(z)
        pre.append(z)
        post.append(h)
    return h, Tape(id(net), net.version, inputs, pre, post)


def bce_loss(predictions, targets) -> tuple[float, np.ndarray]:
    """Mean binary cross-entropy and its gradient w.r.t. the predictions.

    Predictions are clamped to [BCE_EPS, 1 - BCE_EPS]; the gradient is the
    exact derivative of the clamped loss, so it is zero where clamping bites.
    """
    p = as_matrix(predictions)
    t = as_matrix(targets)
    if p.shape != t.shape:
        raise ShapeError(f"predictions {p.shape} and targets {t.shape} differ")
    pc = np.clip(p, BCE_EPS, 1.0 - BCE_EPS)
    n = p.size
    loss = -np.sum(t * np.log(pc) + (1.0 - t) * np.log1p(-pc)) / n
    grad = (-t / pc + (1.0 - t) / (1.0 - pc)) / n
    grad = np.where((p >= BCE_EPS) & (p <= 1.0 - BCE_EPS), grad, 0.0)
    return float(loss), grad


def backward(net: DenseNet, tape: Tape, dloss_doutput, param_grads: bool = True) -> Gradients:
    """Reverse-mode pass. With ``param_grads=False`` only the input gradient
    is computed (weight/bias entries are returned as zeros)."""
    if tape.net_id != id(net) or tape.net_version != net.version or len(tape.pre) != len(net.layers):
        raise ContractError("tape was not produced by this network in its current state")
    g = as_matrix(dloss_doutput)
    if g.shape != tape.post[-1].shape:
        raise ShapeError(f"upstream gradient {g.shape} does not match output {tape.post[-1].shape}")
    n = len(net.layers)
    dw: list[Optional[np.ndarray]] = [None] * n
    db: list[Optional[np.ndarray]] = [None] * n
    for k in range(n - 1, -1, -1):
        layer = net.layers[k]
        dz = g * layer.activation_grad(tape.pre[k], tape.post[k])
        if param_grads:
            dw[k] = tape.inputs[k].T @ dz
            db[k] = dz.sum(axis=0, keepdims=True)
        else:
            dw[k] = np.zeros_like(layer.weights)
            db[k] = np.zeros_like(layer.biases)
        g = dz @ layer.weights.T
    return Gradients(dw, db, g)


@dataclass
class AdamState:
    first_moment: list[np.ndarray]
    second_moment: list[np.ndarray]
    step_count: int = 0
    learning_rate: float = 0.0002
    beta1: float = 0.5
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def for_net(cls, net: DenseNet, **hyper) -> "AdamState":
        params = net.parameters()
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], **hyper)

    def copy(self) -> "AdamState":
        return AdamState(
            [m.copy() for m in self.first_moment],
            [v.copy() for v in self.second_moment],
            self.step_count,
            self.learning_rate,
            self.beta1,
            self.beta2,
            self.epsilon,
        )


def adam_apply(net: DenseNet, grads: Gradients, state: AdamState) -> tuple[DenseNet, AdamState]:
    """One bias-corrected Adam step, updating *net* and *state* in place."""
    params = net.parameters()
    g_list = grads.as_list()
    if len(params) != len(g_list) or len(params) != len(state.first_moment):
        raise ShapeError("gradient / optimizer state does not mirror the network's parameters")
    for p, g, m in zip(params, g_list, state.first_moment):
        if p.shape != g.shape or p.shape != m.shape:
            raise ShapeError(f"parameter {p.shape}, gradient {g.shape}, moment {m.shape} disagree")
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for p, g, m, v in zip(params, g_list, state.first_moment, state.second_moment):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.epsilon)
    net.touch()
    return net, state
