"""Small dense networks with hand-written backpropagation.

Networks are plain values: :func:`apply_update` and :class:`Adam` return new
networks instead of mutating in place, so a forward cache can be checked
against the parameters that produced it.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np

CHECKPOINT_FORMAT = "pocar-checkpoint"
CHECKPOINT_VERSION = 1


class ShapeError(ValueError):
    pass


class StaleCacheError(ValueError):
    pass


class NonFiniteGradientError(FloatingPointError):
    pass


class Head(str, Enum):
    SOFTMAX = "softmax"
    VALUE = "value"


@dataclass(frozen=True)
class MlpNetwork:
    layer_sizes: tuple[int, ...]
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]
    head: Head

    def __post_init__(self):
        if len(self.layer_sizes) < 2 or any(n < 1 for n in self.layer_sizes):
            raise ShapeError(f"bad layer sizes {self.layer_sizes}")
        if self.head is Head.VALUE and self.layer_sizes[-1] != 1:
            raise ShapeError("value head must have a single output")
        if len(self.weights) != len(self.layer_sizes) - 1 or len(self.biases) != len(self.weights):
            raise ShapeError("need one weight matrix and one bias per layer")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            expected = (self.layer_sizes[i + 1], self.layer_sizes[i])
            if w.shape != expected or b.shape != (expected[0],):
                raise ShapeError(f"layer {i}: weight {w.shape}, bias {b.shape}, expected {expected}")

    @property
    def n_inputs(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_outputs(self) -> int:
        return self.layer_sizes[-1]

    def parameters(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out


@dataclass(frozen=True)
class GradientSet:
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    @classmethod
    def zeros_like(cls, net: MlpNetwork) -> GradientSet:
        return cls(tuple(np.zeros_like(w) for w in net.weights),
                   tuple(np.zeros_like(b) for b in net.biases))

    def scaled(self, factor: float) -> GradientSet:
        return GradientSet(tuple(factor * w for w in self.weights),
                           tuple(factor * b for b in self.biases))

    def __add__(self, other: GradientSet) -> GradientSet:
        return GradientSet(tuple(a + b for a, b in zip(self.weights, other.weights)),
                           tuple(a + b for a, b in zip(self.biases, other.biases)))

    def __neg__(self) -> GradientSet:
        return self.scaled(-1.0)

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(g)) for g in (*self.weights, *self.biases))

    def check_congruent(self, net: MlpNetwork) -> None:
        if len(self.weights) != len(net.weights):
            raise ShapeError("gradient has wrong number of layers")
        for g, w in zip(self.weights, net.weights):
            if g.shape != w.shape:
                raise ShapeError(f"gradient shape {g.shape} != weight shape {w.shape}")
        for g, b in zip(self.biases, net.biases):
            if g.shape != b.shape:
                raise ShapeError(f"gradient shape {g.shape} != bias shape {b.shape}")


@dataclass(frozen=True)
class ForwardCache:
    """Activation trace of one forward pass.

    ``activations[0]`` is the input batch, ``activations[i]`` the output of
    hidden layer ``i``; ``logits`` is the pre-head output of the last layer.
    """

    weights: tuple[np.ndarray, ...]
    activations: tuple[np.ndarray, ...]
    logits: np.ndarray
    output: np.ndarray
    batched: bool


def init_network(layer_sizes: Sequence[int], head: Head | str, seed: int) -> MlpNetwork:
    """Orthogonal initialisation with PPO-style gains; biases start at zero."""
    head = Head(head)
    rng = np.random.default_rng(seed)
    sizes = tuple(int(n) for n in layer_sizes)
    weights, biases = [], []
    n_layers = len(sizes) - 1
    for i in range(n_layers):
        fan_in, fan_out = sizes[i], sizes[i + 1]
        if i < n_layers - 1:
            gain = np.sqrt(2.0)
        else:
            gain = 0.01 if head is Head.SOFTMAX else 1.0
        a = rng.normal(size=(max(fan_in, fan_out), min(fan_in, fan_out)))
        q, r = np.linalg.qr(a)
        q = q * np.sign(np.diag(r))
        w = q if fan_out >= fan_in else q.T
        weights.append(np.ascontiguousarray(gain * w[:fan_out, :fan_in]))
        biases.append(np.zeros(fan_out))
    return MlpNetwork(sizes, tuple(weights), tuple(biases), head)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def forward(net: MlpNetwork, inputs) -> tuple[np.ndarray, ForwardCache]:
    """Evaluate ``net`` on one input vector or a batch of row vectors."""
    x = np.asarray(inputs, dtype=float)
    batched = x.ndim == 2
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != net.n_inputs:
        raise ShapeError(f"expected input width {net.n_inputs}, got shape {np.shape(inputs)}")
    acts = [x]
    h = x
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = h @ w.T + b
        if i < last:
            h = np.tanh(z)
            acts.append(h)
        else:
            h = z
    logits = h
    out = softmax(logits) if net.head is Head.SOFTMAX else logits
    cache = ForwardCache(net.weights, tuple(acts), logits, out, batched)
    return (out if batched else out[0]), cache


def backward(net: MlpNetwork, cache: ForwardCache, upstream, wrt_logits: bool = False) -> GradientSet:
    """Gradients of a scalar loss given its gradient w.r.t. the network output.

    With ``wrt_logits=True`` the upstream gradient is taken w.r.t. the
    pre-softmax logits, which is what the policy-gradient code supplies.
    """
    if cache.weights is not net.weights:
        raise StaleCacheError("cache was produced by different parameters")
    g = np.asarray(upstream, dtype=float)
    if g.ndim == 1:
        g = g[None, :]
    if g.shape != cache.logits.shape:
        raise ShapeError(f"upstream gradient shape {np.shape(upstream)} != output {cache.logits.shape}")
    if net.head is Head.SOFTMAX and not wrt_logits:
        p = cache.output
        g = p * (g - (g * p).sum(axis=1, keepdims=True))
    grad_w = [None] * len(net.weights)
    grad_b = [None] * len(net.biases)
    for i in range(len(net.weights) - 1, -1, -1):
        a = cache.activations[i]
        grad_w[i] = g.T @ a
        grad_b[i] = g.sum(axis=0)
        if i > 0:
            g = (g @ net.weights[i]) * (1.0 - a * a)
    return GradientSet(tuple(grad_w), tuple(grad_b))


def apply_update(net: MlpNetwork, grads: GradientSet, step_size: float) -> MlpNetwork:
    """Plain gradient step ``theta + step_size * grad``."""
    grads.check_congruent(net)
    if not grads.is_finite():
        raise NonFiniteGradientError("refusing to apply non-finite gradients")
    weights = tuple(w + step_size * g for w, g in zip(net.weights, grads.weights))
    biases = tuple(b + step_size * g for b, g in zip(net.biases, grads.biases))
    return MlpNetwork(net.layer_sizes, weights, biases, net.head)


class Adam:
    """Adam moments over a network's parameters; :meth:`step` ascends."""

    def __init__(self, net: MlpNetwork, step_size: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8, max_grad_norm: float | None = None):
        self.step_size = step_size
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.max_grad_norm = max_grad_norm
        self.t = 0
        self.m = [np.zeros_like(p) for p in net.parameters()]
        self.v = [np.zeros_like(p) for p in net.parameters()]

    def step(self, net: MlpNetwork, grads: GradientSet) -> MlpNetwork:
        grads.check_congruent(net)
        if not grads.is_finite():
            raise NonFiniteGradientError("refusing to apply non-finite gradients")
        flat = []
        for gw, gb in zip(grads.weights, grads.biases):
            flat.extend((gw, gb))
        if self.max_grad_norm is not None:
            norm = np.sqrt(sum(float(np.sum(g * g)) for g in flat))
            if norm > self.max_grad_norm:
                flat = [g * (self.max_grad_norm / norm) for g in flat]
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        new = []
        for i, (p, g) in enumerate(zip(net.parameters(), flat)):
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g
            new.append(p + self.step_size * (self.m[i] / c1) / (np.sqrt(self.v[i] / c2) + self.eps))
        return MlpNetwork(net.layer_sizes, tuple(new[0::2]), tuple(new[1::2]), net.head)


class Sgd:
    def __init__(self, net: MlpNetwork, step_size: float, max_grad_norm: float | None = None):
        self.step_size = step_size
        self.max_grad_norm = max_grad_norm

    def step(self, net: MlpNetwork, grads: GradientSet) -> MlpNetwork:
        if self.max_grad_norm is not None and grads.is_finite():
            norm = np.sqrt(sum(float(np.sum(g * g)) for g in (*grads.weights, *grads.biases)))
            if norm > self.max_grad_norm:
                grads = grads.scaled(self.max_grad_norm / norm)
        return apply_update(net, grads, self.step_size)


def make_optimizer(kind: str, net: MlpNetwork, step_size: float, max_grad_norm: float | None = None):
    if kind == "adam":
        return Adam(net, step_size, max_grad_norm=max_grad_norm)
    if kind == "sgd":
        return Sgd(net, step_size, max_grad_norm=max_grad_norm)
    raise ValueError(f"unknown optimizer {kind!r}")


# -- checkpoints -----------------------------------------------------------
# Parameters are stored as float.hex strings so a load reproduces every bit.

def network_to_dict(net: MlpNetwork) -> dict:
    params = []
    for p in net.parameters():
        params.extend(float(x).hex() for x in p.ravel(order="C"))
    return {"head": net.head.value, "layer_sizes": list(net.layer_sizes), "params": params}


def network_from_dict(d: dict) -> MlpNetwork:
    sizes = tuple(int(n) for n in d["layer_sizes"])
    flat = np.array([float.fromhex(s) for s in d["params"]])
    weights, biases, pos = [], [], 0
    for i in range(len(sizes) - 1):
        n_w = sizes[i + 1] * sizes[i]
        weights.append(flat[pos:pos + n_w].reshape(sizes[i + 1], sizes[i]).copy())
        pos += n_w
        biases.append(flat[pos:pos + sizes[i + 1]].copy())
        pos += sizes[i + 1]
    if pos != flat.size:
        raise ShapeError(f"checkpoint holds {flat.size} parameters, layout needs {pos}")
    return MlpNetwork(sizes, tuple(weights), tuple(biases), Head(d["head"]))


def save_checkpoint(path, networks: dict[str, MlpNetwork], meta: dict | None = None) -> Path:
    path = Path(path)
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "meta": meta or {},
        "networks": {name: network_to_dict(net) for name, net in networks.items()},
    }
    path.write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")
    return path


def load_checkpoint(path) -> tuple[dict[str, MlpNetwork], dict]:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path} is not a pocar checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {doc.get('version')}")
    nets = {name: network_from_dict(d) for name, d in doc["networks"].items()}
    return nets, doc["meta"]
