"""Dense feed-forward regression network with inverted dropout, manual backprop and Adam.

The network maps an ``(n, M)`` input matrix to a length-``n`` vector of
log event-time predictions.  Hidden layer ``l`` computes
``a_l = f_l(a_{l-1} @ W_l + b_l)``; the output layer is linear.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .errors import ConfigError, DivergenceError, IpwSurvError

FORMAT_VERSION = 1


class StaleCacheError(IpwSurvError, ValueError):
    pass


class NumericInputError(IpwSurvError, ValueError):
    pass


def _relu(z):
    return np.maximum(z, 0.0)


def _relu_grad(z, a):
    return (z > 0).astype(z.dtype)


def _tanh_grad(z, a):
    return 1.0 - a * a


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _sigmoid_grad(z, a):
    return a * (1.0 - a)


def _identity_grad(z, a):
    return np.ones_like(z)


# name -> (activation, derivative given pre-activation and activation)
ACTIVATIONS = {
    "relu": (_relu, _relu_grad),
    "tanh": (np.tanh, _tanh_grad),
    "sigmoid": (_sigmoid, _sigmoid_grad),
    "linear": (lambda z: z, _identity_grad),
}


@dataclass(frozen=True)
class NetworkConfig:
    input_dim: int
    hidden_sizes: tuple[int, ...] = (32,)
    activation: tuple[str, ...] | str = "relu"
    dropout_rates: tuple[float, ...] | float = 0.0
    seed: int = 0

    def __post_init__(self):
        hidden = tuple(int(h) for h in self.hidden_sizes)
        object.__setattr__(self, "hidden_sizes", hidden)
        act = self.activation
        act = (act,) * len(hidden) if isinstance(act, str) else tuple(act)
        object.__setattr__(self, "activation", act)
        drop = self.dropout_rates
        drop = (float(drop),) * len(hidden) if np.isscalar(drop) else tuple(float(d) for d in drop)
        object.__setattr__(self, "dropout_rates", drop)
        if self.input_dim < 1:
            raise ConfigError(f"input_dim must be positive, got {self.input_dim}")
        if any(h < 1 for h in hidden):
            raise ConfigError(f"hidden sizes must be positive, got {hidden}")
        if len(act) != len(hidden) or len(drop) != len(hidden):
            raise ConfigError("activation and dropout_rates need one entry per hidden layer")
        for a in act:
            if a not in ACTIVATIONS:
                raise ConfigError(f"unknown activation {a!r}")
        if any(not 0 <= d < 1 for d in drop):
            raise ConfigError(f"dropout rates must lie in [0, 1), got {drop}")

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden_sizes, 1)

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkConfig":
        return cls(int(d["input_dim"]), tuple(d["hidden_sizes"]), tuple(d["activation"]),
                   tuple(d["dropout_rates"]), int(d.get("seed", 0)))


@dataclass
class Network:
    """Layer weights ``(fan_in, fan_out)`` and biases ``(fan_out,)``; the last pair is the output layer."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    config: NetworkConfig

    @property
    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params)

    def copy(self) -> "Network":
        return Network([w.copy() for w in self.weights], [b.copy() for b in self.biases], self.config)

    def with_params(self, params: Sequence[np.ndarray]) -> "Network":
        return Network(list(params[0::2]), list(params[1::2]), self.config)


@dataclass
class Cache:
    inputs: np.ndarray
    pre: list[np.ndarray] = field(default_factory=list)
    post: list[np.ndarray] = field(default_factory=list)  # after activation and mask
    masks: list[np.ndarray | None] = field(default_factory=list)


@dataclass
class Gradients:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out


def init(config: NetworkConfig) -> Network:
    """Glorot-uniform weights from the config seed; zero biases."""
    rng = np.random.default_rng(config.seed)
    sizes = config.layer_sizes
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return Network(weights, biases, config)


def forward(net: Network, inputs: np.ndarray, rng: np.random.Generator | None = None,
            ) -> tuple[np.ndarray, Cache]:
    """Return log-scale predictions and the activation cache.

    Passing ``rng`` selects train mode: each hidden layer output is multiplied
    by a fresh Bernoulli(1 - rate) mask scaled by ``1 / (1 - rate)``.
    Without it (eval mode) no mask is applied.
    """
    x = np.asarray(inputs, dtype=float)
    if x.ndim == 1:
        x = x.reshape(1, -1)
    if x.shape[1] != net.config.input_dim:
        raise NumericInputError(f"expected {net.config.input_dim} input columns, got {x.shape[1]}")
    if not np.all(np.isfinite(x)):
        raise NumericInputError("inputs contain non-finite values")
    cache = Cache(x)
    a = x
    for w, b, act, rate in zip(net.weights[:-1], net.biases[:-1], net.config.activation,
                               net.config.dropout_rates):
        z = a @ w + b
        a = ACTIVATIONS[act][0](z)
        mask = None
        if rng is not None and rate > 0:
            mask = (rng.random(a.shape) >= rate) / (1.0 - rate)
            a = a * mask
        cache.pre.append(z)
        cache.post.append(a)
        cache.masks.append(mask)
    out = a @ net.weights[-1] + net.biases[-1]
    return out[:, 0], cache


def predict(net: Network, inputs: np.ndarray) -> np.ndarray:
    return forward(net, inputs)[0]


def backward(net: Network, cache: Cache, grad_output: np.ndarray) -> Gradients:
    """Reverse-mode gradients of the total loss given dLoss/d(prediction) per row."""
    g = np.asarray(grad_output, dtype=float).reshape(-1, 1)
    n_hidden = len(net.weights) - 1
    if len(cache.pre) != n_hidden or g.shape[0] != cache.inputs.shape[0]:
        raise StaleCacheError("cache does not match this network or gradient length")
    for z, w in zip(cache.pre, net.weights[:-1]):
        if z.shape[1] != w.shape[1]:
            raise StaleCacheError("cache layer widths do not match the network")

    gw = [None] * (n_hidden + 1)
    gb = [None] * (n_hidden + 1)
    a_prev = cache.post[-1] if n_hidden else cache.inputs
    gw[-1] = a_prev.T @ g
    gb[-1] = g.sum(axis=0)
    delta = g @ net.weights[-1].T
    for l in range(n_hidden - 1, -1, -1):
        mask = cache.masks[l]
        if mask is not None:
            delta = delta * mask
        z = cache.pre[l]
        act = ACTIVATIONS[net.config.activation[l]]
        # derivative needs the unmasked activation
        delta = delta * act[1](z, act[0](z))
        a_prev = cache.post[l - 1] if l else cache.inputs
        gw[l] = a_prev.T @ delta
        gb[l] = delta.sum(axis=0)
        if l:
            delta = delta @ net.weights[l].T
    return Gradients(gw, gb)


@dataclass
class AdamState:
    first_moment: list[np.ndarray]
    second_moment: list[np.ndarray]
    step_count: int = 0
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def for_network(cls, net: Network, learning_rate: float = 1e-3, **kw) -> "AdamState":
        return cls([np.zeros_like(p) for p in net.params], [np.zeros_like(p) for p in net.params],
                   0, learning_rate, **kw)


def adam_step(net: Network, grads: Gradients | Sequence[np.ndarray], state: AdamState,
              ) -> tuple[Network, AdamState]:
    """One bias-corrected Adam update; returns new network and state objects."""
    g_list = grads.params if isinstance(grads, Gradients) else list(grads)
    params = net.params
    if len(g_list) != len(params):
        raise StaleCacheError(f"{len(g_list)} gradient arrays for {len(params)} parameters")
    for k, (g, p) in enumerate(zip(g_list, params)):
        if g.shape != p.shape:
            raise StaleCacheError(f"gradient {k} has shape {g.shape}, parameter has {p.shape}")
        if not np.all(np.isfinite(g)):
            kind = "weights" if k % 2 == 0 else "bias"
            raise DivergenceError(f"non-finite gradient in layer {k // 2} {kind}")
    t = state.step_count + 1
    b1, b2 = state.beta1, state.beta2
    m_new, v_new, p_new = [], [], []
    for g, p, m, v in zip(g_list, params, state.first_moment, state.second_moment):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        m_hat = m / (1 - b1 ** t)
        v_hat = v / (1 - b2 ** t)
        p_new.append(p - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon))
        m_new.append(m)
        v_new.append(v)
    new_state = AdamState(m_new, v_new, t, state.learning_rate, b1, b2, state.epsilon)
    return net.with_params(p_new), new_state


def to_dict(net: Network, **metadata: Any) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "config": net.config.to_dict(),
        **metadata,
        "layers": [{"weights": w.tolist(), "bias": b.tolist()} for w, b in zip(net.weights, net.biases)],
    }


def from_dict(d: dict) -> Network:
    if d.get("format_version") != FORMAT_VERSION:
        raise ConfigError(f"unsupported model format_version {d.get('format_version')!r}")
    config = NetworkConfig.from_dict(d["config"])
    weights = [np.asarray(layer["weights"], dtype=float).reshape(-1, len(layer["bias"]))
               for layer in d["layers"]]
    biases = [np.asarray(layer["bias"], dtype=float) for layer in d["layers"]]
    sizes = config.layer_sizes
    for w, fan_in, fan_out in zip(weights, sizes[:-1], sizes[1:]):
        if w.shape != (fan_in, fan_out):
            raise ConfigError(f"layer shape {w.shape} does not match config ({fan_in}, {fan_out})")
    return Network(weights, biases, config)


def save(net: Network, path: str | Path, **metadata: Any) -> None:
    """Write the model as JSON.  Python float repr round-trips, so reloads are bit-exact."""
    Path(path).write_text(json.dumps(to_dict(net, **metadata), indent=1) + "\n")


def load(path: str | Path) -> tuple[Network, dict]:
    """Read a model file; returns the network and the remaining metadata fields."""
    d = json.loads(Path(path).read_text())
    meta = {k: v for k, v in d.items() if k not in ("format_version", "config", "layers")}
    return from_dict(d), meta
