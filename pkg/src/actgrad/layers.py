"""Layers, the three-tier CNN builder, softmax cross-entropy and accuracy.

A :class:`Network` owns a flat, ordered ``{name: ndarray}`` parameter dict; layers
are stateless and look their parameters up by name. Every layer exposes
``forward(params, x) -> (y, cache)`` and ``backward(params, cache, dy) -> (dx, grads)``.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from . import activations as act
from . import tensor as T
from .errors import ActgradError, ShapeError, StateError

SIZES = {
    "small": (16, 32, 32),
    "middle": (32, 64, 64),
    "large": (48, 96, 96),
}
ACTIVATIONS = ("relu", "fourier", "lc") + tuple(k for k in act.FIXED_KINDS if k != "relu")
N_CLASSES = 10
IN_CHANNELS = 3
LOG_EPS = 1e-12


@dataclass(frozen=True)
class ModelConfig:
    size: str = "small"
    activation: str = "relu"
    seed: int = 0
    per_channel: bool = False
    hidden: int = 256
    input_hw: int = 32
    filters: tuple | None = None  # overrides the size tier; used by tiny test networks

    def __post_init__(self):
        if self.size not in SIZES:
            raise ActgradError(f"unknown size {self.size!r}; expected one of {tuple(SIZES)}")
        if self.activation not in ACTIVATIONS:
            raise ActgradError(f"unknown activation {self.activation!r}; expected one of {ACTIVATIONS}")
        if self.input_hw % 8:
            raise ActgradError("input size must survive three 2x2 poolings")

    @property
    def conv_filters(self) -> tuple:
        return tuple(self.filters) if self.filters is not None else SIZES[self.size]

    def to_dict(self):
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["filters"] = None if self.filters is None else list(self.filters)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if d.get("filters") is not None:
            d["filters"] = tuple(d["filters"])
        return cls(**d)


class Conv:
    def __init__(self, name, c_in, c_out):
        self.name, self.c_in, self.c_out = name, c_in, c_out
        self.kernel, self.bias = f"{name}.K", f"{name}.b"

    def init(self, rng):
        limit = np.sqrt(6.0 / (self.c_in * 9))
        return {
            self.kernel: rng.uniform(-limit, limit, size=(self.c_out, self.c_in, 3, 3)),
            self.bias: np.zeros(self.c_out),
        }

    def forward(self, params, x):
        y, cols = T.conv2d_forward(x, params[self.kernel], params[self.bias])
        return y, (cols, x.shape)

    def backward(self, params, cache, dy):
        cols, shape = cache
        dx, dk, db = T.conv2d_backward(dy, cols, params[self.kernel], shape)
        return dx, {self.kernel: dk, self.bias: db}


class Dense:
    def __init__(self, name, n_in, n_out):
        self.name, self.n_in, self.n_out = name, n_in, n_out
        self.weight, self.bias = f"{name}.W", f"{name}.b"

    def init(self, rng):
        limit = np.sqrt(6.0 / self.n_in)
        return {
            self.weight: rng.uniform(-limit, limit, size=(self.n_in, self.n_out)),
            self.bias: np.zeros(self.n_out),
        }

    def forward(self, params, x):
        return T.matmul(x, params[self.weight]) + params[self.bias], x

    def backward(self, params, x, dy):
        return dy @ params[self.weight].T, {self.weight: x.T @ dy, self.bias: dy.sum(axis=0)}


class MaxPool:
    def __init__(self, name):
        self.name = name

    def init(self, rng):
        return {}

    def forward(self, params, x):
        # the winning positions are only needed for backward, so they are found there
        y, _ = T.maxpool2(x, with_argmax=False)
        return y, (x, y)

    def backward(self, params, cache, dy):
        x, y = cache
        return T.maxpool2_backward(dy, T.window_argmax(x, y), x.shape), {}


class Flatten:
    def __init__(self, name):
        self.name = name

    def init(self, rng):
        return {}

    def forward(self, params, x):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, params, shape, dy):
        return dy.reshape(shape), {}


class Activation:
    """Fixed, Fourier or linear-combination activation; ``groups`` > 0 means per-channel."""

    def __init__(self, name, kind, groups=None):
        self.name, self.kind, self.groups = name, kind, groups

    def param_names(self):
        if self.kind == "fourier":
            return [f"{self.name}.{k}" for k in ("A", "omega", "a", "b")]
        if self.kind == "lc":
            return [f"{self.name}.w"]
        return []

    def init(self, rng):
        if self.kind == "fourier":
            p = act.FourierParams.initial(rng, groups=self.groups)
            return {f"{self.name}.{k}": v for k, v in p.as_dict().items()}
        if self.kind == "lc":
            return {f"{self.name}.w": act.LCParams.initial(groups=self.groups).w}
        return {}

    def fourier(self, params):
        n = self.name
        return act.FourierParams(params[f"{n}.A"], params[f"{n}.omega"], params[f"{n}.a"], params[f"{n}.b"])

    def lc(self, params):
        return act.LCParams(params[f"{self.name}.w"])

    def forward(self, params, x):
        if self.kind == "fourier":
            return act.fourier_forward(self.fourier(params), x)
        if self.kind == "lc":
            return act.lc_forward(self.lc(params), x)
        return act.fixed_forward(self.kind, x), x

    def backward(self, params, cache, dy):
        n = self.name
        if self.kind == "fourier":
            g, dx = act.fourier_backward(self.fourier(params), cache, dy)
            return dx, {f"{n}.{k}": v for k, v in g.as_dict().items()}
        if self.kind == "lc":
            dw, dx = act.lc_backward(self.lc(params), cache, dy)
            return dx, {f"{n}.w": dw}
        return dy * act.fixed_derivative(self.kind, cache), {}


@dataclass
class ForwardCache:
    layer_caches: list
    version: int
    batch: int
    logits: np.ndarray = field(repr=False)


class Network:
    def __init__(self, config: ModelConfig, layers, params):
        self.config = config
        self.layers = layers
        self.params = params
        self.version = 0

    @property
    def param_count(self) -> int:
        return sum(p.size for p in self.params.values())

    def copy(self):
        twin = Network(self.config, self.layers, copy.deepcopy(self.params))
        return twin

    def mark_updated(self):
        self.version += 1

    def apply_constraints(self):
        """Re-impose activation-parameter constraints after an update."""
        for name in self.params:
            if name.endswith(".omega"):
                self.params[name] = act.clamp_omega(self.params[name])
            elif name.endswith(".w") and self._is_lc(name):
                self.params[name] = act.guard_lc_weights(self.params[name])
        self.mark_updated()

    def _is_lc(self, name):
        return any(isinstance(l, Activation) and l.kind == "lc" and name == f"{l.name}.w" for l in self.layers)

    def flatten(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params.values()])

    def unflatten(self, vector):
        vector = np.asarray(vector, dtype=np.float64)
        if vector.shape != (self.param_count,):
            raise ShapeError(f"expected flat vector of {self.param_count}, got {vector.shape}", vector.shape)
        offset = 0
        for name, p in self.params.items():
            self.params[name] = vector[offset:offset + p.size].reshape(p.shape).copy()
            offset += p.size
        self.mark_updated()

    def activation_layers(self):
        return [l for l in self.layers if isinstance(l, Activation)]

    def conv_layers(self):
        return [l for l in self.layers if isinstance(l, Conv)]

    def run(self, x, start=0, stop=None):
        """Forward through ``layers[start:stop]`` without keeping caches."""
        for layer in self.layers[start:stop]:
            x, _ = layer.forward(self.params, x)
        return x

    def _check_batch(self, batch):
        hw = self.config.input_hw
        expected = (IN_CHANNELS, hw, hw)
        if batch.ndim != 4 or batch.shape[1:] != expected:
            raise ShapeError(f"batch must be (B, {IN_CHANNELS}, {hw}, {hw}), got {batch.shape}", batch.shape)

    def logits(self, batch) -> np.ndarray:
        batch = np.asarray(batch, dtype=np.float64)
        self._check_batch(batch)
        return self.run(batch)

    def forward(self, batch):
        batch = np.asarray(batch, dtype=np.float64)
        self._check_batch(batch)
        caches = []
        x = batch
        for layer in self.layers:
            x, c = layer.forward(self.params, x)
            caches.append(c)
        return softmax(x), ForwardCache(caches, self.version, batch.shape[0], x)

    def backward(self, cache: ForwardCache, dlogits):
        if cache is None or cache.version != self.version:
            raise StateError("forward cache is missing or stale; run forward again after updating parameters")
        dlogits = np.asarray(dlogits, dtype=np.float64)
        if dlogits.shape != (cache.batch, N_CLASSES):
            raise ShapeError(f"dlogits must be ({cache.batch}, {N_CLASSES}), got {dlogits.shape}", dlogits.shape)
        grads = {}
        dy = dlogits
        for layer, c in zip(reversed(self.layers), reversed(cache.layer_caches)):
            dy, g = layer.backward(self.params, c, dy)
            grads.update(g)
        return {name: np.asarray(grads[name], dtype=np.float64).reshape(p.shape) for name, p in self.params.items()}

    def predict(self, images, chunk=25) -> np.ndarray:
        """Softmax probabilities for any number of images, evaluated in chunks."""
        images = np.asarray(images, dtype=np.float64)
        out = [softmax(self.logits(images[i:i + chunk])) for i in range(0, images.shape[0], chunk)]
        return np.concatenate(out, axis=0)


def build_model(cfg: ModelConfig) -> Network:
    """conv-act-pool x3, flatten, dense(hidden)-act, dense(10), softmax."""
    f1, f2, f3 = cfg.conv_filters
    kind = cfg.activation

    def activation(name, channels):
        return Activation(name, kind, channels if cfg.per_channel else None)

    spatial = cfg.input_hw // 8
    layers = [
        Conv("conv1", IN_CHANNELS, f1), activation("act1", f1), MaxPool("pool1"),
        Conv("conv2", f1, f2), activation("act2", f2), MaxPool("pool2"),
        Conv("conv3", f2, f3), activation("act3", f3), MaxPool("pool3"),
        Flatten("flatten"),
        Dense("fc1", f3 * spatial * spatial, cfg.hidden), activation("act4", cfg.hidden),
        Dense("fc2", cfg.hidden, N_CLASSES),
    ]
    rng = np.random.default_rng(cfg.seed)
    params = {}
    for layer in layers:
        params.update(layer.init(rng))
    return Network(cfg, layers, params)


def forward(net: Network, batch):
    return net.forward(batch)


def backward(net: Network, cache, dlogits):
    return net.backward(cache, dlogits)


def softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(probs, labels) -> float:
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if probs.shape != labels.shape:
        raise ShapeError(f"probs {probs.shape} vs labels {labels.shape}", probs.shape, labels.shape)
    return float(-(labels * np.log(probs + LOG_EPS)).sum() / probs.shape[0])


def loss_and_grad(probs, labels):
    """Mean cross-entropy and its gradient w.r.t. the pre-softmax logits."""
    loss = cross_entropy(probs, labels)
    return loss, (np.asarray(probs) - np.asarray(labels)) / probs.shape[0]


def accuracy(probs, labels) -> float:
    probs = np.asarray(probs)
    labels = np.asarray(labels)
    if labels.ndim == 2:
        labels = labels.argmax(axis=1)
    return float(np.mean(probs.argmax(axis=1) == labels))
