"""Greedy layerwise autoencoder pretraining of the convolutional layers.

Each conv layer (with its activation) is trained as the encoder of a one-layer
autoencoder whose decoder is a transposed 3x3 convolution back to the encoder's
input channels, with a linear output and mean-squared reconstruction loss.
Pooling stays outside the autoencoding path. The decoder is thrown away.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import activations as act
from . import layers as L
from . import tensor as T
from .data import batch_order
from .errors import ActgradError, ShapeError
from .optim import RMSProp

log = logging.getLogger(__name__)

EVAL_CHUNK = 25


@dataclass(frozen=True)
class AePretrainConfig:
    epochs_per_layer: int = 5  # 0 turns pretraining into a no-op
    lr: float = 0.001
    batch_size: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.epochs_per_layer < 0:
            raise ActgradError("epochs_per_layer must be >= 0")
        if self.batch_size < 1:
            raise ActgradError("batch_size must be >= 1")


def _flip(kernel):
    """Transposed-conv weight (C_hidden, C_in, 3, 3) <-> equivalent conv kernel (C_in, C_hidden, 3, 3)."""
    return np.ascontiguousarray(kernel[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))


class Decoder:
    """Transposed 3x3 convolution, stride 1, padding 1."""

    def __init__(self, c_hidden, c_out):
        self.weight, self.bias = "decoder.W", "decoder.b"
        self.c_hidden, self.c_out = c_hidden, c_out

    def init(self, rng):
        limit = np.sqrt(6.0 / (self.c_hidden * 9))
        return {
            self.weight: rng.uniform(-limit, limit, size=(self.c_hidden, self.c_out, 3, 3)),
            self.bias: np.zeros(self.c_out),
        }

    def forward(self, params, h):
        y, cols = T.conv2d_forward(h, _flip(params[self.weight]), params[self.bias])
        return y, (cols, h.shape)

    def backward(self, params, cache, dy):
        cols, shape = cache
        dh, dk, db = T.conv2d_backward(dy, cols, _flip(params[self.weight]), shape)
        return dh, {self.weight: _flip(dk), self.bias: db}


def reconstruction_mse(encoder, activation, decoder, params, x) -> float:
    h, _ = encoder.forward(params, x)
    h, _ = activation.forward(params, h)
    rec, _ = decoder.forward(params, h)
    return float(np.mean((rec - x) ** 2))


def _constrain(params):
    for name in params:
        if name.endswith(".omega"):
            params[name] = act.clamp_omega(params[name])
        elif name.endswith(".w"):
            params[name] = act.guard_lc_weights(params[name])


def pretrain_layer(encoder: L.Conv, activation: L.Activation, params: dict, inputs, cfg: AePretrainConfig,
                   layer_seed=0):
    """Train one encoder against a temporary decoder.

    ``inputs`` is either an array ``(N, C_in, H, W)`` of frozen lower-layer outputs
    or a callable ``inputs(index_array) -> array`` producing them on demand.
    Returns ``(encoder_params, history)`` where history holds the full-data MSE
    after every epoch.
    """
    if callable(inputs):
        fetch, n = inputs, inputs.size
    else:
        arr = np.asarray(inputs, dtype=np.float64)
        fetch, n = (lambda idx: arr[idx]), arr.shape[0]
        if arr.ndim != 4 or arr.shape[1] != encoder.c_in:
            raise ShapeError(f"encoder expects (N, {encoder.c_in}, H, W), got {arr.shape}", arr.shape)
    names = [encoder.kernel, encoder.bias] + activation.param_names()
    own = {k: np.array(params[k], copy=True) for k in names}
    if cfg.epochs_per_layer == 0:
        return own, []
    decoder = Decoder(encoder.c_out, encoder.c_in)
    work = dict(own)
    work.update(decoder.init(np.random.default_rng([cfg.seed, layer_seed])))
    opt = RMSProp()
    history = []
    for epoch in range(cfg.epochs_per_layer):
        order = batch_order(n, cfg.seed + layer_seed, epoch)
        for start in range(0, n, cfg.batch_size):
            x = fetch(order[start:start + cfg.batch_size])
            z, c_enc = encoder.forward(work, x)
            h, c_act = activation.forward(work, z)
            rec, c_dec = decoder.forward(work, h)
            drec = 2.0 * (rec - x) / rec.size
            dh, g_dec = decoder.backward(work, c_dec, drec)
            dz, g_act = activation.backward(work, c_act, dh)
            _, g_enc = encoder.backward(work, c_enc, dz)
            grads = {**g_enc, **g_act, **g_dec}
            grads = {k: np.asarray(grads[k]).reshape(np.shape(work[k])) for k in work}
            opt.step(work, grads, cfg.lr, lambda: _constrain(work))
        mse = 0.0
        for start in range(0, n, EVAL_CHUNK):
            idx = np.arange(start, min(n, start + EVAL_CHUNK))
            mse += reconstruction_mse(encoder, activation, decoder, work, fetch(idx)) * len(idx)
        history.append(mse / n)
        log.info("%s epoch %d reconstruction mse %.6f", encoder.name, epoch + 1, history[-1])
    return {k: work[k] for k in names}, history


class _PrefixInputs:
    """Frozen outputs of ``net.layers[:stop]`` computed per requested index set."""

    def __init__(self, net, images, stop):
        self.net, self.images, self.stop = net, images, stop
        self.size = images.shape[0]

    def __call__(self, idx):
        return self.net.run(self.images[idx], stop=self.stop)


def pretrain_network(net: L.Network, images, cfg: AePretrainConfig):
    """Pretrain conv layers in order and return ``(pretrained_copy, {layer: history})``.

    Layer i is trained on the outputs of layers < i as they stand after their own
    pretraining; dense layers are left untouched.
    """
    out = net.copy()
    images = np.asarray(images, dtype=np.float64)
    histories = {}
    for k, layer in enumerate(out.layers):
        if not isinstance(layer, L.Conv):
            continue
        activation = out.layers[k + 1]
        inputs = _PrefixInputs(out, images, k)
        trained, hist = pretrain_layer(layer, activation, out.params, inputs, cfg, layer_seed=k)
        out.params.update(trained)
        out.mark_updated()
        histories[layer.name] = hist
    return out, histories
