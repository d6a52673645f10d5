import numpy as np
import pytest

from actgrad import layers as L
from actgrad.errors import ActgradError
from actgrad.gradcheck import finite_diff, relative_error
from actgrad.pretrain import AePretrainConfig, Decoder, pretrain_layer, pretrain_network, reconstruction_mse

from conftest import learnable


def tiny(activation="fourier", filters=(4, 4, 4), hw=16, seed=0):
    return L.build_model(L.ModelConfig("small", activation, seed=seed, filters=filters, hidden=8, input_hw=hw))


@pytest.mark.parametrize("activation", ["relu", "tanh", "fourier"])
def test_zero_input_reconstructs_exactly(rng, activation):
    net = tiny(activation)
    conv, act_layer = net.layers[0], net.layers[1]
    dec = Decoder(conv.c_out, conv.c_in)
    params = dict(net.params, **dec.init(rng))
    if activation == "fourier":
        # make the activation vanish at 0 so the hidden code is zero as well
        params["act1.A"] = np.asarray(0.0)
        params["act1.a"] = np.zeros(5)
    assert not np.any(params["conv1.b"]) and not np.any(params["decoder.b"])
    assert reconstruction_mse(conv, act_layer, dec, params, np.zeros((3, 3, 16, 16))) == 0.0


def test_decoder_gradient_matches_finite_differences(rng):
    dec = Decoder(3, 2)
    params = dec.init(rng)
    params["decoder.b"] = rng.normal(size=2)
    h = rng.normal(size=(2, 3, 5, 5))
    target = rng.normal(size=(2, 2, 5, 5))

    def loss(flat):
        w = flat[:params["decoder.W"].size].reshape(params["decoder.W"].shape)
        b = flat[params["decoder.W"].size:]
        y, _ = dec.forward({"decoder.W": w, "decoder.b": b}, h)
        return float(np.sum((y - target) ** 2))

    y, cache = dec.forward(params, h)
    _, grads = dec.backward(params, cache, 2 * (y - target))
    analytic = np.concatenate([grads["decoder.W"].ravel(), grads["decoder.b"]])
    numeric = finite_diff(loss, np.concatenate([params["decoder.W"].ravel(), params["decoder.b"]]))
    assert relative_error(analytic, numeric) < 1e-6


def test_decoder_is_transposed_convolution(rng):
    # a single input pixel spreads the flipped-free kernel around it
    dec = Decoder(1, 1)
    params = {"decoder.W": rng.normal(size=(1, 1, 3, 3)), "decoder.b": np.zeros(1)}
    h = np.zeros((1, 1, 5, 5))
    h[0, 0, 2, 2] = 1.0
    y, _ = dec.forward(params, h)
    np.testing.assert_allclose(y[0, 0, 1:4, 1:4], params["decoder.W"][0, 0], atol=1e-15)


def test_layer_shapes_preserved(rng):
    net = tiny("lc")
    x = rng.uniform(size=(20, 3, 16, 16))
    out, hist = pretrain_layer(net.layers[0], net.layers[1], net.params, x, AePretrainConfig(epochs_per_layer=2))
    assert set(out) == {"conv1.K", "conv1.b", "act1.w"}
    assert all(out[k].shape == net.params[k].shape for k in out)
    assert len(hist) == 2


def test_zero_epochs_is_a_noop():
    net = tiny("fourier")
    out, hist = pretrain_network(net, learnable(32, hw=16).images, AePretrainConfig(epochs_per_layer=0))
    assert all(np.array_equal(out.params[k], net.params[k]) for k in net.params)
    assert all(h == [] for h in hist.values())
    with pytest.raises(ActgradError):
        AePretrainConfig(epochs_per_layer=-1)


def test_dense_layers_untouched_and_input_not_mutated():
    net = tiny("fourier")
    before = {k: v.copy() for k, v in net.params.items()}
    out, hist = pretrain_network(net, learnable(64, hw=16).images, AePretrainConfig(epochs_per_layer=1))
    assert list(hist) == ["conv1", "conv2", "conv3"]
    for k in before:
        assert np.array_equal(net.params[k], before[k])
        if k.startswith(("fc", "act4")):
            assert np.array_equal(out.params[k], before[k])
    assert not np.array_equal(out.params["conv1.K"], before["conv1.K"])


@pytest.mark.parametrize("activation", ["relu", "fourier", "lc"])
def test_reconstruction_loss_mostly_decreases(activation):
    images = learnable(512, seed=5).images
    net = L.build_model(L.ModelConfig("small", activation, seed=3))
    cfg = AePretrainConfig(epochs_per_layer=5, seed=1)
    _, hist = pretrain_layer(net.layers[0], net.layers[1], net.params, images, cfg)
    rises = sum(b > a for a, b in zip(hist, hist[1:]))
    assert rises <= 1, hist


@pytest.mark.parametrize("size", ["small", "middle", "large"])
def test_pretrain_then_train_all_sizes(size, rng):
    net = L.build_model(L.ModelConfig(size, "fourier", hidden=16))
    images = rng.uniform(size=(8, 3, 32, 32))
    out, _ = pretrain_network(net, images, AePretrainConfig(epochs_per_layer=1, batch_size=4))
    probs, cache = out.forward(images)
    grads = out.backward(cache, probs - np.eye(10)[np.arange(8) % 10])
    assert set(grads) == set(out.params)
