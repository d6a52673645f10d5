"""Central finite-difference oracle and per-component gradient reports.

The oracle only ever calls forward functions; it never shares code with the
analytic backward passes it is used to judge.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import activations as act
from . import layers as L
from . import tensor as T
from .errors import ActgradError, GradientCheckError

STEP = 1e-5
REL_FLOOR = 1e-8
TOLERANCE = 1e-4
KINK = 1e-3
SATURATION = 1e-4
COMPONENTS = ("fourier", "lc", "conv", "dense", "loss", "end2end")


def finite_diff(f, at, step=STEP) -> np.ndarray:
    """Central differences ``(f(x + h e_i) - f(x - h e_i)) / 2h`` for every coordinate."""
    if step <= 0:
        raise ActgradError(f"step must be positive, got {step}")
    x = np.array(at, dtype=np.float64).ravel()
    grad = np.empty_like(x)
    for i in range(x.size):
        orig = x[i]
        x[i] = orig + step
        hi = f(x)
        x[i] = orig - step
        lo = f(x)
        x[i] = orig
        if not (np.isfinite(hi) and np.isfinite(lo)):
            raise GradientCheckError(f"non-finite function value when perturbing coordinate {i}", coordinate=i)
        grad[i] = (hi - lo) / (2.0 * step)
    return grad


def relative_error(a, b, floor=REL_FLOOR) -> float:
    """Max over elements of ``|a - b| / max(|a|, |b|, floor)``."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size == 0:
        return 0.0
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom))


def _pack(arrays):
    return np.concatenate([np.asarray(a, dtype=np.float64).ravel() for a in arrays])


def _unpack(vec, shapes):
    out, offset = [], 0
    for shape in shapes:
        size = int(np.prod(shape))
        out.append(vec[offset:offset + size].reshape(shape))
        offset += size
    return out


def _compare(named_analytic, named_values, scalar_fn):
    """Finite-difference ``scalar_fn`` over the packed values and compare group by group."""
    names = list(named_values)
    shapes = [np.shape(named_values[n]) for n in names]
    vec = _pack([named_values[n] for n in names])

    def f(v):
        return scalar_fn(dict(zip(names, _unpack(v, shapes))))

    numeric = dict(zip(names, _unpack(finite_diff(f, vec), shapes)))
    return {n: relative_error(named_analytic[n], numeric[n]) for n in names}


def _away_from(rng, shape, scale, margin=KINK):
    x = rng.normal(0.0, scale, size=shape)
    bad = np.abs(x) < margin
    while bad.any():
        x[bad] = rng.normal(0.0, scale, size=bad.sum())
        bad = np.abs(x) < margin
    return x


def check_fourier(rng, backward=None):
    backward = backward or act.fourier_backward
    rank = act.FOURIER_RANK
    omega = rng.uniform(0.5, 2.0) * rng.choice([-1.0, 1.0])
    values = {
        "A": np.asarray(rng.normal()),
        "omega": np.asarray(omega),
        "a": rng.normal(0.0, 0.5, rank),
        "b": rng.normal(0.0, 0.5, rank),
        "input": rng.normal(0.0, 1.5, size=(2, 3, 4)),
    }
    weights = rng.normal(size=values["input"].shape)

    def loss(v):
        p = act.FourierParams(v["A"], v["omega"], v["a"], v["b"])
        y, _ = act.fourier_forward(p, v["input"])
        return float((y * weights).sum())

    p = act.FourierParams(values["A"], values["omega"], values["a"], values["b"])
    _, cache = act.fourier_forward(p, values["input"])
    grads, dx = backward(p, cache, weights)
    analytic = dict(grads.as_dict(), input=dx)
    return _compare(analytic, values, loss)


def check_lc(rng):
    m = len(act.LC_CANDIDATES)
    w = rng.uniform(-0.5, 1.0, m)
    while abs(w.sum()) < 0.1:  # stay clear of the denominator clamp
        w = rng.uniform(-0.5, 1.0, m)
    values = {"w": w, "input": _away_from(rng, (2, 3, 4), 1.5)}
    weights = rng.normal(size=values["input"].shape)

    def loss(v):
        y, _ = act.lc_forward(act.LCParams(v["w"]), v["input"])
        return float((y * weights).sum())

    p = act.LCParams(values["w"])
    _, cache = act.lc_forward(p, values["input"])
    dw, dx = act.lc_backward(p, cache, weights)
    return _compare({"w": dw, "input": dx}, values, loss)


def check_conv(rng):
    values = {
        "input": rng.normal(size=(2, 3, 5, 5)),
        "kernels": rng.normal(size=(4, 3, 3, 3)),
        "bias": rng.normal(size=4),
    }
    weights = rng.normal(size=(2, 4, 5, 5))

    def loss(v):
        return float((T.conv2d(v["input"], v["kernels"], v["bias"]) * weights).sum())

    _, cols = T.conv2d_forward(values["input"], values["kernels"], values["bias"])
    dx, dk, db = T.conv2d_backward(weights, cols, values["kernels"], values["input"].shape)
    return _compare({"input": dx, "kernels": dk, "bias": db}, values, loss)


def check_dense(rng):
    layer = L.Dense("fc", 5, 4)
    values = {"input": rng.normal(size=(3, 5)), "fc.W": rng.normal(size=(5, 4)), "fc.b": rng.normal(size=4)}
    weights = rng.normal(size=(3, 4))

    def loss(v):
        y, _ = layer.forward(v, v["input"])
        return float((y * weights).sum())

    _, cache = layer.forward(values, values["input"])
    dx, g = layer.backward(values, cache, weights)
    return _compare(dict(g, input=dx), values, loss)


def check_loss(rng):
    logits = rng.normal(0.0, 2.0, size=(4, L.N_CLASSES))
    labels = np.eye(L.N_CLASSES)[rng.integers(0, L.N_CLASSES, 4)]

    def loss(v):
        return L.cross_entropy(L.softmax(v["logits"]), labels)

    _, dlogits = L.loss_and_grad(L.softmax(logits), labels)
    return _compare({"logits": dlogits}, {"logits": logits}, loss)


def tiny_config(activation, seed=0):
    """Two filters per conv, 8x8 inputs, 8 hidden units."""
    return L.ModelConfig(size="small", activation=activation, seed=seed, hidden=8, input_hw=8, filters=(2, 2, 2))


def _randomise_activations(net, rng):
    for layer in net.activation_layers():
        n = layer.name
        if layer.kind == "fourier":
            net.params[f"{n}.A"] = np.asarray(rng.normal(0.0, 0.3))
            net.params[f"{n}.omega"] = np.asarray(rng.uniform(0.5, 1.5))
            # spread around the near-identity initialisation (b_1 = 1)
            net.params[f"{n}.a"] = rng.normal(0.0, 0.1, act.FOURIER_RANK)
            b = rng.normal(0.0, 0.1, act.FOURIER_RANK)
            b[0] += 1.0
            net.params[f"{n}.b"] = b
        elif layer.kind == "lc":
            net.params[f"{n}.w"] = rng.uniform(0.1, 1.0, len(act.LC_CANDIDATES))


def kink_free(net, batch, margin=KINK) -> bool:
    """True if no kinked activation input and no max-pool runner-up lies within ``margin``.

    Windows whose top two entries are both exact zeros produced by ReLU are allowed:
    those units stay dead under any perturbation the oracle applies.
    """
    x = batch
    kind = None
    for layer in net.layers:
        if isinstance(layer, L.Activation):
            kind = layer.kind
            if kind in ("relu", "lc") and np.any(np.abs(x) < margin):
                return False
        if isinstance(layer, L.MaxPool):
            n, c, h, w = x.shape
            win = np.sort(x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // 2, w // 2, 4))
            close = win[..., -1] - win[..., -2] < margin
            if kind == "relu":
                close &= win[..., -1] != 0.0
            if np.any(close):
                return False
        x, _ = layer.forward(net.params, x)
    return True


def unsaturated(probs, floor=SATURATION) -> bool:
    """True if every softmax output is at least ``floor``.

    Below it the log guard in the loss and finite-difference round-off both dominate
    the gradient, so such draws are excluded like kinks are.
    """
    return bool(np.all(probs >= floor))


def _compare_network(net, batch, labels, grads):
    """Finite-difference every network parameter, re-running only the layers at and after its owner."""
    inputs = []
    x = batch
    for layer in net.layers:
        inputs.append(x)
        x, _ = layer.forward(net.params, x)
    owner = {}
    for i, layer in enumerate(net.layers):
        for name in net.params:
            if name.split(".")[0] == layer.name:
                owner[name] = i
    errors = {}
    for name, value in net.params.items():
        i = owner[name]

        def f(v, name=name, i=i, shape=value.shape):
            saved = net.params[name]
            net.params[name] = v.reshape(shape)
            try:
                return L.cross_entropy(L.softmax(net.run(inputs[i], start=i)), labels)
            finally:
                net.params[name] = saved

        errors[name] = relative_error(grads[name], finite_diff(f, value))
    return errors


def check_end2end(rng, kinds=("relu", "fourier", "lc"), max_tries=500):
    errors = {}
    for kind in kinds:
        for _ in range(max_tries):
            net = L.build_model(tiny_config(kind, seed=int(rng.integers(2**31))))
            _randomise_activations(net, rng)
            batch = rng.uniform(0.0, 1.0, size=(2, 3, 8, 8))
            if kink_free(net, batch) and unsaturated(net.predict(batch)):
                break
        else:
            raise GradientCheckError(f"no kink-free, unsaturated draw found for {kind} in {max_tries} tries")
        labels = np.eye(L.N_CLASSES)[rng.integers(0, L.N_CLASSES, 2)]
        probs, cache = net.forward(batch)
        _, dlogits = L.loss_and_grad(probs, labels)
        grads = net.backward(cache, dlogits)
        for name, err in _compare_network(net, batch, labels, grads).items():
            errors[f"{kind}:{name}"] = err
    return errors


CHECKS = {
    "fourier": check_fourier,
    "lc": check_lc,
    "conv": check_conv,
    "dense": check_dense,
    "loss": check_loss,
    "end2end": check_end2end,
}


@dataclass
class CheckReport:
    component: str
    seed: int
    draws: int
    max_errors: dict = field(default_factory=dict)
    tolerance: float = TOLERANCE

    @property
    def passed(self) -> bool:
        return all(e < self.tolerance for e in self.max_errors.values())

    @property
    def worst(self) -> float:
        return max(self.max_errors.values(), default=0.0)

    def lines(self):
        status = "PASS" if self.passed else "FAIL"
        yield f"{self.component}: {status} (seed={self.seed}, draws={self.draws}, max rel err={self.worst:.3e})"
        for name, err in self.max_errors.items():
            yield f"  {name:<24s} {err:.3e}"


def check_report(component, seed=0, draws=100, check=None) -> CheckReport:
    """Run ``draws`` seeded random draws of one component check and keep the worst error per group."""
    if component not in CHECKS:
        raise ActgradError(f"unknown component {component!r}; expected one of {COMPONENTS}")
    check = check or CHECKS[component]
    report = CheckReport(component, seed, draws)
    for i in range(draws):
        for name, err in check(np.random.default_rng([seed, i])).items():
            report.max_errors[name] = max(err, report.max_errors.get(name, 0.0))
    return report
