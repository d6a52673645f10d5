"""Fixed and trainable activation functions with analytic gradients.

Two trainable families are provided:

* a truncated Fourier series ``A + sum_n a_n cos(n w x) + b_n sin(n w x)`` whose
  coefficients and fundamental frequency are learned;
* a sum-normalised linear combination of fixed candidate activations,
  ``sum_i w_i act_i(x) / sum_i w_i``.

Parameters may be shared by a whole layer (scalar coefficients) or held per
channel, in which case every array gains a leading group axis that broadcasts
against axis 1 of the input.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .errors import ActgradError, StateError

FIXED_KINDS = ("relu", "sigmoid", "tanh", "linear")
LC_CANDIDATES = FIXED_KINDS
FOURIER_RANK = 5
DENOM_EPS = 1e-3
OMEGA_MIN = 1e-3


class UnknownActivationError(ActgradError, KeyError):
    pass


def _check_kind(kind):
    if kind not in FIXED_KINDS:
        raise UnknownActivationError(f"unknown activation {kind!r}; expected one of {FIXED_KINDS}")


def fixed_forward(kind, x):
    _check_kind(kind)
    if kind == "relu":
        return np.maximum(x, 0.0)
    if kind == "sigmoid":
        return expit(x)
    if kind == "tanh":
        return np.tanh(x)
    return np.asarray(x, dtype=np.float64) * 1.0


def fixed_derivative(kind, x, y=None):
    """Derivative w.r.t. the input; ``y`` may carry an already computed forward value.

    ReLU uses the subgradient 0 at x == 0.
    """
    _check_kind(kind)
    x = np.asarray(x, dtype=np.float64)
    if kind == "relu":
        return (x > 0).astype(np.float64)
    if kind == "sigmoid":
        s = expit(x) if y is None else y
        return s * (1.0 - s)
    if kind == "tanh":
        t = np.tanh(x) if y is None else y
        return 1.0 - t * t
    return np.ones_like(x)


def _reduce(grad, group_shape, x_ndim):
    """Sum a per-element gradient into the shape of a (possibly per-channel) parameter."""
    if group_shape == ():
        return np.asarray(grad.sum())
    axes = tuple(i for i in range(x_ndim) if i != 1)
    return grad.sum(axis=axes)


def _bcast(param, x_ndim):
    """Align a parameter of shape () or (G,) against axis 1 of an x_ndim-rank input."""
    param = np.asarray(param)
    if param.ndim == 0:
        return param
    return param.reshape((1, -1) + (1,) * (x_ndim - 2))


@dataclass
class FourierParams:
    """Constant term, fundamental frequency, cosine and sine coefficients.

    ``A`` and ``omega`` have shape ``()`` (layer-shared) or ``(G,)``; ``a`` and
    ``b`` have shape ``(rank,)`` or ``(G, rank)``.
    """

    A: np.ndarray
    omega: np.ndarray
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=np.float64)
        self.omega = np.asarray(self.omega, dtype=np.float64)
        self.a = np.asarray(self.a, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        if self.a.shape != self.b.shape or self.a.ndim == 0:
            raise ActgradError(f"cosine/sine coefficient shapes differ: {self.a.shape} vs {self.b.shape}")
        if self.A.shape != self.a.shape[:-1] or self.omega.shape != self.A.shape:
            raise ActgradError("A and omega must match the group shape of a and b")
        for name in ("A", "omega", "a", "b"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ActgradError(f"non-finite Fourier parameter {name}")

    @property
    def rank(self) -> int:
        return self.a.shape[-1]

    @classmethod
    def initial(cls, rng, rank=FOURIER_RANK, groups=None):
        """Near-identity start: A=0, omega=1, b_1=1, other coefficients ~ N(0, 0.01^2)."""
        gshape = () if groups is None else (groups,)
        a = rng.normal(0.0, 0.01, size=gshape + (rank,))
        b = rng.normal(0.0, 0.01, size=gshape + (rank,))
        b[..., 0] = 1.0
        return cls(np.zeros(gshape), np.ones(gshape), a, b)

    def as_dict(self):
        return {"A": self.A, "omega": self.omega, "a": self.a, "b": self.b}


@dataclass
class FourierCache:
    x: np.ndarray
    cos: np.ndarray  # (rank, *x.shape)
    sin: np.ndarray


def _harmonics(p: FourierParams, x):
    """cos(n w x) and sin(n w x) for n = 1..rank, stacked on a new leading axis.

    Higher harmonics come from the angle-addition recurrence rather than fresh
    trig calls.
    """
    theta = _bcast(p.omega, x.ndim) * x
    cos = np.empty((p.rank,) + x.shape)
    sin = np.empty((p.rank,) + x.shape)
    c1, s1 = np.cos(theta, out=cos[0]), np.sin(theta, out=sin[0])
    tmp = theta  # reused as scratch
    for k in range(1, p.rank):
        np.multiply(cos[k - 1], c1, out=cos[k])
        cos[k] -= np.multiply(sin[k - 1], s1, out=tmp)
        np.multiply(sin[k - 1], c1, out=sin[k])
        sin[k] += np.multiply(cos[k - 1], s1, out=tmp)
    return cos, sin


def _coef(p_arr, k, x_ndim):
    return _bcast(p_arr[..., k], x_ndim)


def fourier_forward(p: FourierParams, x):
    """Evaluate the Fourier activation elementwise. Returns ``(y, cache)``."""
    x = np.asarray(x, dtype=np.float64)
    cos, sin = _harmonics(p, x)
    y = np.empty_like(x)
    y[...] = _bcast(p.A, x.ndim)
    tmp = np.empty_like(x)
    for k in range(p.rank):
        y += np.multiply(cos[k], _coef(p.a, k, x.ndim), out=tmp)
        y += np.multiply(sin[k], _coef(p.b, k, x.ndim), out=tmp)
    return y, FourierCache(x, cos, sin)


def fourier_backward(p: FourierParams, cache, upstream):
    """Gradients w.r.t. all Fourier parameters and the input.

    Per element, with harmonic index n and g the upstream gradient::

        dA    = g
        da_n  = g cos(n w x)
        db_n  = g sin(n w x)
        dw    = g * sum_n n x (-a_n sin(n w x) + b_n cos(n w x))
        dx    = g * sum_n n w (-a_n sin(n w x) + b_n cos(n w x))

    Parameter gradients are summed over every element sharing the parameter.
    """
    if cache is None:
        raise StateError("fourier_backward called before fourier_forward")
    g = np.asarray(upstream, dtype=np.float64)
    x = cache.x
    if g.shape != x.shape:
        raise StateError(f"upstream gradient shape {g.shape} does not match cached input {x.shape}")
    nd = x.ndim
    gshape = p.A.shape
    slope = np.zeros_like(x)
    da = np.empty_like(p.a)
    db = np.empty_like(p.b)
    for k in range(p.rank):
        n = k + 1.0
        slope += n * (-_coef(p.a, k, nd) * cache.sin[k] + _coef(p.b, k, nd) * cache.cos[k])
        da[..., k] = _reduce(g * cache.cos[k], gshape, nd)
        db[..., k] = _reduce(g * cache.sin[k], gshape, nd)
    grads = FourierParams(_reduce(g, gshape, nd), _reduce(g * x * slope, gshape, nd), da, db)
    dx = g * _bcast(p.omega, nd) * slope
    return grads, dx


def clamp_omega(omega):
    """Keep |omega| >= OMEGA_MIN, preserving sign (sign(0) taken as +1)."""
    omega = np.asarray(omega, dtype=np.float64)
    sign = np.where(omega < 0, -1.0, 1.0)
    return np.where(np.abs(omega) < OMEGA_MIN, sign * OMEGA_MIN, omega)


@dataclass
class LCParams:
    """Combination weights over an ordered tuple of fixed candidate activations."""

    w: np.ndarray
    candidates: tuple = field(default=LC_CANDIDATES)

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=np.float64)
        self.candidates = tuple(self.candidates)
        for kind in self.candidates:
            _check_kind(kind)
        if self.w.ndim == 0 or self.w.shape[-1] != len(self.candidates):
            raise ActgradError(f"weights {self.w.shape} do not match {len(self.candidates)} candidates")

    @classmethod
    def initial(cls, groups=None, candidates=LC_CANDIDATES):
        m = len(candidates)
        shape = (m,) if groups is None else (groups, m)
        return cls(np.full(shape, 1.0 / m), candidates)


def lc_denominator(w):
    """Sum of weights, pushed away from zero to magnitude DENOM_EPS if needed."""
    total = np.asarray(w, dtype=np.float64).sum(axis=-1)
    sign = np.where(total < 0, -1.0, 1.0)
    return np.where(np.abs(total) >= DENOM_EPS, total, sign * DENOM_EPS)


def guard_lc_weights(w):
    """Shift weights uniformly so that |sum(w)| >= DENOM_EPS."""
    w = np.asarray(w, dtype=np.float64)
    total = w.sum(axis=-1, keepdims=True)
    target = lc_denominator(w)[..., None]
    return np.where(np.abs(total) >= DENOM_EPS, w, w + (target - total) / w.shape[-1])


@dataclass
class LCCache:
    x: np.ndarray
    acts: list
    denom: np.ndarray
    clamped: np.ndarray
    y: np.ndarray


def lc_forward(p: LCParams, x):
    """Evaluate the normalised linear combination. Returns ``(y, cache)``."""
    x = np.asarray(x, dtype=np.float64)
    nd = x.ndim
    acts = [fixed_forward(kind, x) for kind in p.candidates]
    num = _bcast(p.w[..., 0], nd) * acts[0]
    for i in range(1, len(acts)):
        num = num + _bcast(p.w[..., i], nd) * acts[i]
    total = p.w.sum(axis=-1)
    denom = lc_denominator(p.w)
    y = num / _bcast(denom, nd)
    return y, LCCache(x, acts, denom, np.abs(total) < DENOM_EPS, y)


def lc_backward(p: LCParams, cache, upstream):
    """Gradients w.r.t. the combination weights and the input.

    Per element: ``dw_k = g (act_k(x) - act(x)) / D`` and
    ``dx = g sum_i w_i act_i'(x) / D``. Inside the clamp region D no longer depends
    on the weights, so there ``dw_k = g act_k(x) / D``.
    """
    if cache is None:
        raise StateError("lc_backward called before lc_forward")
    g = np.asarray(upstream, dtype=np.float64)
    if g.shape != cache.x.shape:
        raise StateError(f"upstream gradient shape {g.shape} does not match cached input {cache.x.shape}")
    nd = cache.x.ndim
    gshape = p.w.shape[:-1]
    denom = _bcast(cache.denom, nd)
    live = _bcast(np.where(cache.clamped, 0.0, 1.0), nd)
    dw = np.empty_like(p.w)
    slope = np.zeros_like(cache.x)
    for k, kind in enumerate(p.candidates):
        dw[..., k] = _reduce(g * (cache.acts[k] - live * cache.y) / denom, gshape, nd)
        slope += _bcast(p.w[..., k], nd) * fixed_derivative(kind, cache.x, cache.acts[k])
    dx = g * slope / denom
    return dw, dx
