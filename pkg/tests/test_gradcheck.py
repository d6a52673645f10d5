import numpy as np
import pytest

from actgrad import activations as act
from actgrad import gradcheck as G
from actgrad.errors import ActgradError, GradientCheckError


def test_quadratic_oracle():
    g = G.finite_diff(lambda v: float(np.sum(v ** 2)), [1.0, 2.0])
    assert np.max(np.abs(g - [2.0, 4.0])) <= 1e-8


def test_constant_function_gives_zero():
    assert np.array_equal(G.finite_diff(lambda v: 3.0, np.ones(4)), np.zeros(4))


def test_sine_oracle():
    x = np.linspace(-3, 3, 13)
    g = G.finite_diff(lambda v: float(np.sum(np.sin(v))), x)
    assert np.max(np.abs(g - np.cos(x))) <= 1e-8


def test_non_finite_value_is_reported():
    with pytest.raises(GradientCheckError) as err, np.errstate(invalid="ignore"):
        G.finite_diff(lambda v: float(np.log(v[1])), [1.0, 1e-6])
    assert err.value.coordinate == 1


def test_relative_error_floor():
    assert G.relative_error([0.0], [1e-12]) == pytest.approx(1e-4)
    assert G.relative_error([1.0], [-1.0]) == 2.0


@pytest.mark.parametrize("component", ["fourier", "lc", "conv", "dense", "loss"])
def test_components_pass(component):
    report = G.check_report(component, seed=1, draws=20)
    assert report.passed, list(report.lines())


def test_end2end_passes_for_all_activations():
    report = G.check_report("end2end", seed=3, draws=3)
    assert report.passed, list(report.lines())
    kinds = {name.split(":")[0] for name in report.max_errors}
    assert kinds == {"relu", "fourier", "lc"}


def flipped_input_grad(p, cache, upstream):
    grads, dx = act.fourier_backward(p, cache, upstream)
    return grads, -dx


def textbook_coefficient_grads(p, cache, upstream):
    """The coefficient derivatives as sometimes printed: n w sin / cos with swapped roles."""
    grads, dx = act.fourier_backward(p, cache, upstream)
    g = np.asarray(upstream)
    n = np.arange(1, p.rank + 1)
    a = np.array([np.sum(g * -(k * p.omega) * cache.sin[k - 1]) for k in n])
    b = np.array([np.sum(g * (k * p.omega) * cache.cos[k - 1]) for k in n])
    return act.FourierParams(grads.A, grads.omega, a, b), dx


def test_sign_mutation_is_caught():
    report = G.check_report("fourier", seed=0, draws=10,
                            check=lambda rng: G.check_fourier(rng, backward=flipped_input_grad))
    assert not report.passed
    assert report.max_errors["input"] == pytest.approx(2.0, abs=1e-6)
    assert report.max_errors["A"] < G.TOLERANCE


def test_printed_coefficient_formulas_fail():
    report = G.check_report("fourier", seed=0, draws=10,
                            check=lambda rng: G.check_fourier(rng, backward=textbook_coefficient_grads))
    assert not report.passed
    assert report.max_errors["a"] > 0.5 and report.max_errors["b"] > 0.5


def test_unknown_component():
    with pytest.raises(ActgradError):
        G.check_report("pool")


def test_report_lines():
    report = G.check_report("loss", seed=0, draws=2)
    lines = list(report.lines())
    assert lines[0].startswith("loss: PASS")
    assert len(lines) == 1 + len(report.max_errors)
