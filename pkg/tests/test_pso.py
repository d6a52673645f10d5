import numpy as np
import pytest

from actgrad import layers as L
from actgrad.errors import ActgradError
from actgrad.pso import (GenerationRecord, Particle, SwarmConfig, fitness, fitness_from_probs, pso_train,
                         pso_update, run_swarm)


class ConstRng:
    """Stand-in generator whose uniforms are all one value."""

    def __init__(self, value):
        self.value = value

    def random(self, size=None):
        return np.full(size, self.value)


def toy_score(x):
    return 1.0 / (1.0 + np.sum((x - np.array([1.5, -2.0])) ** 2))


def test_fitness_examples():
    t = np.eye(10)[[1, 2, 3]]
    assert fitness_from_probs(t, t) == 1.0
    y = np.zeros((1, 10))
    y[0, 4] = 1.0
    t = np.zeros((1, 10))
    t[0, 5] = 1.0
    assert fitness_from_probs(y, t) == 0.5


def test_network_fitness_matches_straight_line_formula(rng):
    net = L.build_model(L.ModelConfig("small", "relu", seed=4))
    images = rng.uniform(size=(12, 3, 32, 32))
    targets = np.eye(10)[rng.integers(0, 10, 12)]
    pos = net.flatten()
    got = fitness(net, pos, images, targets)
    logits = net.logits(images)
    total = 0.0
    for i in range(12):
        e = np.exp(logits[i] - logits[i].max())
        p = e / e.sum()
        for j in range(10):
            total += (p[j] - targets[i, j]) ** 2
    assert abs(got - 1.0 / (1.0 + total / (2 * 12))) <= 1e-12


def test_scalar_update_with_clamp():
    cfg = SwarmConfig(inertia=0.7, velocity_clamp=0.5)
    p = Particle(np.array([1.0]), np.array([0.5]), np.array([2.0]))
    q = pso_update(p, np.array([3.0]), cfg, ConstRng(1.0))
    assert q.velocity[0] == 0.5
    assert q.position[0] == 1.5


def test_fixed_point_is_stationary(rng):
    x = rng.normal(size=5)
    p = Particle(x.copy(), np.zeros(5), x.copy())
    q = pso_update(p, x.copy(), SwarmConfig(), rng)
    assert np.array_equal(q.position, x) and not np.any(q.velocity)


def test_update_matches_reference_evaluator(rng):
    cfg = SwarmConfig(velocity_clamp=None, inertia=0.7)
    x, v, pl, pg = rng.normal(size=(4, 10))
    q = pso_update(Particle(x, v, pl), pg, cfg, ConstRng(0.37))
    ref_v = np.empty(10)
    for i in range(10):
        ref_v[i] = 0.7 * v[i] + 2.0 * 0.37 * (pl[i] - x[i]) + 2.0 * 0.37 * (pg[i] - x[i])
    assert np.max(np.abs(q.velocity - ref_v)) <= 1e-15
    assert np.max(np.abs(q.position - (x + ref_v))) <= 1e-15


def test_config_invariants():
    with pytest.raises(ActgradError):
        SwarmConfig(n_particles=1)
    with pytest.raises(ActgradError):
        SwarmConfig(generations=0)
    with pytest.raises(ActgradError):
        SwarmConfig(velocity_clamp=0.0)


def test_toy_quadratic_reaches_high_fitness():
    cfg = SwarmConfig(n_particles=10, generations=50, seed=0)
    rng = np.random.default_rng(cfg.seed)
    starts = rng.uniform(-5, 5, size=(10, 2))
    _, best, particles, history = run_swarm(toy_score, starts, cfg, rng)
    assert best > 0.99
    fs = [f for _, f in history]
    assert len(fs) == 50 and all(b >= a for a, b in zip(fs, fs[1:]))


def test_bests_are_running_maxima():
    cfg = SwarmConfig(generations=30)
    rng = np.random.default_rng(7)
    starts = rng.uniform(-5, 5, size=(10, 2))
    seen = []

    def score(x):
        seen.append(toy_score(x))
        return seen[-1]

    _, best, final, history = run_swarm(score, starts, cfg, rng)
    per_particle = np.array(seen).reshape(30, 10)
    running = np.maximum.accumulate(per_particle, axis=0)
    assert [p.local_best_fitness for p in final] == running[-1].tolist()
    assert [f for _, f in history] == running.max(axis=1).tolist()
    assert best == per_particle.max()
    for p in final:
        assert p.local_best_fitness == toy_score(p.local_best_position)


def test_training_reproducible_from_seed(small_sets):
    train, val = small_sets
    cfg = SwarmConfig(n_particles=3, generations=3, eval_subset_size=50, seed=9)
    model = L.ModelConfig("small", "relu", hidden=8, input_hw=32, filters=(2, 2, 2))
    a, ha = pso_train(cfg, model, train, val.take(np.arange(50)))
    b, hb = pso_train(cfg, model, train, val.take(np.arange(50)))
    assert np.array_equal(a, b) and ha == hb
    assert len(ha) == 3 and all(isinstance(r, GenerationRecord) for r in ha)
    fs = [r.best_fitness for r in ha]
    assert all(y >= x for x, y in zip(fs, fs[1:]))
