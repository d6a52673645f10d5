"""Particle swarm training of a network's flattened parameter vector.

Fitness of a parameter vector on an evaluation batch is ``1 / (1 + SSE / 2n)``
where SSE sums the squared difference between softmax outputs and one-hot labels
over all n samples and classes, so fitness lies in (0, 1].
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import layers as L
from .data import Dataset, subset
from .errors import ActgradError, ShapeError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SwarmConfig:
    n_particles: int = 10
    generations: int = 50
    inertia: float = 0.7
    c1: float = 2.0
    c2: float = 2.0
    velocity_clamp: float | None = 0.5  # None disables clamping
    eval_subset_size: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.n_particles < 2:
            raise ActgradError("a swarm needs at least 2 particles")
        if self.generations < 1:
            raise ActgradError("at least one generation is required")
        if self.velocity_clamp is not None and self.velocity_clamp <= 0:
            raise ActgradError("velocity clamp must be positive")


@dataclass
class Particle:
    position: np.ndarray
    velocity: np.ndarray
    local_best_position: np.ndarray
    local_best_fitness: float = -np.inf

    @classmethod
    def at(cls, position):
        position = np.asarray(position, dtype=np.float64)
        return cls(position.copy(), np.zeros_like(position), position.copy())


@dataclass
class GenerationRecord:
    generation: int
    best_fitness: float
    val_accuracy: float


def fitness_from_probs(probs, targets) -> float:
    probs = np.asarray(probs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    n = probs.shape[0]
    if n == 0:
        raise ActgradError("fitness needs at least one sample")
    if probs.shape != targets.shape:
        raise ShapeError(f"outputs {probs.shape} vs targets {targets.shape}", probs.shape, targets.shape)
    return 1.0 / (1.0 + ((probs - targets) ** 2).sum() / (2.0 * n))


def fitness(net: L.Network, params, images, targets) -> float:
    """Load ``params`` into ``net`` and score it on the evaluation batch."""
    if len(images) == 0:
        raise ActgradError("fitness needs at least one sample")
    net.unflatten(params)
    return fitness_from_probs(net.predict(images), targets)


def pso_update(p: Particle, global_best, cfg: SwarmConfig, rng) -> Particle:
    """One velocity/position step; ``rng.random(size)`` supplies per-component uniforms."""
    global_best = np.asarray(global_best, dtype=np.float64)
    n = p.position.shape[0]
    for name, v in (("velocity", p.velocity), ("local best", p.local_best_position), ("global best", global_best)):
        if v.shape != (n,):
            raise ShapeError(f"{name} has shape {v.shape}, position has {(n,)}", v.shape, (n,))
    r1 = rng.random(n)
    r2 = rng.random(n)
    v = (cfg.inertia * p.velocity
         + cfg.c1 * r1 * (p.local_best_position - p.position)
         + cfg.c2 * r2 * (global_best - p.position))
    if cfg.velocity_clamp is not None:
        v = np.clip(v, -cfg.velocity_clamp, cfg.velocity_clamp)
    return Particle(p.position + v, v, p.local_best_position, p.local_best_fitness)


def run_swarm(score, initial_positions, cfg: SwarmConfig, rng, on_generation=None):
    """Generic swarm loop.

    Each generation scores every particle, updates local and global bests on strict
    improvement, reports, then moves the particles. Returns ``(best_position,
    best_fitness, particles, history)`` with one ``(generation, best_fitness)``
    entry per generation.
    """
    particles = [Particle.at(x) for x in initial_positions]
    best_position, best_fitness = None, -np.inf
    history = []
    for gen in range(1, cfg.generations + 1):
        for p in particles:
            f = score(p.position)
            if f > p.local_best_fitness:
                p.local_best_fitness = f
                p.local_best_position = p.position.copy()
            if f > best_fitness:
                best_fitness = f
                best_position = p.position.copy()
        history.append((gen, best_fitness))
        if on_generation is not None:
            on_generation(gen, best_position, best_fitness)
        if gen < cfg.generations:
            particles = [pso_update(p, best_position, cfg, rng) for p in particles]
    return best_position, best_fitness, particles, history


def particle_start(model_cfg: L.ModelConfig, swarm_seed, k) -> np.ndarray:
    seed = int(np.random.SeedSequence([swarm_seed, k]).generate_state(1)[0])
    return L.build_model(L.ModelConfig.from_dict(dict(model_cfg.to_dict(), seed=seed))).flatten()


def pso_train(cfg: SwarmConfig, model_cfg: L.ModelConfig, train: Dataset, val: Dataset):
    """Train a network by swarm search; returns ``(best_params, history)``.

    All particles are scored on one fixed, class-stratified evaluation subset of
    ``train``. Particles start from independent He-uniform initialisations and
    zero velocity.
    """
    eval_n = min(cfg.eval_subset_size, len(train))
    eval_set = subset(train, eval_n, cfg.seed)
    targets = eval_set.one_hot
    net = L.build_model(model_cfg)
    starts = [particle_start(model_cfg, cfg.seed, k) for k in range(cfg.n_particles)]
    history = []
    last = {"position": None, "accuracy": 0.0}

    def on_generation(gen, position, best):
        if last["position"] is None or not np.array_equal(position, last["position"]):
            net.unflatten(position)
            last["accuracy"] = L.accuracy(net.predict(val.images), val.labels)
            last["position"] = position
        history.append(GenerationRecord(gen, float(best), last["accuracy"]))
        log.info("generation %d best fitness %.6f val acc %.4f", gen, best, last["accuracy"])

    rng = np.random.default_rng(cfg.seed)
    best, _, _, _ = run_swarm(
        lambda x: fitness(net, x, eval_set.images, targets), starts, cfg, rng, on_generation
    )
    return best, history
