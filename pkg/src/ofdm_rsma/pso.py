"""Annulus-constrained particle swarm search for the analog precoder.

Particles move in the complex entries of the analog matrix. Each iteration
shrinks the admissible modulus range [t/T, 1] around the unit circle, so the
final swarm satisfies the constant-modulus constraint exactly, while the
fitness zeroes out candidates that break the power budget or leave no
feasible common-rate allocation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rsma
from .channel import FreqChannel, SystemConfig

POWER_SLACK = 1e-9


@dataclass(frozen=True)
class PsoConfig:
    swarm: int = 400
    iters: int = 100
    c1: float = 1.4
    c2: float = 1.4
    omega_max: float = 0.9
    omega_min: float = 0.4
    seed: int | None = None

    def __post_init__(self):
        if self.swarm < 1 or self.iters < 1:
            raise ValueError("swarm and iters must be >= 1")
        if not self.omega_max >= self.omega_min > 0:
            raise ValueError("need omega_max >= omega_min > 0")


@dataclass
class PsoState:
    positions: np.ndarray  # (I, Nt, K) complex
    velocities: np.ndarray
    best_positions: np.ndarray
    best_fitness: np.ndarray  # (I,)
    global_best: np.ndarray  # (Nt, K)
    global_best_fitness: float
    iteration: int = 0
    history: list[float] = field(default_factory=list)


@dataclass
class PsoResult:
    analog: np.ndarray
    fitness: float
    history: np.ndarray
    feasible: bool
    digital: np.ndarray  # possibly rescaled copy used during the search


def rsma_evaluator(h: FreqChannel, digital: np.ndarray, plan: rsma.ClusterPlan,
                   cfg: SystemConfig):
    """Batched fitness: sum rate, or zero when power or QoS feasibility fails."""
    r_min = cfg.r_min_array

    def evaluate(positions: np.ndarray) -> np.ndarray:
        stacked = np.einsum("ltk,nkj->lntj", positions, digital)
        power = np.sum(np.abs(stacked) ** 2, axis=(1, 2, 3))
        coef = np.einsum("kmnp,lpmj->lknpj", h.H, stacked)
        total, rate_c, rate_p = rsma.sum_rate_batch(coef, plan, cfg.sigma2)
        deficits = np.maximum(r_min - rate_p.sum(axis=-1), 0.0).sum(axis=-1)
        ok = (power <= cfg.Pt + POWER_SLACK) & (deficits <= rate_c.sum(axis=-1) + 1e-12)
        return np.where(ok, total, 0.0)

    return evaluate


def fitness(
    analog: np.ndarray,
    digital: np.ndarray,
    h: FreqChannel,
    plan: rsma.ClusterPlan,
    cfg: SystemConfig,
) -> float:
    """Fitness of one analog-precoder candidate under the current digital stage."""
    return float(rsma_evaluator(h, digital, plan, cfg)(analog[None])[0])


def pso_step(
    state: PsoState, omega: float, rng: np.random.Generator,
    c1: float = 1.4, c2: float = 1.4,
) -> PsoState:
    """One velocity/position update with per-entry cognitive and social draws."""
    shape = state.positions.shape
    b1 = rng.uniform(size=shape)
    b2 = rng.uniform(size=shape)
    state.velocities = (
        omega * state.velocities
        + c1 * b1 * (state.best_positions - state.positions)
        + c2 * b2 * (state.global_best[None] - state.positions)
    )
    state.positions = state.positions + state.velocities
    return state


def _project_annulus(
    values: np.ndarray, d_in: float, d_out: float | None, rng: np.random.Generator
) -> np.ndarray:
    """Radially clamp complex entries into [d_in, d_out], keeping phases.

    Entries at exactly zero get a fresh uniform phase at modulus d_in, where
    the radial projection is undefined.
    """
    radius = np.abs(values)
    zero = radius == 0.0
    if np.any(zero):
        phases = np.exp(2j * np.pi * rng.uniform(size=int(zero.sum())))
        values = values.copy()
        values[zero] = d_in * phases
        radius = np.abs(values)
    out = values
    low = radius < d_in
    if np.any(low):
        out = np.where(low, values / radius * d_in, out)
    if d_out is not None:
        high = radius > d_out
        if np.any(high):
            out = np.where(high, values / radius * d_out, out)
    return out


def boundary_compress(
    state: PsoState, t: int, t_max: int, rng: np.random.Generator
) -> PsoState:
    """Confine positions to the annulus [t/t_max, 1]; pull personal bests
    outward to the inner boundary (their stored fitness is kept as is)."""
    d_in = t / t_max
    state.positions = _project_annulus(state.positions, d_in, 1.0, rng)
    state.best_positions = _project_annulus(state.best_positions, d_in, None, rng)
    return state


def init_state(shape: tuple[int, int], pso_cfg: PsoConfig,
               rng: np.random.Generator) -> PsoState:
    """Random positions across the full unit disk annulus, small random velocities."""
    n = (pso_cfg.swarm,) + shape
    radius = rng.uniform(size=n)
    phase = rng.uniform(0.0, 2.0 * np.pi, size=n)
    positions = radius * np.exp(1j * phase)
    scale = 0.1 / np.sqrt(2.0)
    velocities = rng.normal(scale=scale, size=n) + 1j * rng.normal(scale=scale, size=n)
    return PsoState(
        positions=positions,
        velocities=velocities,
        best_positions=positions.copy(),
        best_fitness=np.full(pso_cfg.swarm, -np.inf),
        global_best=positions[0].copy(),
        global_best_fitness=-np.inf,
    )


def _record_bests(state: PsoState, fit: np.ndarray) -> None:
    improved = fit > state.best_fitness
    state.best_fitness = np.where(improved, fit, state.best_fitness)
    state.best_positions[improved] = state.positions[improved]
    idx = int(np.argmax(state.best_fitness))
    state.global_best = state.best_positions[idx].copy()
    state.global_best_fitness = float(state.best_fitness[idx])
    state.history.append(state.global_best_fitness)


def run_abc_pso(
    h: FreqChannel,
    digital: np.ndarray,
    plan: rsma.ClusterPlan,
    cfg: SystemConfig,
    pso_cfg: PsoConfig,
    evaluator_factory=None,
) -> PsoResult:
    """Search the analog precoder for a fixed digital stage.

    Inertia decays linearly from omega_max to omega_min; the annulus floor
    rises as t/T so the returned matrix is unit-modulus. If no particle is
    feasible at initialization the digital precoder is rescaled once into the
    power budget; a swarm that still never finds positive fitness is returned
    flagged infeasible.

    ``evaluator_factory(digital)`` builds the batched fitness; the default is
    the rate-splitting evaluator.
    """
    rng = np.random.default_rng(pso_cfg.seed)
    digital = np.array(digital, dtype=complex)
    if evaluator_factory is None:
        evaluator_factory = lambda d: rsma_evaluator(h, d, plan, cfg)
    evaluator = evaluator_factory(digital)
    state = init_state((h.n_tx, cfg.K), pso_cfg, rng)

    fit = evaluator(state.positions)
    if np.max(fit) <= 0.0:
        stacked = np.einsum("ltk,nkj->lntj", state.positions, digital)
        worst = float(np.max(np.sum(np.abs(stacked) ** 2, axis=(1, 2, 3))))
        if worst > 0.0:
            digital *= np.sqrt(cfg.Pt / (worst * (1.0 + 1e-9)))
            evaluator = evaluator_factory(digital)
            fit = evaluator(state.positions)
    _record_bests(state, fit)

    for t in range(1, pso_cfg.iters + 1):
        omega = pso_cfg.omega_max - (t / pso_cfg.iters) * (
            pso_cfg.omega_max - pso_cfg.omega_min
        )
        pso_step(state, omega, rng, pso_cfg.c1, pso_cfg.c2)
        boundary_compress(state, t, pso_cfg.iters, rng)
        fit = evaluator(state.positions)
        _record_bests(state, fit)
        state.iteration = t

    return PsoResult(
        analog=state.global_best,
        fitness=state.global_best_fitness,
        history=np.asarray(state.history),
        feasible=state.global_best_fitness > 0.0,
        digital=digital,
    )
