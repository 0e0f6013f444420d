"""Particle swarm search over joint transmit/receive layouts with AO refinement.

Each particle holds the stacked ``(N_t + N_r) x 2`` antenna coordinates.
Fitness is the objective reached by the AO loop started from the particle,
and the particle then jumps to the AO-refined layout (memetic update).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .metrics import Beamformers
from .position import AoResult, ao_loop, ao_resume, default_beamformers
from .scenario import (AntennaLayout, ChannelRealization, ConfigError, ScenarioConfig,
                       check_layout, layout_random, rng_stream)


def inertia(i: int, n_iters: int, w_max: float, w_min: float) -> float:
    """Linearly decreasing inertia weight: ``w_max`` at i=0, ``w_min`` at i=n_iters."""
    if n_iters <= 0:
        return w_max
    return w_max - (w_max - w_min) * i / n_iters


def velocity_update(positions: np.ndarray, velocity: np.ndarray, personal_best: np.ndarray,
                    global_best: np.ndarray, omega: float, c1: float, c2: float,
                    rng: np.random.Generator) -> np.ndarray:
    """``omega v + c1 r1 (global - p) + c2 r2 (personal - p)`` with scalar r1, r2 ~ U(0, 1)."""
    r1, r2 = rng.random(2)
    return (omega * velocity + c1 * r1 * (global_best - positions)
            + c2 * r2 * (personal_best - positions))


def project(positions: np.ndarray, region) -> np.ndarray:
    """Clamp every coordinate to the feasible rectangle."""
    x0, x1, y0, y1 = region
    out = np.array(positions, dtype=float, copy=True)
    out[..., 0] = np.clip(out[..., 0], x0, x1)
    out[..., 1] = np.clip(out[..., 1], y0, y1)
    return out


def fitness(real: ChannelRealization, positions: np.ndarray, cfg: ScenarioConfig,
            bf0: Beamformers | None = None) -> AoResult | None:
    """AO result for a stacked layout, or ``None`` when the spacing constraint fails."""
    layout = AntennaLayout.from_stacked(positions, cfg.n_tx)
    if not check_layout(layout, cfg):
        return None
    return ao_loop(real, layout, cfg, bf0, max_ao_iters=cfg.max_ao_iters_pso)


@dataclass
class Particle:
    positions: np.ndarray
    velocity: np.ndarray
    best_positions: np.ndarray
    best_fitness: float = -math.inf
    fitness: float | None = None
    result: AoResult | None = None
    best_result: AoResult | None = None


@dataclass
class PsoTraceRow:
    iteration: int
    best_fitness: float
    mean_fitness: float
    n_infeasible: int


@dataclass
class SwarmState:
    particles: list[Particle]
    global_best_pos: np.ndarray | None = None
    global_best_fitness: float = -math.inf
    global_best_result: AoResult | None = None
    iteration: int = 0
    trace: list[PsoTraceRow] = field(default_factory=list)


@dataclass
class PsoResult:
    layout: AntennaLayout
    bf: Beamformers
    objective: float
    trace: list[PsoTraceRow]
    swarm_best: AoResult
    final: AoResult
    n_evaluations: int

    @property
    def best_trace(self) -> list[float]:
        return [r.best_fitness for r in self.trace]


def _evaluate(particle: Particle, new_pos: np.ndarray, real, cfg, bf0) -> int:
    """Move ``particle`` to ``new_pos`` and score it; returns 1 if AO ran."""
    if particle.fitness is not None and np.array_equal(new_pos, particle.positions):
        # unchanged layout: keep the score and refined state already computed here
        return 0
    res = fitness(real, new_pos, cfg, bf0)
    if res is None:
        particle.positions, particle.fitness, particle.result = new_pos, None, None
        return 0
    particle.positions = res.layout.stacked()
    particle.fitness, particle.result = res.objective, res
    return 1


def _update_bests(state: SwarmState) -> None:
    for p in state.particles:
        if p.fitness is None:
            continue
        if p.fitness > p.best_fitness:
            p.best_fitness, p.best_positions, p.best_result = p.fitness, p.positions.copy(), p.result
        if p.fitness > state.global_best_fitness:
            state.global_best_fitness = p.fitness
            state.global_best_pos = p.positions.copy()
            state.global_best_result = p.result


def _record(state: SwarmState) -> None:
    vals = [p.fitness for p in state.particles if p.fitness is not None]
    state.trace.append(PsoTraceRow(state.iteration, state.global_best_fitness,
                                   float(np.mean(vals)) if vals else math.nan,
                                   len(state.particles) - len(vals)))


def init_swarm(cfg: ScenarioConfig, index: int = 0,
               init_positions: list[np.ndarray] | None = None) -> SwarmState:
    """Particles at random feasible layouts (or given positions) with zero velocity."""
    if init_positions is None:
        init_positions = [layout_random(cfg, rng_stream(cfg.seed, "pso-init", index, n)).stacked()
                          for n in range(cfg.n_particles)]
    parts = []
    for pos in init_positions:
        pos = np.array(pos, dtype=float)
        parts.append(Particle(pos, np.zeros_like(pos), pos.copy()))
    return SwarmState(parts)


def pso_run(real: ChannelRealization, cfg: ScenarioConfig, index: int = 0,
            bf0: Beamformers | None = None,
            init_positions: list[np.ndarray] | None = None) -> PsoResult:
    """Swarm search; ``index`` selects the random streams (normally the realization index).

    The final answer resumes the AO run of the global best with the full
    outer-iteration cap, so a swarm that never moves reproduces
    :func:`maisac.position.ao_loop` on its initial layout.
    """
    bf0 = default_beamformers(cfg, index) if bf0 is None else bf0
    state = init_swarm(cfg, index, init_positions)
    n_eval = 0
    for p in state.particles:
        n_eval += _evaluate(p, p.positions, real, cfg, bf0)
    _update_bests(state)
    if state.global_best_result is None:
        raise ConfigError("no feasible particle in the initial swarm")
    _record(state)

    streams = [rng_stream(cfg.seed, "pso-velocity", index, n) for n in range(len(state.particles))]
    for i in range(1, cfg.pso_iters + 1):
        state.iteration = i
        omega = inertia(i - 1, cfg.pso_iters, cfg.pso_w_max, cfg.pso_w_min)
        for p, rng in zip(state.particles, streams):
            p.velocity = velocity_update(p.positions, p.velocity, p.best_positions,
                                         state.global_best_pos, omega, cfg.pso_c1, cfg.pso_c2, rng)
            new_pos = project(p.positions + p.velocity, cfg.region)
            n_eval += _evaluate(p, new_pos, real, cfg, bf0)
        _update_bests(state)
        _record(state)

    best = state.global_best_result
    final = ao_resume(real, best, cfg, cfg.max_ao_iters)
    return PsoResult(final.layout, final.bf, final.objective, state.trace, best, final, n_eval)
