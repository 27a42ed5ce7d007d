"""Receding-horizon simulation loop.

Each control period the active drones solve the horizon game from the
current state, apply the first control-period slice of the equilibrium
controls, and re-solve from the shifted state with time-shifted co-states as
the warm start.  Drones that reach their arrival radius brake to a stop in
one step and are removed from the game.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import (
    DroneSpec,
    ModelParams,
    make_grid,
    specs_sorted,
    stack_positions,
    stack_targets,
    stack_velocities,
)
from .solver import NumericalBlowup, SolveResult, solve_game

__all__ = [
    "StepSummary",
    "WorldState",
    "SimulationLog",
    "receding_horizon_step",
    "simulate",
]


@dataclass(frozen=True)
class StepSummary:
    """Solver diagnostics for one control period."""

    t: float
    n_active: int
    iterations: int
    final_error: float
    converged: bool


@dataclass
class WorldState:
    """Mutable simulation state between control periods."""

    t: float
    positions: np.ndarray        # (n, 3)
    velocities: np.ndarray       # (n, 3)
    arrived: np.ndarray          # (n,) bool, sticky
    warm: dict[int, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)


@dataclass
class SimulationLog:
    """Full record of a simulation run.

    ``times`` has one entry per integration boundary including t=0; ``r`` and
    ``v`` hold the state at those boundaries, ``u`` the control applied over
    the step starting there (zero row for the final boundary), ``arrived``
    the sticky arrival flags.  ``failure`` is None for a clean run.
    """

    specs: tuple[DroneSpec, ...]
    params: ModelParams
    times: np.ndarray            # (S+1,)
    r: np.ndarray                # (S+1, n, 3)
    v: np.ndarray                # (S+1, n, 3)
    u: np.ndarray                # (S+1, n, 3)
    arrived: np.ndarray          # (S+1, n) bool
    summaries: tuple[StepSummary, ...]
    failure: str | None = None

    @property
    def n_drones(self) -> int:
        return len(self.specs)

    @property
    def all_arrived(self) -> bool:
        return bool(self.arrived[-1].all())

    def arrival_times(self) -> np.ndarray:
        """First boundary time each drone is flagged arrived (nan if never)."""
        out = np.full(self.n_drones, np.nan)
        for i in range(self.n_drones):
            hits = np.nonzero(self.arrived[:, i])[0]
            if hits.size:
                out[i] = self.times[hits[0]]
        return out


def _assemble_warm(world: WorldState, active_ids: Sequence[int],
                   n_steps: int) -> tuple[np.ndarray, np.ndarray] | None:
    if any(i not in world.warm for i in active_ids):
        return None
    lam_r = np.stack([world.warm[i][0] for i in active_ids])
    lam_v = np.stack([world.warm[i][1] for i in active_ids])
    if lam_r.shape[1] != n_steps + 1:
        return None
    return lam_r, lam_v


def _shift_costates(result: SolveResult, shift: int):
    """Advance co-states by ``shift`` indices, zero-padding the tail."""
    lam_r = np.zeros_like(result.trajectory.lam_r)
    lam_v = np.zeros_like(result.trajectory.lam_v)
    lam_r[:, :-shift or None, :] = result.trajectory.lam_r[:, shift:, :]
    lam_v[:, :-shift or None, :] = result.trajectory.lam_v[:, shift:, :]
    return lam_r, lam_v


def receding_horizon_step(world: WorldState, specs: Sequence[DroneSpec],
                          obstacles, params: ModelParams):
    """Advance the world by one control period in place.

    Solves the horizon game for the non-arrived drones (on a horizon-local
    clock, so any time discounting measures time elapsed since the solve),
    applies the first control period of the equilibrium controls, and
    integrates arrived drones with a one-step braking control that freezes
    them.  Arrival flags update after every integration step, and a drone
    flagged mid-period brakes instead of following the rest of its plan.

    Returns ``(records, summary)`` where ``records`` is a list of
    ``(t, r, v, u, arrived)`` tuples for each completed substep and
    ``summary`` a :class:`StepSummary` (None when every drone has arrived).
    """
    n = len(specs)
    dt = params.dt
    substeps = params.substeps_per_control
    targets = stack_targets(specs)

    active = [i for i in range(n) if not world.arrived[i]]
    summary = None
    plan = None
    if active:
        grid = make_grid(0.0, params.horizon_T, dt)
        sub = [specs[i] for i in active]
        warm = _assemble_warm(world, [specs[i].id for i in active], grid.n_steps)
        result = solve_game(sub, (world.positions[active], world.velocities[active]),
                            obstacles, grid, params, warm_start=warm)
        plan = result.trajectory.u
        summary = StepSummary(t=world.t, n_active=len(active),
                              iterations=result.iterations,
                              final_error=result.final_error,
                              converged=result.converged)
        lam_r, lam_v = _shift_costates(result, substeps)
        for row, i in enumerate(active):
            world.warm[specs[i].id] = (lam_r[row], lam_v[row])

    records = []
    slot = {i: row for row, i in enumerate(active)}
    for k in range(substeps):
        u_step = np.zeros((n, 3))
        for i in range(n):
            if world.arrived[i]:
                u_step[i] = -world.velocities[i] / dt
            else:
                u_step[i] = plan[slot[i], k]
        v_old = world.velocities
        world.velocities = v_old + dt * u_step
        world.positions = world.positions + dt * v_old
        world.t += dt
        dist = np.linalg.norm(world.positions - targets, axis=-1)
        world.arrived = world.arrived | (dist <= params.arrival_radius)
        records.append((world.t, world.positions.copy(), world.velocities.copy(),
                        u_step, world.arrived.copy()))
    return records, summary


def simulate(specs: Sequence[DroneSpec], obstacles, params: ModelParams,
             t_max: float, on_period: Callable[[StepSummary], None] | None = None,
             ) -> SimulationLog:
    """Run the receding-horizon loop until everyone arrives or t_max.

    A numerical blowup in the game solver ends the run early; the returned
    log then carries the partial history and a ``failure`` message.
    """
    specs = specs_sorted(specs)
    n = len(specs)
    positions = stack_positions(specs)
    velocities = stack_velocities(specs)
    dist = np.linalg.norm(positions - stack_targets(specs), axis=-1)
    world = WorldState(t=0.0, positions=positions, velocities=velocities,
                       arrived=dist <= params.arrival_radius)

    times = [0.0]
    r_hist = [positions.copy()]
    v_hist = [velocities.copy()]
    u_hist = []
    arrived_hist = [world.arrived.copy()]
    summaries: list[StepSummary] = []
    failure = None

    while world.t < t_max - 1e-9 and not world.arrived.all():
        try:
            records, summary = receding_horizon_step(world, specs, obstacles, params)
        except NumericalBlowup as exc:
            failure = f"numerical blowup at t={world.t:g}: {exc}"
            break
        if summary is not None:
            summaries.append(summary)
            if on_period is not None:
                on_period(summary)
        for t, r, v, u, arrived in records:
            times.append(t)
            u_hist.append(u)
            r_hist.append(r)
            v_hist.append(v)
            arrived_hist.append(arrived)

    u_hist.append(np.zeros((n, 3)))
    return SimulationLog(specs=tuple(specs), params=params,
                         times=np.asarray(times),
                         r=np.stack(r_hist), v=np.stack(v_hist),
                         u=np.stack(u_hist),
                         arrived=np.stack(arrived_hist),
                         summaries=tuple(summaries), failure=failure)
