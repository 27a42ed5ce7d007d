"""Independent numerical checks of the analytic machinery.

Three families: central finite differences against the analytic cost
gradients, finite-difference sensitivities of the discretized horizon cost
against the backward-sweep co-states, and exhaustive best-response search on
tiny control grids against the fixed-point solver.  These recompute
everything from the cost definitions, never from the gradient or sweep code
they are checking.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .core import (
    ConfigError,
    DroneSpec,
    DroneState,
    HalfSpace,
    HorizonGrid,
    JointTrajectory,
    ModelParams,
    Vec3,
    VerticalCylinder,
    make_grid,
    stack_positions,
    stack_velocities,
    unit_toward,
)
from .cost import (
    discrete_cost,
    desired_velocity_schedule,
    grad_running_cost_r,
    grad_running_cost_v,
    running_cost,
)
from .solver import backward_sweep, forward_sweep, solve_game

__all__ = [
    "CheckReport",
    "BruteForceResult",
    "BestResponseCycle",
    "fd_cost_gradients",
    "fd_adjoint_check",
    "brute_force_nash",
    "standard_adjoint_reports",
    "standard_brute_force_reports",
]

REL_FLOOR = 1e-6   # denominator guard: below this, compare at FD-noise scale
FD_STEP = 1e-5     # central-difference step (m or m/s)


@dataclass(frozen=True)
class CheckReport:
    """Outcome of one oracle check."""

    name: str
    samples: int
    max_relative_error: float
    tolerance: float
    passed: bool


class BestResponseCycle(RuntimeError):
    """Exhaustive best-response iteration failed to settle."""


def _relative_error(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    return float(np.linalg.norm(a - b) / max(na, nb, REL_FLOOR))


def _random_gradient_config(rng: np.random.Generator, params: ModelParams):
    """Draw drones and obstacles at interaction-relevant separations.

    Drones form a random chain with neighbor spacing 0.15..0.8 m so every
    drone's exponential proximity gradient is orders of magnitude above the
    finite-difference noise floor (distances of several metres would make the
    check compare pure roundoff).  All separations stay above 0.05 m, well
    clear of both the d_min clamp and the difference step.
    """
    n = int(rng.integers(2, 6))
    while True:
        positions = np.empty((n, 3))
        positions[0] = rng.uniform(-1.0, 1.0, size=3)
        for i in range(1, n):
            step = rng.normal(size=3)
            step *= float(rng.uniform(0.15, 0.8)) / np.linalg.norm(step)
            positions[i] = positions[i - 1] + step
        diffs = positions[None, :, :] - positions[:, None, :]
        dist = np.linalg.norm(diffs, axis=-1)
        dist[np.arange(n), np.arange(n)] = np.inf
        if dist.min() >= 0.05:
            break
    velocities = rng.uniform(-2.0, 2.0, size=(n, 3))
    v_desired = rng.uniform(-2.0, 2.0, size=(n, 3))

    obstacles = []
    for _ in range(int(rng.integers(0, 3))):
        if rng.random() < 0.5:
            anchor = positions[int(rng.integers(0, n)), :2]
            for _ in range(50):
                radius = float(rng.uniform(0.3, 1.5))
                direction = rng.normal(size=2)
                direction /= np.linalg.norm(direction)
                center = anchor + direction * (radius + float(rng.uniform(0.05, 0.6)))
                radial = np.linalg.norm(positions[:, :2] - center, axis=-1)
                if np.all(radial > radius + 0.02):
                    obstacles.append(VerticalCylinder(float(center[0]),
                                                      float(center[1]), radius))
                    break
        else:
            raw = rng.normal(size=3)
            normal = Vec3.from_array(raw / np.linalg.norm(raw))
            heights = positions @ normal.as_array()
            offset = float(heights.min() - rng.uniform(0.05, 0.8))
            obstacles.append(HalfSpace(normal, offset))
    return positions, velocities, v_desired, obstacles


def fd_cost_gradients(seed: int = 0, n_samples: int = 200,
                      params: ModelParams | None = None, tolerance: float = 1e-5,
                      grad_r_fn: Callable | None = None,
                      grad_v_fn: Callable | None = None) -> CheckReport:
    """Compare the analytic cost gradients against central finite differences.

    Draws ``n_samples`` random configurations of 2..5 drones and 0..2
    obstacles, every pairwise distance at least 10*d_min and every drone well
    clear of obstacle surfaces, and differences the total weighted running
    cost with step 1e-5.  ``grad_r_fn``/``grad_v_fn`` exist so tests can
    inject corrupted gradients as a negative control.
    """
    params = params or ModelParams()
    grad_r_fn = grad_r_fn or grad_running_cost_r
    grad_v_fn = grad_v_fn or grad_running_cost_v
    rng = np.random.default_rng(seed)
    control = Vec3.zero()
    worst = 0.0

    for _ in range(n_samples):
        pos_arr, vel_arr, vdes_arr, obstacles = _random_gradient_config(rng, params)
        positions = [Vec3.from_array(p) for p in pos_arr]
        n = len(positions)
        for i in range(n):
            velocity = Vec3.from_array(vel_arr[i])
            v_des = Vec3.from_array(vdes_arr[i])

            def cost_at(r_i: Vec3, v_i: Vec3) -> float:
                pts = list(positions)
                pts[i] = r_i
                return running_cost(i, pts, v_i, control, v_des,
                                    obstacles, params).total

            fd_r = np.empty(3)
            fd_v = np.empty(3)
            for axis, e in enumerate((Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1))):
                dr = e * FD_STEP
                fd_r[axis] = (cost_at(positions[i] + dr, velocity)
                              - cost_at(positions[i] - dr, velocity)) / (2 * FD_STEP)
                fd_v[axis] = (cost_at(positions[i], velocity + dr)
                              - cost_at(positions[i], velocity - dr)) / (2 * FD_STEP)

            ana_r = grad_r_fn(i, positions, obstacles, params).as_array()
            ana_v = grad_v_fn(velocity, v_des, params.alpha).as_array()
            worst = max(worst, _relative_error(ana_r, fd_r),
                        _relative_error(ana_v, fd_v))

    return CheckReport(name="fd_cost_gradients", samples=n_samples,
                       max_relative_error=worst, tolerance=tolerance,
                       passed=worst <= tolerance)


def _roll_single(r0: np.ndarray, v0: np.ndarray, u: np.ndarray, dt: float):
    """Explicit-Euler rollout of one drone under a fixed control sequence."""
    N = u.shape[0]
    r = np.empty((N + 1, 3))
    v = np.empty((N + 1, 3))
    r[0], v[0] = r0, v0
    for k in range(N):
        v[k + 1] = v[k] + dt * u[k]
        r[k + 1] = r[k] + dt * v[k]
    return r, v


def fd_adjoint_check(specs: Sequence[DroneSpec], obstacles,
                     params: ModelParams, warmup_iters: int = 1,
                     converge: bool = False,
                     tolerance: float = 1e-3) -> CheckReport:
    """Check backward-sweep co-states against cost sensitivities.

    Builds a trajectory (a few plain fixed-point iterations from zero
    co-states, or the converged solve when ``converge``), then compares
    lam_r[0] and lam_v[0] of every drone against central finite differences
    of its discretized horizon cost under perturbations of its initial
    position and velocity.  The perturbed drone re-rolls under its unchanged
    control sequence while the other drones and the desired-velocity
    schedule stay frozen, which is exactly the dependency structure the
    backward sweep differentiates.

    Requires dt <= 0.01 and at most 200 steps so discretization error stays
    well under the tolerance.  Note the sweep is the exact adjoint of the
    right-endpoint sum while discrete_cost is the left-endpoint sum; the
    residual is dt-scaled by the horizon-end gradients and dt*lam_r[0], so
    meaningful configurations keep those small (quiet horizon ends).
    """
    if params.dt > 0.01 + 1e-12:
        raise ConfigError("adjoint check needs dt <= 0.01")
    grid = make_grid(0.0, params.horizon_T, params.dt)
    if grid.n_steps > 200:
        raise ConfigError("adjoint check needs at most 200 steps")

    p0 = stack_positions(specs)
    v0 = stack_velocities(specs)
    n, N, dt = len(specs), grid.n_steps, grid.dt

    if converge:
        result = solve_game(specs, (p0, v0), obstacles, grid, params)
        r, v, u = result.trajectory.r, result.trajectory.v, result.trajectory.u
    else:
        lam_v = np.zeros((n, N + 1, 3))
        for _ in range(max(warmup_iters, 0)):
            r, v, u = forward_sweep(p0, v0, lam_v, grid, params)
            _, lam_v = backward_sweep(r, v, specs, obstacles, grid, params)
        r, v, u = forward_sweep(p0, v0, lam_v, grid, params)
    lam_r, lam_v = backward_sweep(r, v, specs, obstacles, grid, params)

    base = JointTrajectory(grid=grid, ids=tuple(s.id for s in specs),
                           r=r, v=v, u=u,
                           lam_r=np.zeros_like(r), lam_v=np.zeros_like(v))
    worst = 0.0
    samples = 0
    for i in range(n):
        frozen_vdes = desired_velocity_schedule(base, i, specs[i], params)

        def cost_with_initial(r0i: np.ndarray, v0i: np.ndarray) -> float:
            ri, vi = _roll_single(r0i, v0i, u[i], dt)
            rr = r.copy()
            vv = v.copy()
            rr[i], vv[i] = ri, vi
            traj = JointTrajectory(grid=grid, ids=base.ids, r=rr, v=vv, u=u,
                                   lam_r=base.lam_r, lam_v=base.lam_v)
            return discrete_cost(traj, i, specs, obstacles, params,
                                 v_desired=frozen_vdes)

        fd_r = np.empty(3)
        fd_v = np.empty(3)
        for axis in range(3):
            e = np.zeros(3)
            e[axis] = FD_STEP
            fd_r[axis] = (cost_with_initial(r[i, 0] + e, v[i, 0])
                          - cost_with_initial(r[i, 0] - e, v[i, 0])) / (2 * FD_STEP)
            fd_v[axis] = (cost_with_initial(r[i, 0], v[i, 0] + e)
                          - cost_with_initial(r[i, 0], v[i, 0] - e)) / (2 * FD_STEP)

        worst = max(worst, _relative_error(lam_r[i, 0], fd_r),
                    _relative_error(lam_v[i, 0], fd_v))
        samples += 2

    return CheckReport(name="fd_adjoint_check", samples=samples,
                       max_relative_error=worst, tolerance=tolerance,
                       passed=worst <= tolerance)


@dataclass
class BruteForceResult:
    """Approximate equilibrium found by exhaustive best response."""

    costs: list[float]
    controls: np.ndarray      # (n, N, 3); only the x components are nonzero
    r: np.ndarray             # (n, N+1, 3)
    v: np.ndarray
    rounds: int
    converged: bool


def brute_force_nash(specs: Sequence[DroneSpec], obstacles,
                     grid: HorizonGrid, params: ModelParams,
                     levels: Sequence[float] = (-1.0, -0.5, 0.0, 0.5, 1.0),
                     max_rounds: int = 100) -> BruteForceResult:
    """Exhaustive best-response equilibrium on a tiny 1D control grid.

    Motion is restricted to the x axis (y and z controls are zero), so the
    search space per drone is len(levels)**N sequences.  Drones take turns
    replacing their plan with the cheapest response to the others' current
    plans (ties break toward the earlier sequence in lexicographic level
    order); the loop stops when a full round changes nothing.  Limits: at
    most 2 drones, 4 steps and 5 levels.  Raises :class:`BestResponseCycle`
    after ``max_rounds`` rounds without settling.
    """
    n, N = len(specs), grid.n_steps
    if n > 2 or N > 4 or len(levels) > 5:
        raise ConfigError("brute force oracle is limited to 2 drones, 4 steps, 5 levels")

    candidates = np.array(list(itertools.product(levels, repeat=N)), dtype=float)
    p0 = stack_positions(specs)
    v0 = stack_velocities(specs)
    ids = tuple(s.id for s in specs)

    def full_controls(seq: np.ndarray) -> np.ndarray:
        u = np.zeros((N, 3))
        u[:, 0] = seq
        return u

    plans = [np.zeros(N) for _ in range(n)]
    rolled = [_roll_single(p0[i], v0[i], full_controls(plans[i]), grid.dt)
              for i in range(n)]

    def joint(ego: int, seq: np.ndarray) -> JointTrajectory:
        r = np.stack([rolled[j][0] for j in range(n)])
        v = np.stack([rolled[j][1] for j in range(n)])
        u = np.stack([full_controls(plans[j]) for j in range(n)])
        ri, vi = _roll_single(p0[ego], v0[ego], full_controls(seq), grid.dt)
        r[ego], v[ego] = ri, vi
        u[ego] = full_controls(seq)
        return JointTrajectory(grid=grid, ids=ids, r=r, v=v, u=u,
                               lam_r=np.zeros_like(r), lam_v=np.zeros_like(v))

    converged = False
    rounds = 0
    while rounds < max_rounds:
        rounds += 1
        changed = False
        for ego in range(n):
            costs = np.array([discrete_cost(joint(ego, seq), ego, specs,
                                            obstacles, params)
                              for seq in candidates])
            best = candidates[int(np.argmin(costs))]
            if not np.array_equal(best, plans[ego]):
                plans[ego] = best
                rolled[ego] = _roll_single(p0[ego], v0[ego],
                                           full_controls(best), grid.dt)
                changed = True
        if not changed:
            converged = True
            break
    if not converged:
        raise BestResponseCycle(f"no equilibrium after {max_rounds} rounds")

    r = np.stack([rolled[j][0] for j in range(n)])
    v = np.stack([rolled[j][1] for j in range(n)])
    u = np.stack([full_controls(plans[j]) for j in range(n)])
    final = JointTrajectory(grid=grid, ids=ids, r=r, v=v, u=u,
                            lam_r=np.zeros_like(r), lam_v=np.zeros_like(v))
    costs = [discrete_cost(final, i, specs, obstacles, params) for i in range(n)]
    return BruteForceResult(costs=costs, controls=u, r=r, v=v,
                            rounds=rounds, converged=True)


def _cruise_spec(drone_id: int, position: Vec3, target: Vec3,
                 speed: float = 1.0, group: int = 0) -> DroneSpec:
    """Drone starting exactly at its desired cruise velocity."""
    velocity = unit_toward(position, target) * speed
    return DroneSpec(id=drone_id, initial=DroneState(position, velocity),
                     target=target, desired_speed=speed, group=group)


def _renamed(name: str, rep: CheckReport) -> CheckReport:
    return CheckReport(name=name, samples=rep.samples,
                       max_relative_error=rep.max_relative_error,
                       tolerance=rep.tolerance, passed=rep.passed)


def standard_adjoint_reports(tolerance: float = 1e-3,
                             seed: int = 0) -> list[CheckReport]:
    """The adjoint checks run by the check command and the acceptance suite.

    All at dt=0.01: an isolated cruising drone (both sides near zero), an
    isolated drone starting off its desired velocity, and seeded random
    two-drone configurations.  The random pairs keep several metres of
    separation: the co-state of the velocity differs from the sensitivity of
    the discretized cost by exactly dt*lam_r[0], so strongly interacting
    pairs carry an irreducible O(dt) relative residual; pair interaction
    gradients are covered separately by fd_cost_gradients at close range.
    """
    reports = []
    params = ModelParams(dt=0.01, horizon_T=2.0)

    cruise = _cruise_spec(0, Vec3(0.0, 0.0, 1.0), Vec3(60.0, 0.0, 1.0))
    reports.append(_renamed("fd_adjoint_isolated_cruise",
                            fd_adjoint_check([cruise], (), params,
                                             warmup_iters=1,
                                             tolerance=tolerance)))

    offset = DroneSpec(id=0,
                       initial=DroneState(Vec3(0.0, 0.0, 1.0),
                                          Vec3(0.5, 0.3, 0.0)),
                       target=Vec3(60.0, 0.0, 1.0), desired_speed=1.0)
    reports.append(_renamed("fd_adjoint_isolated_offset",
                            fd_adjoint_check([offset], (), params,
                                             warmup_iters=0,
                                             tolerance=tolerance)))

    rng = np.random.default_rng(seed)
    worst = 0.0
    samples = 0
    for _ in range(10):
        specs = _random_pair(rng, params.horizon_T)
        rep = fd_adjoint_check(specs, (), params, warmup_iters=0,
                               tolerance=tolerance)
        worst = max(worst, rep.max_relative_error)
        samples += rep.samples
    reports.append(CheckReport(name="fd_adjoint_random_pairs",
                               samples=samples, max_relative_error=worst,
                               tolerance=tolerance, passed=worst <= tolerance))
    return reports


def _random_pair(rng: np.random.Generator, horizon_T: float) -> list[DroneSpec]:
    """Two drones a few metres apart with random velocities and far targets.

    Separation stays above 2 m along the ballistic roll so the co-states are
    dominated by the stray term; velocities keep a clear offset from the
    desired velocity so lam_v[0] sits well above the endpoint residual.
    """
    while True:
        positions = rng.uniform(-5.0, 5.0, size=(2, 3))
        velocities = rng.uniform(-1.0, 1.0, size=(2, 3))
        taus = np.linspace(0.0, horizon_T, 41)
        gaps = [np.linalg.norm((positions[0] + t * velocities[0])
                               - (positions[1] + t * velocities[1]))
                for t in taus]
        if min(gaps) < 2.0:
            continue
        specs = []
        for i in range(2):
            direction = rng.normal(size=3)
            direction /= np.linalg.norm(direction)
            target = positions[i] + direction * float(rng.uniform(60.0, 100.0))
            if np.linalg.norm(direction - velocities[i]) < 0.8:
                break
            specs.append(DroneSpec(
                id=i,
                initial=DroneState(Vec3.from_array(positions[i]),
                                   Vec3.from_array(velocities[i])),
                target=Vec3.from_array(target), desired_speed=1.0, group=i))
        if len(specs) == 2:
            return specs


def _solver_vs_brute(name: str, specs, params: ModelParams, n_steps: int,
                     levels, tolerance: float) -> CheckReport:
    """Cost gap between the fixed-point solver and the exhaustive oracle.

    max_relative_error carries the largest per-drone absolute cost gap;
    the tolerance is the coarse-grid slack.
    """
    grid = make_grid(0.0, n_steps * params.dt, params.dt)
    oracle = brute_force_nash(specs, (), grid, params, levels=levels)
    result = solve_game(specs, (stack_positions(specs), stack_velocities(specs)),
                        (), grid, params)
    gaps = [abs(discrete_cost(result.trajectory, i, specs, (), params)
                - oracle.costs[i]) for i in range(len(specs))]
    worst = max(gaps)
    return CheckReport(name=name, samples=len(specs),
                       max_relative_error=worst, tolerance=tolerance,
                       passed=worst <= tolerance and result.converged)


def standard_brute_force_reports(tolerance: float = 0.1) -> list[CheckReport]:
    """Solver-vs-exhaustive comparisons on the tiny 1D instances."""
    levels = (-1.0, -0.5, 0.0, 0.5, 1.0)
    reports = []

    cruise = _cruise_spec(0, Vec3(0.0, 0.0, 1.0), Vec3(30.0, 0.0, 1.0))
    reports.append(_solver_vs_brute("brute_force_single_cruise", [cruise],
                                    ModelParams(), 4, levels, tolerance))

    rest = DroneSpec(id=0, initial=DroneState(Vec3(0.0, 0.0, 1.0), Vec3.zero()),
                     target=Vec3(30.0, 0.0, 1.0), desired_speed=1.0)
    reports.append(_solver_vs_brute("brute_force_single_rest", [rest],
                                    ModelParams(alpha=10.0), 4, levels,
                                    tolerance))

    # Laterally offset so the pass is mild: the exhaustive oracle only
    # searches x-axis controls, so the costs only agree when neither
    # equilibrium leans hard on transverse dodging.
    pair = [
        _cruise_spec(0, Vec3(-3.0, -0.3, 1.0), Vec3(10.0, -0.3, 1.0)),
        _cruise_spec(1, Vec3(3.0, 0.3, 1.0), Vec3(-10.0, 0.3, 1.0), group=1),
    ]
    reports.append(_solver_vs_brute("brute_force_pair_passing", pair,
                                    ModelParams(max_iters=5000), 4, levels,
                                    tolerance))
    return reports
