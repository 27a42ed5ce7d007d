"""Joint fixed-point solver for the coupled drone plans.

Each drone's optimal plan, given everyone else's, satisfies a two-point
boundary problem: states integrate forward from the current world, co-states
integrate backward from a zero terminal condition, and the control is
u = -lam_v.  The joint solution is computed as a fixed point: all drones
sweep forward with the current relaxed co-states, sweep backward to get
fresh co-states, and the relaxed iterate moves a fraction ``relaxation_a``
toward the fresh value.  The iteration error is the sup-norm distance
between the pre-relaxation iterate and the fresh co-states, so a converged
solve means the sweeps map the iterate (essentially) onto itself.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import (
    ConfigError,
    DroneSpec,
    HorizonGrid,
    JointTrajectory,
    ModelParams,
    Vec3,
    specs_sorted,
)
from .cost import joint_desired_velocities, joint_position_gradients

__all__ = [
    "NumericalBlowup",
    "SolveResult",
    "optimal_control",
    "forward_sweep",
    "backward_sweep",
    "relax",
    "iteration_error",
    "solve_game",
]

BLOWUP_LIMIT = 1e12


class NumericalBlowup(RuntimeError):
    """A sweep produced non-finite values or magnitudes beyond BLOWUP_LIMIT."""

    def __init__(self, message: str, trace: list[float] | None = None):
        super().__init__(message)
        self.trace = list(trace) if trace else []

    @property
    def iterations(self) -> int:
        return len(self.trace)


@dataclass
class SolveResult:
    """Outcome of one joint solve."""

    trajectory: JointTrajectory
    iterations: int
    final_error: float
    trace: list[float]
    converged: bool


def optimal_control(lambda_v: Vec3) -> Vec3:
    """Acceleration minimising the Hamiltonian: the negated velocity co-state."""
    return lambda_v * -1.0


def _check_magnitudes(label: str, *arrays: np.ndarray) -> None:
    for arr in arrays:
        m = np.max(np.abs(arr)) if arr.size else 0.0
        if not np.isfinite(m) or m > BLOWUP_LIMIT:
            raise NumericalBlowup(f"{label} produced magnitude {m!r}")


def forward_sweep(positions0: np.ndarray, velocities0: np.ndarray,
                  lam_v: np.ndarray, grid: HorizonGrid, params: ModelParams):
    """Integrate all drones forward under u = -lam_v with explicit Euler.

    Velocities update with the step's control and positions advance with the
    pre-update velocity:

        u[k] = -lam_v[k];  v[k+1] = v[k] + dt*u[k];  r[k+1] = r[k] + dt*v[k]

    Returns (r, v, u) with r, v of shape (n, N+1, 3) and u (n, N, 3).
    """
    n, N, dt = positions0.shape[0], grid.n_steps, grid.dt
    u = -lam_v[:, :N, :]
    r = np.empty((n, N + 1, 3))
    v = np.empty((n, N + 1, 3))
    r[:, 0] = positions0
    v[:, 0] = velocities0
    # keep the exact step recurrence: validate() checks these identities
    for k in range(N):
        v[:, k + 1] = v[:, k] + dt * u[:, k]
        r[:, k + 1] = r[:, k] + dt * v[:, k]
    _check_magnitudes("forward sweep", r, v)
    return r, v, u


def backward_sweep(r: np.ndarray, v: np.ndarray, specs: Sequence[DroneSpec],
                   obstacles, grid: HorizonGrid, params: ModelParams):
    """Integrate co-states backward from the zero terminal condition.

    With zero terminal cost, lam_r(T) = lam_v(T) = 0.  Stepping back through
    the grid, the position co-state accumulates the proximity/obstacle
    position gradients and the velocity co-state accumulates the stray-cost
    velocity gradient plus the position co-state (because position moves
    with velocity):

        lam_r[k-1] = lam_r[k] + dt * e^(-eta*t_k) * gr[k]
        lam_v[k-1] = lam_v[k] + dt * (e^(-eta*t_k) * gv[k] + lam_r[k])

    where gr is the position gradient, gv = -alpha*(v_des - v), and v_des is
    the desired velocity evaluated at the predicted positions.  Only the cost
    integrand is discounted; the coupling term lam_r is not.
    """
    n, N, dt = r.shape[0], grid.n_steps, grid.dt
    g_r = joint_position_gradients(r, obstacles, params)
    v_des = joint_desired_velocities(r, specs, dt, params.d_min)
    g_v = -params.alpha * (v_des - v)
    if params.eta > 0.0:
        discount = np.exp(-params.eta * grid.times())
    else:
        discount = np.ones(N + 1)

    lam_r = np.zeros((n, N + 1, 3))
    lam_v = np.zeros((n, N + 1, 3))
    # reversed cumsums accumulate right-to-left exactly like the k loop
    w_r = dt * discount[1:, None] * g_r[:, 1:]
    lam_r[:, :N] = np.cumsum(w_r[:, ::-1], axis=1)[:, ::-1]
    w_v = dt * (discount[1:, None] * g_v[:, 1:] + lam_r[:, 1:])
    lam_v[:, :N] = np.cumsum(w_v[:, ::-1], axis=1)[:, ::-1]
    _check_magnitudes("backward sweep", lam_r, lam_v)
    return lam_r, lam_v


def relax(previous: np.ndarray, fresh: np.ndarray, a: float) -> np.ndarray:
    """Convex combination (1-a)*previous + a*fresh of co-state arrays."""
    return (1.0 - a) * previous + a * fresh


def iteration_error(current: tuple, fresh: tuple) -> float:
    """Sup-norm distance between two (lam_r, lam_v) co-state pairs."""
    err = 0.0
    for cur, new in zip(current, fresh):
        if cur.size:
            err = max(err, float(np.max(np.abs(cur - new))))
    return err


def solve_game(specs: Sequence[DroneSpec], initial: tuple,
               obstacles, grid: HorizonGrid, params: ModelParams,
               warm_start: tuple | None = None) -> SolveResult:
    """Solve the joint planning game over one horizon.

    ``initial`` is a pair of (n, 3) arrays holding the current positions and
    velocities, row-aligned with ``specs``.  All drones are updated
    synchronously each iteration from the same relaxed co-state iterate (a
    Jacobi-style sweep), which keeps the result independent of drone
    ordering.  Starts from zero co-states unless a ``warm_start`` pair of
    (lam_r, lam_v) arrays is given.  Returns the trajectory induced by the
    final relaxed co-states; ``converged`` records whether the last
    iteration error reached ``params.eps``.  Raises
    :class:`NumericalBlowup` (carrying the partial error trace) if a sweep
    leaves the trusted numeric range.
    """
    if len(specs) == 0:
        raise ConfigError("solve_game needs at least one drone")
    order = specs_sorted(specs)
    if [s.id for s in order] != [s.id for s in specs]:
        raise ConfigError("specs must be given in ascending id order")
    n, N = len(specs), grid.n_steps
    p0 = np.asarray(initial[0], dtype=float).reshape(n, 3)
    v0 = np.asarray(initial[1], dtype=float).reshape(n, 3)

    if warm_start is None:
        Lr = np.zeros((n, N + 1, 3))
        Lv = np.zeros((n, N + 1, 3))
    else:
        Lr = np.array(warm_start[0], dtype=float, copy=True)
        Lv = np.array(warm_start[1], dtype=float, copy=True)
        if Lr.shape != (n, N + 1, 3) or Lv.shape != (n, N + 1, 3):
            raise ConfigError("warm start shape does not match drones and grid")

    trace: list[float] = []
    try:
        while True:
            r, v, u = forward_sweep(p0, v0, Lv, grid, params)
            lr, lv = backward_sweep(r, v, specs, obstacles, grid, params)
            err = iteration_error((Lr, Lv), (lr, lv))
            trace.append(err)
            Lr = relax(Lr, lr, params.relaxation_a)
            Lv = relax(Lv, lv, params.relaxation_a)
            if err <= params.eps or len(trace) >= params.max_iters:
                break
    except NumericalBlowup as e:
        e.trace = trace + e.trace
        raise

    r, v, u = forward_sweep(p0, v0, Lv, grid, params)
    traj = JointTrajectory(grid=grid, ids=tuple(s.id for s in specs),
                           r=r, v=v, u=u, lam_r=Lr, lam_v=Lv)
    return SolveResult(trajectory=traj, iterations=len(trace),
                       final_error=trace[-1], trace=trace,
                       converged=trace[-1] <= params.eps)
