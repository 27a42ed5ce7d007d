"""Running-cost terms, their analytic position/velocity gradients, the
Hamiltonian, and discretized horizon costs.

Each drone pays, per unit time,

    L = alpha * L_stray + beta0 * L_prox + L_accel + beta1 * L_obs

where L_stray = 0.5*|v_des - v|^2 penalises deviating from the desired
velocity, L_prox = sum_j exp(-d_ij/d0) penalises closeness to other drones,
L_accel = 0.5*|u|^2 penalises control effort and L_obs = sum_k exp(-d_ik/d1)
penalises closeness to obstacles.  Gradients follow from differentiating
these definitions; the scalar entry points below delegate to the vectorized
kernels so there is a single source of truth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import (
    ConfigError,
    DroneSpec,
    HalfSpace,
    JointTrajectory,
    ModelParams,
    Obstacle,
    Vec3,
    VerticalCylinder,
    stack_speeds,
    stack_targets,
)

__all__ = [
    "CostBreakdown",
    "stray_cost",
    "proximity_cost",
    "accel_cost",
    "obstacle_distance",
    "obstacle_cost",
    "desired_velocity",
    "running_cost",
    "grad_running_cost_r",
    "grad_running_cost_v",
    "hamiltonian",
    "discrete_cost",
    "batch_desired_velocities",
    "batch_position_gradients",
]


@dataclass(frozen=True)
class CostBreakdown:
    """Weighted running-cost components and their total for one drone."""

    stray: float
    proximity: float
    accel: float
    obstacle: float
    total: float


def stray_cost(velocity: Vec3, v_desired: Vec3) -> float:
    """Half squared deviation of the velocity from the desired velocity."""
    d = v_desired - velocity
    return 0.5 * d.dot(d)


def proximity_cost(r_self: Vec3, r_others: Sequence[Vec3], d0: float, d_min: float) -> float:
    """Sum of exp(-d/d0) over the other drones, distances clamped at d_min."""
    total = 0.0
    for r in r_others:
        d = max((r - r_self).norm(), d_min)
        total += math.exp(-d / d0)
    return total


def accel_cost(control: Vec3) -> float:
    """Half squared magnitude of the commanded acceleration."""
    return 0.5 * control.dot(control)


def obstacle_distance(r: Vec3, obstacle: Obstacle, d_min: float) -> float:
    """Clamped standoff distance from a point to an obstacle surface.

    Vertical cylinders measure radial distance in the x-y plane; half spaces
    measure the signed distance along the outward normal.  Points on or
    inside the surface clamp to d_min.
    """
    if isinstance(obstacle, VerticalCylinder):
        raw = math.hypot(r.x - obstacle.center_x, r.y - obstacle.center_y) - obstacle.radius
    elif isinstance(obstacle, HalfSpace):
        raw = obstacle.normal.dot(r) - obstacle.offset
    else:
        raise ConfigError(f"unknown obstacle type {type(obstacle).__name__}")
    return max(raw, d_min)


def obstacle_cost(r: Vec3, obstacles: Sequence[Obstacle], d1: float, d_min: float) -> float:
    """Sum of exp(-d/d1) over the obstacles."""
    return sum(math.exp(-obstacle_distance(r, ob, d_min) / d1) for ob in obstacles)


def batch_desired_velocities(positions: np.ndarray, targets: np.ndarray,
                             speeds: np.ndarray, dt: float, d_min: float) -> np.ndarray:
    """Desired velocities toward each target for every leading index at once.

    ``positions`` is (..., n, 3) against ``targets`` (n, 3) and ``speeds``
    (n,).  At separations of at least one cruise step (speed*dt) the desired
    velocity points at the target with the cruise speed; inside that range it
    tapers to (target - r)/dt so the target is not overshot.
    """
    positions = np.asarray(positions, dtype=float)
    delta = targets - positions
    dist = np.linalg.norm(delta, axis=-1)
    unit = delta / np.maximum(dist, d_min)[..., None]
    cruise = (dist >= speeds * dt)[..., None]
    return np.where(cruise, speeds[:, None] * unit, delta / dt)


def desired_velocity(r: Vec3, target: Vec3, desired_speed: float, dt: float,
                     d_min: float) -> Vec3:
    """Scalar form of :func:`batch_desired_velocities` for one drone."""
    out = batch_desired_velocities(r.as_array().reshape(1, 3),
                                   target.as_array().reshape(1, 3),
                                   np.array([desired_speed]), dt, d_min)
    return Vec3.from_array(out[0])


def _cylinder_standoff(positions: np.ndarray, ob: VerticalCylinder, d_min: float):
    """Clamped standoff and steepest-decrease direction, vectorized.

    Returns (distance (...,), toward (..., 3)) where ``toward`` is the unit
    direction of steepest distance decrease (pointing at the axis).
    """
    offset = positions[..., :2] - np.array([ob.center_x, ob.center_y])
    radial = np.linalg.norm(offset, axis=-1)
    raw = radial - ob.radius
    toward = np.zeros_like(positions)
    toward[..., :2] = -offset / np.maximum(radial, d_min)[..., None]
    return raw, toward


def _half_space_standoff(positions: np.ndarray, ob: HalfSpace, d_min: float):
    normal = ob.normal.as_array()
    raw = positions @ normal - ob.offset
    toward = np.broadcast_to(-normal, positions.shape)
    return raw, toward


def batch_position_gradients(positions: np.ndarray, obstacles: Sequence[Obstacle],
                             params: ModelParams) -> np.ndarray:
    """Gradient of the weighted proximity and obstacle costs w.r.t. each
    drone's own position, for every leading index at once.

    ``positions`` is (..., n, 3).  The drone-drone term is
    (beta0/d0) * sum_j exp(-d_ij/d0) * n_ij with n_ij the clamped unit vector
    from drone i toward drone j: approaching an opponent raises the cost, so
    the gradient points at the opponent.  Obstacle terms are analogous with
    scale d1 and weight beta1; a drone on or inside an obstacle surface
    (clamped standoff) contributes zero gradient there.  The sum over j runs
    in ascending row order, so results are bitwise reproducible.
    """
    positions = np.asarray(positions, dtype=float)
    n = positions.shape[-2]
    diff = positions[..., None, :, :] - positions[..., :, None, :]  # [i, j] = r_j - r_i
    dist = np.sqrt(np.einsum("...ijk,...ijk->...ij", diff, diff))
    clamped = np.maximum(dist, params.d_min)
    w = np.exp(-clamped / params.d0) / clamped
    w[..., np.arange(n), np.arange(n)] = 0.0
    grad = (params.beta0 / params.d0) * np.einsum("...ij,...ijk->...ik", w, diff)

    for ob in obstacles:
        if isinstance(ob, VerticalCylinder):
            raw, toward = _cylinder_standoff(positions, ob, params.d_min)
        elif isinstance(ob, HalfSpace):
            raw, toward = _half_space_standoff(positions, ob, params.d_min)
        else:
            raise ConfigError(f"unknown obstacle type {type(ob).__name__}")
        active = raw >= params.d_min
        weight = np.where(active, np.exp(-np.maximum(raw, params.d_min) / params.d1), 0.0)
        grad = grad + (params.beta1 / params.d1) * weight[..., None] * toward
    return grad


def running_cost(ego: int, positions: Sequence[Vec3], velocity: Vec3, control: Vec3,
                 v_desired: Vec3, obstacles: Sequence[Obstacle],
                 params: ModelParams) -> CostBreakdown:
    """Evaluate the four running-cost components for one drone at one instant."""
    others = [p for j, p in enumerate(positions) if j != ego]
    stray = stray_cost(velocity, v_desired)
    prox = proximity_cost(positions[ego], others, params.d0, params.d_min)
    acc = accel_cost(control)
    obs = obstacle_cost(positions[ego], obstacles, params.d1, params.d_min)
    total = params.alpha * stray + params.beta0 * prox + acc + params.beta1 * obs
    return CostBreakdown(stray=stray, proximity=prox, accel=acc, obstacle=obs, total=total)


def grad_running_cost_r(ego: int, positions: Sequence[Vec3],
                        obstacles: Sequence[Obstacle], params: ModelParams) -> Vec3:
    """Position gradient of the weighted running cost for drone ``ego``.

    Only the proximity and obstacle terms depend on position; the desired
    velocity is treated as an exogenous schedule, so the stray term does not
    contribute here.
    """
    arr = np.array([[p.x, p.y, p.z] for p in positions], dtype=float)
    return Vec3.from_array(batch_position_gradients(arr, obstacles, params)[ego])


def grad_running_cost_v(velocity: Vec3, v_desired: Vec3, alpha: float) -> Vec3:
    """Velocity gradient of the weighted running cost: -alpha*(v_des - v)."""
    return (v_desired - velocity) * (-alpha)


def hamiltonian(t: float, ego: int, positions: Sequence[Vec3], velocity: Vec3,
                control: Vec3, lam_r: Vec3, lam_v: Vec3, v_desired: Vec3,
                obstacles: Sequence[Obstacle], params: ModelParams) -> float:
    """Discounted running cost plus co-states contracted with the dynamics.

    H = exp(-eta*t) * L + lam_r . v + lam_v . u, since position evolves with
    the velocity and velocity with the control.
    """
    L = running_cost(ego, positions, velocity, control, v_desired, obstacles, params).total
    return math.exp(-params.eta * t) * L + lam_r.dot(velocity) + lam_v.dot(control)


def discrete_cost(traj: JointTrajectory, ego: int, specs: Sequence[DroneSpec],
                  obstacles: Sequence[Obstacle], params: ModelParams,
                  v_desired: np.ndarray | None = None) -> float:
    """Left-endpoint Riemann sum of drone ``ego``'s discounted running cost.

    J = sum_{k=0}^{N-1} exp(-eta*t_k) * L(t_k) * dt over the horizon grid.
    ``v_desired`` optionally pins the desired-velocity schedule (an (N,3) or
    (N+1,3) array); by default it is recomputed from the trajectory positions
    and the drone's target, matching what the backward sweep sees.
    """
    grid = traj.grid
    N = grid.n_steps
    r_ego = traj.r[ego, :N]
    v_ego = traj.v[ego, :N]
    u_ego = traj.u[ego]
    if v_desired is None:
        spec = specs[ego]
        v_des = batch_desired_velocities(
            r_ego.reshape(N, 1, 3), spec.target.as_array().reshape(1, 3),
            np.array([spec.desired_speed]), grid.dt, params.d_min).reshape(N, 3)
    else:
        v_des = np.asarray(v_desired, dtype=float)[:N]

    stray = 0.5 * np.sum((v_des - v_ego) ** 2, axis=-1)
    accel = 0.5 * np.sum(u_ego ** 2, axis=-1)

    others = [j for j in range(traj.n_drones) if j != ego]
    if others:
        d = np.linalg.norm(traj.r[others, :N] - r_ego, axis=-1)
        prox = np.exp(-np.maximum(d, params.d_min) / params.d0).sum(axis=0)
    else:
        prox = np.zeros(N)

    obs = np.zeros(N)
    if obstacles:
        for k in range(N):
            obs[k] = obstacle_cost(Vec3.from_array(r_ego[k]), obstacles,
                                   params.d1, params.d_min)

    L = params.alpha * stray + params.beta0 * prox + accel + params.beta1 * obs
    discount = np.exp(-params.eta * grid.times()[:N])
    return float(np.sum(discount * L) * grid.dt)


def desired_velocity_schedule(traj: JointTrajectory, ego: int, spec: DroneSpec,
                              params: ModelParams) -> np.ndarray:
    """Desired velocities of drone ``ego`` along its own predicted positions."""
    N = traj.grid.n_steps
    return batch_desired_velocities(
        traj.r[ego].reshape(N + 1, 1, 3), spec.target.as_array().reshape(1, 3),
        np.array([spec.desired_speed]), traj.grid.dt, params.d_min).reshape(N + 1, 3)


def joint_position_gradients(r: np.ndarray, obstacles: Sequence[Obstacle],
                             params: ModelParams) -> np.ndarray:
    """Position gradients for all drones and all grid times.

    ``r`` is (n, N+1, 3) drone-major; the result has the same shape.
    """
    return batch_position_gradients(r.swapaxes(0, 1), obstacles, params).swapaxes(0, 1)


def joint_desired_velocities(r: np.ndarray, specs: Sequence[DroneSpec],
                             dt: float, d_min: float) -> np.ndarray:
    """Desired velocities for all drones and grid times, (n, N+1, 3)."""
    targets = stack_targets(specs)
    speeds = stack_speeds(specs)
    return batch_desired_velocities(r.swapaxes(0, 1), targets, speeds,
                                    dt, d_min).swapaxes(0, 1)
