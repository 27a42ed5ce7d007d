"""Tests for the running-cost pieces, their gradients and the discrete cost."""

import math

import numpy as np
import pytest

from droneflow.core import (
    DroneSpec,
    DroneState,
    HalfSpace,
    JointTrajectory,
    ModelParams,
    Vec3,
    VerticalCylinder,
    make_grid,
)
from droneflow.cost import (
    accel_cost,
    batch_desired_velocities,
    batch_position_gradients,
    desired_velocity,
    desired_velocity_schedule,
    discrete_cost,
    grad_running_cost_r,
    grad_running_cost_v,
    hamiltonian,
    joint_desired_velocities,
    joint_position_gradients,
    obstacle_cost,
    obstacle_distance,
    proximity_cost,
    running_cost,
    stray_cost,
)

BOTTLENECK = (VerticalCylinder(0.0, -2.5, 2.0), VerticalCylinder(0.0, 2.5, 2.0))


def _spec(i, r, target, speed=1.0, v=(0.0, 0.0, 0.0)):
    return DroneSpec(id=i, initial=DroneState(Vec3(*r), Vec3(*v)),
                     target=Vec3(*target), desired_speed=speed)


def _rollout(r0, v0, u, dt):
    """Integrate explicit-Euler states from stacked initial conditions."""
    n, N = u.shape[0], u.shape[1]
    r = np.zeros((n, N + 1, 3))
    v = np.zeros((n, N + 1, 3))
    r[:, 0], v[:, 0] = r0, v0
    for k in range(N):
        v[:, k + 1] = v[:, k] + dt * u[:, k]
        r[:, k + 1] = r[:, k] + dt * v[:, k]
    return r, v


def test_stray_cost():
    assert stray_cost(Vec3(1.0, 0.0, 0.0), Vec3(1.0, 0.0, 0.0)) == 0.0
    assert stray_cost(Vec3.zero(), Vec3(1.0, 0.0, 0.0)) == pytest.approx(0.5)
    assert stray_cost(Vec3(0.0, 2.0, 0.0), Vec3(0.0, -1.0, 0.0)) == pytest.approx(4.5)


def test_proximity_cost():
    # one neighbour at exactly d0 contributes exp(-1)
    p = proximity_cost(Vec3.zero(), [Vec3(0.1, 0.0, 0.0)], d0=0.1, d_min=1e-6)
    assert p == pytest.approx(math.exp(-1.0))
    # coincident drones clamp at d_min instead of diverging
    p = proximity_cost(Vec3.zero(), [Vec3.zero()], d0=0.1, d_min=1e-6)
    assert p == pytest.approx(math.exp(-1e-5))
    assert proximity_cost(Vec3.zero(), [], d0=0.1, d_min=1e-6) == 0.0


def test_accel_cost():
    assert accel_cost(Vec3.zero()) == 0.0
    assert accel_cost(Vec3(3.0, 0.0, 4.0)) == pytest.approx(12.5)


def test_obstacle_distance_cylinder():
    cyl = VerticalCylinder(center_x=0.0, center_y=-2.5, radius=2.0)
    # point at the origin sits 0.5 m from the surface
    assert obstacle_distance(Vec3.zero(), cyl, 1e-6) == pytest.approx(0.5)
    # z is ignored for vertical cylinders
    assert obstacle_distance(Vec3(0.0, 0.0, 7.0), cyl, 1e-6) == pytest.approx(0.5)
    # inside the cylinder clamps to d_min
    assert obstacle_distance(Vec3(0.0, -2.5, 0.0), cyl, 1e-6) == 1e-6


def test_obstacle_distance_half_space():
    floor = HalfSpace(normal=Vec3(0.0, 0.0, 1.0), offset=0.0)
    assert obstacle_distance(Vec3(5.0, 5.0, 2.0), floor, 1e-6) == pytest.approx(2.0)
    assert obstacle_distance(Vec3(0.0, 0.0, -1.0), floor, 1e-6) == 1e-6


def test_obstacle_cost_bottleneck_midpoint():
    # equidistant between the two bottleneck cylinders: 2*exp(-0.5/0.1)
    c = obstacle_cost(Vec3.zero(), BOTTLENECK, d1=0.1, d_min=1e-6)
    assert c == pytest.approx(2.0 * math.exp(-5.0), rel=1e-12)
    assert c == pytest.approx(0.013476, abs=1e-6)


def test_desired_velocity_cruise_and_taper():
    # far away: full speed toward the target
    v = desired_velocity(Vec3.zero(), Vec3(10.0, 0.0, 0.0), 2.0, dt=1.0, d_min=1e-6)
    np.testing.assert_allclose(v.as_array(), [2.0, 0.0, 0.0], atol=1e-12)
    # inside one cruise step: taper to reach the target exactly
    v = desired_velocity(Vec3(9.5, 0.0, 0.0), Vec3(10.0, 0.0, 0.0), 2.0, dt=1.0, d_min=1e-6)
    np.testing.assert_allclose(v.as_array(), [0.5, 0.0, 0.0], atol=1e-12)
    # at the target the desired velocity vanishes
    v = desired_velocity(Vec3(10.0, 0.0, 0.0), Vec3(10.0, 0.0, 0.0), 2.0, dt=1.0, d_min=1e-6)
    assert v.norm() == pytest.approx(0.0)
    # boundary case dist == speed*dt: both branches agree
    v = desired_velocity(Vec3(8.0, 0.0, 0.0), Vec3(10.0, 0.0, 0.0), 2.0, dt=1.0, d_min=1e-6)
    np.testing.assert_allclose(v.as_array(), [2.0, 0.0, 0.0], atol=1e-12)


def test_batch_desired_velocities_matches_scalar():
    rng = np.random.default_rng(11)
    targets = rng.normal(size=(4, 3)) * 5.0
    speeds = np.array([0.5, 1.0, 1.5, 2.0])
    positions = rng.normal(size=(6, 4, 3)) * 3.0
    out = batch_desired_velocities(positions, targets, speeds, dt=0.5, d_min=1e-6)
    assert out.shape == (6, 4, 3)
    for k in range(6):
        for i in range(4):
            ref = desired_velocity(Vec3.from_array(positions[k, i]),
                                   Vec3.from_array(targets[i]),
                                   float(speeds[i]), 0.5, 1e-6)
            np.testing.assert_allclose(out[k, i], ref.as_array(), atol=1e-12)


def test_position_gradient_matches_finite_differences():
    """Central differences on the weighted proximity+obstacle cost."""
    rng = np.random.default_rng(0)
    params = ModelParams(beta0=10.0, beta1=10.0, d0=0.3, d1=0.2)
    obstacles = [VerticalCylinder(0.5, -1.0, 0.4),
                 HalfSpace(Vec3(0.0, 0.0, 1.0), -2.0)]
    h = 1e-6
    for _ in range(20):
        pos = rng.normal(size=(4, 3))
        grad = batch_position_gradients(pos, obstacles, params)

        def cost_of(i, r):
            others = [Vec3.from_array(pos[j]) for j in range(4) if j != i]
            p = proximity_cost(Vec3.from_array(r), others, params.d0, params.d_min)
            o = obstacle_cost(Vec3.from_array(r), obstacles, params.d1, params.d_min)
            return params.beta0 * p + params.beta1 * o

        for i in range(4):
            fd = np.zeros(3)
            for c in range(3):
                rp, rm = pos[i].copy(), pos[i].copy()
                rp[c] += h
                rm[c] -= h
                fd[c] = (cost_of(i, rp) - cost_of(i, rm)) / (2.0 * h)
            np.testing.assert_allclose(grad[i], fd, rtol=1e-4, atol=1e-6)


def test_position_gradient_pair_closed_form():
    # two drones a distance d apart: |grad| = (beta0/d0)*exp(-d/d0), toward the other
    params = ModelParams(beta0=10.0, d0=0.5)
    pos = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
    g = batch_position_gradients(pos, [], params)
    mag = (params.beta0 / params.d0) * math.exp(-1.0 / params.d0)
    np.testing.assert_allclose(g[0], [mag, 0.0, 0.0], atol=1e-12)
    np.testing.assert_allclose(g[1], [-mag, 0.0, 0.0], atol=1e-12)


def test_position_gradient_rotation_invariance():
    """Rotating every position rotates the drone-drone gradients the same way."""
    rng = np.random.default_rng(5)
    params = ModelParams(beta0=7.0, d0=0.4)
    # random rotation via QR with positive determinant
    q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    for _ in range(10):
        pos = rng.normal(size=(5, 3))
        g = batch_position_gradients(pos, [], params)
        g_rot = batch_position_gradients(pos @ q.T, [], params)
        np.testing.assert_allclose(g_rot, g @ q.T, atol=1e-10)


def test_position_gradient_action_reaction():
    # without obstacles the pair gradients cancel in the sum
    rng = np.random.default_rng(9)
    params = ModelParams()
    for _ in range(10):
        pos = rng.normal(size=(6, 3)) * 0.5
        g = batch_position_gradients(pos, [], params)
        np.testing.assert_allclose(g.sum(axis=0), np.zeros(3), atol=1e-10)


def test_position_gradient_inside_obstacle_is_flat():
    # the clamped standoff has zero slope inside the surface
    params = ModelParams()
    cyl = VerticalCylinder(0.0, 0.0, 2.0)
    g = batch_position_gradients(np.array([[0.5, 0.0, 0.0]]), [cyl], params)
    np.testing.assert_allclose(g, np.zeros((1, 3)), atol=1e-12)


def test_running_cost_breakdown():
    params = ModelParams(alpha=2.0, beta0=3.0, beta1=4.0, d0=1.0, d1=1.0)
    positions = [Vec3.zero(), Vec3(1.0, 0.0, 0.0)]
    got = running_cost(0, positions, Vec3(0.5, 0.0, 0.0), Vec3(0.0, 1.0, 0.0),
                       Vec3(1.0, 0.0, 0.0), BOTTLENECK, params)
    assert got.stray == pytest.approx(0.125)
    assert got.proximity == pytest.approx(math.exp(-1.0))
    assert got.accel == pytest.approx(0.5)
    assert got.obstacle == pytest.approx(2.0 * math.exp(-0.5))
    assert got.total == pytest.approx(2.0 * 0.125 + 3.0 * math.exp(-1.0)
                                      + 0.5 + 4.0 * 2.0 * math.exp(-0.5))


def test_grad_running_cost_r_matches_batch():
    params = ModelParams()
    positions = [Vec3(0.0, 0.0, 1.0), Vec3(0.3, 0.1, 1.0), Vec3(-0.2, 0.4, 1.2)]
    arr = np.array([p.as_array() for p in positions])
    batch = batch_position_gradients(arr, BOTTLENECK, params)
    for i in range(3):
        g = grad_running_cost_r(i, positions, BOTTLENECK, params)
        np.testing.assert_allclose(g.as_array(), batch[i], atol=1e-12)


def test_grad_running_cost_v():
    g = grad_running_cost_v(Vec3(0.5, 0.0, 0.0), Vec3(1.0, 0.0, 0.0), alpha=2.0)
    np.testing.assert_allclose(g.as_array(), [-1.0, 0.0, 0.0], atol=1e-12)


def test_hamiltonian_assembly_and_minimizer():
    params = ModelParams(alpha=1.5, beta0=2.0, eta=0.1)
    positions = [Vec3.zero(), Vec3(0.5, 0.0, 0.0)]
    v = Vec3(0.3, -0.2, 0.0)
    lam_r = Vec3(0.1, 0.2, -0.3)
    lam_v = Vec3(-0.4, 0.5, 0.6)
    v_des = Vec3(1.0, 0.0, 0.0)
    u = Vec3(0.2, -0.1, 0.4)
    t = 2.0
    L = running_cost(0, positions, v, u, v_des, [], params).total
    want = math.exp(-params.eta * t) * L + lam_r.dot(v) + lam_v.dot(u)
    got = hamiltonian(t, 0, positions, v, u, lam_r, lam_v, v_des, [], params)
    assert got == pytest.approx(want, rel=1e-12)

    # with eta=0 the Hamiltonian is quadratic in u and minimized at u = -lam_v
    params0 = ModelParams(alpha=1.5, beta0=2.0)
    u_star = Vec3(0.4, -0.5, -0.6)
    h_star = hamiltonian(t, 0, positions, v, u_star, lam_r, lam_v, v_des, [], params0)
    rng = np.random.default_rng(2)
    for _ in range(20):
        u_alt = Vec3.from_array(u_star.as_array() + rng.normal(size=3) * 0.1)
        assert hamiltonian(t, 0, positions, v, u_alt, lam_r, lam_v, v_des,
                           [], params0) >= h_star - 1e-12


def test_discrete_cost_hand_check():
    """Single cruising drone, two steps, all terms computed by hand."""
    params = ModelParams(alpha=1.0, beta0=10.0, horizon_T=2.0, dt=1.0)
    grid = make_grid(0.0, 2.0, 1.0)
    spec = _spec(0, (0.0, 0.0, 0.0), (10.0, 0.0, 0.0), speed=1.0)
    u = np.array([[[1.0, 0.0, 0.0], [0.0, 0.0, 0.0]]])
    r, v = _rollout(np.zeros((1, 3)), np.zeros((1, 3)), u, 1.0)
    traj = JointTrajectory(grid=grid, ids=(0,), r=r, v=v, u=u,
                           lam_r=np.zeros_like(r), lam_v=np.zeros_like(v))
    traj.validate()
    # k=0: v=0 vs v_des=1 -> stray 0.5, accel 0.5; k=1: v=1 on target -> accel 0
    assert discrete_cost(traj, 0, [spec], [], params) == pytest.approx(1.0)

    # pinning the schedule to what the sweep recomputes changes nothing
    sched = desired_velocity_schedule(traj, 0, spec, params)
    pinned = discrete_cost(traj, 0, [spec], [], params, v_desired=sched)
    assert pinned == pytest.approx(1.0)


def test_discrete_cost_proximity_term():
    # two static hovering drones 0.2 apart for 3 steps of dt=0.5
    params = ModelParams(beta0=10.0, d0=0.1, horizon_T=1.5, dt=0.5)
    grid = make_grid(0.0, 1.5, 0.5)
    specs = [_spec(0, (0.0, 0.0, 0.0), (0.0, 0.0, 0.0), speed=0.0),
             _spec(1, (0.2, 0.0, 0.0), (0.2, 0.0, 0.0), speed=0.0)]
    n, N = 2, grid.n_steps
    u = np.zeros((n, N, 3))
    r, v = _rollout(np.array([[0.0, 0.0, 0.0], [0.2, 0.0, 0.0]]),
                    np.zeros((n, 3)), u, 0.5)
    traj = JointTrajectory(grid=grid, ids=(0, 1), r=r, v=v, u=u,
                           lam_r=np.zeros_like(r), lam_v=np.zeros_like(v))
    want = 10.0 * math.exp(-2.0) * N * 0.5  # beta0*exp(-0.2/0.1) per step * dt
    assert discrete_cost(traj, 0, specs, [], params) == pytest.approx(want, rel=1e-12)
    assert discrete_cost(traj, 1, specs, [], params) == pytest.approx(want, rel=1e-12)


def test_discrete_cost_discounting():
    # eta>0 multiplies step k by exp(-eta*t_k); hovering drone pays stray only
    grid = make_grid(0.0, 2.0, 1.0)
    spec = _spec(0, (0.0, 0.0, 0.0), (10.0, 0.0, 0.0), speed=1.0)
    u = np.zeros((1, 2, 3))
    r, v = _rollout(np.zeros((1, 3)), np.zeros((1, 3)), u, 1.0)
    traj = JointTrajectory(grid=grid, ids=(0,), r=r, v=v, u=u,
                           lam_r=np.zeros_like(r), lam_v=np.zeros_like(v))
    eta = 0.3
    params = ModelParams(eta=eta, horizon_T=2.0, dt=1.0)
    want = 0.5 * (1.0 + math.exp(-eta))
    assert discrete_cost(traj, 0, [spec], [], params) == pytest.approx(want, rel=1e-12)


def test_joint_helpers_shapes_and_consistency():
    rng = np.random.default_rng(21)
    params = ModelParams()
    specs = [_spec(i, rng.normal(size=3), rng.normal(size=3) * 5.0, speed=1.0)
             for i in range(3)]
    r = rng.normal(size=(3, 6, 3))
    g = joint_position_gradients(r, BOTTLENECK, params)
    assert g.shape == (3, 6, 3)
    # spot-check one (drone, time) against the flat batch call
    np.testing.assert_allclose(
        g[:, 2], batch_position_gradients(r[:, 2], BOTTLENECK, params), atol=1e-12)

    vd = joint_desired_velocities(r, specs, params.dt, params.d_min)
    assert vd.shape == (3, 6, 3)
    ref = desired_velocity(Vec3.from_array(r[1, 3]), specs[1].target,
                           specs[1].desired_speed, params.dt, params.d_min)
    np.testing.assert_allclose(vd[1, 3], ref.as_array(), atol=1e-12)
