"""Acceptance gate: ten criteria, one test (and one pass/fail line) each.

Criteria 1-4 and 10 are exact property suites; 5-9 reproduce published
trends and table values statistically.  Each test prints one line
``ACCEPTANCE <n> <PASS|FAIL>: <details>`` before asserting, so the -v log
carries both the verdict and the measured numbers.

Heavy fixtures (the 100-drone table grids) are module-scoped and shared:
the head-on grid feeds criteria 7 and 9.  Full module runtime is dominated
by those grids (roughly 40-45 minutes on one core).
"""

import time

import numpy as np
import pytest

from droneflow.cli import main
from droneflow.core import (
    DroneSpec,
    DroneState,
    JointTrajectory,
    ModelParams,
    Vec3,
    make_grid,
)
from droneflow.cost import discrete_cost
from droneflow.engine import simulate
from droneflow.oracle import (
    fd_cost_gradients,
    standard_adjoint_reports,
    standard_brute_force_reports,
)
from droneflow.scenarios import (
    crossing_points,
    gen_one_on_one,
    lane_separation_index,
    make_scenario,
    metric_avg_directed_speed,
    metric_min_pairwise_distance,
)
from droneflow.solver import NumericalBlowup, solve_game


def _verdict(n: int, ok: bool, details: str) -> str:
    line = f"ACCEPTANCE {n} {'PASS' if ok else 'FAIL'}: {details}"
    print(line)
    return line


def _fmt_cells(pairs) -> str:
    return " ".join(f"{k}={v:.3f}" for k, v in pairs)


# --- shared table grids (module-scoped, built once) -------------------------

TABLE1_CELLS = (
    ("T2.5", dict(horizon_T=2.5)), ("T5", dict()), ("T10", dict(horizon_T=10.0)),
    ("b1", dict(beta0=1.0)), ("b100", dict(beta0=100.0)),
    ("R.05", dict(d0=0.05, d1=0.05)), ("R.2", dict(d0=0.2, d1=0.2)),
)

CROWD_CELLS = (
    ("T2.5", dict(horizon_T=2.5)), ("T5", dict()), ("T10", dict(horizon_T=10.0)),
    ("b1", dict(beta0=1.0)), ("b100", dict(beta0=100.0)),
    ("R.05", dict(d0=0.05, d1=0.05)), ("R.2", dict(d0=0.2, d1=0.2)),
)

BOTTLENECK_CELLS = (
    ("T5", dict()),
    ("b1", dict(beta0=1.0)), ("b100", dict(beta0=100.0)),
    ("R.05", dict(d0=0.05, d1=0.05)), ("R.2", dict(d0=0.2, d1=0.2)),
)


@pytest.fixture(scope="module")
def table1_grid():
    """One-on-one closest-approach means: 7 cells x 20 seeds at dt=0.1."""
    t0 = time.time()
    cells = {}
    for name, over in TABLE1_CELLS:
        params = ModelParams(dt=0.1, control_period=1.0, **over)
        vals = []
        for seed in range(20):
            cfg = gen_one_on_one(seed=seed)
            log = simulate(list(cfg.drones), [], params, t_max=100.0)
            assert log.failure is None, f"{name} seed {seed}: {log.failure}"
            vals.append(metric_min_pairwise_distance(log))
        cells[name] = np.array(vals)
    return {"cells": cells, "elapsed": time.time() - t0}


def _crowd_cell(scenario_name: str, over: dict, seeds=range(5)):
    params = ModelParams(dt=0.5, control_period=1.0, **over)
    rows = []
    for seed in seeds:
        cfg = make_scenario(scenario_name, seed=seed)
        log = simulate(list(cfg.drones), list(cfg.obstacles), params,
                       t_max=cfg.t_max)
        assert log.failure is None, f"{scenario_name} seed {seed}: {log.failure}"
        points = crossing_points(log, axis="x")
        try:
            lane = lane_separation_index(points)
        except Exception:
            lane = float("nan")
        rows.append({"min_dist": metric_min_pairwise_distance(log),
                     "speed": metric_avg_directed_speed(log),
                     "lane": lane})
    return rows


@pytest.fixture(scope="module")
def headon_grid():
    """Head-on 100-drone grid: 7 cells x 5 seeds (criteria 7 and 9)."""
    t0 = time.time()
    cells = {name: _crowd_cell("head_on", over) for name, over in CROWD_CELLS}
    return {"cells": cells, "elapsed": time.time() - t0}


@pytest.fixture(scope="module")
def bottleneck_grid():
    """Bottleneck 100-drone grid: 5 cells x 5 seeds (criterion 8)."""
    t0 = time.time()
    cells = {name: _crowd_cell("bottleneck", over)
             for name, over in BOTTLENECK_CELLS}
    return {"cells": cells, "elapsed": time.time() - t0}


# --- criteria ----------------------------------------------------------------


def test_criterion_01_gradient_oracle():
    t0 = time.time()
    rep = fd_cost_gradients(seed=0, n_samples=1000)
    elapsed = time.time() - t0
    ok = rep.passed and elapsed < 10.0
    line = _verdict(1, ok, f"1000 configs, max_rel_error={rep.max_relative_error:.2e} "
                           f"(tol 1e-5), {elapsed:.1f}s (< 10s)")
    assert ok, line


def test_criterion_02_adjoint_oracle():
    t0 = time.time()
    reports = standard_adjoint_reports(tolerance=1e-3)
    elapsed = time.time() - t0
    worst = max(r.max_relative_error for r in reports)
    ok = all(r.passed for r in reports) and elapsed < 30.0
    line = _verdict(2, ok, f"{len(reports)} checks, worst={worst:.2e} (tol 1e-3), "
                           f"{elapsed:.1f}s (< 30s)")
    assert ok, line


def test_criterion_03_nash_stationarity():
    """Converged pair solve: own-cost directional derivatives vanish."""
    t0 = time.time()
    params = ModelParams(horizon_T=10.0, dt=0.1, eps=1e-8, max_iters=20000)
    grid = make_grid(0.0, 10.0, 0.1)

    def cruise(i, r, target, group):
        d = np.asarray(target, dtype=float) - np.asarray(r, dtype=float)
        v = d / np.linalg.norm(d)
        return DroneSpec(id=i, initial=DroneState(Vec3(*r), Vec3.from_array(v)),
                         target=Vec3(*target), desired_speed=1.0, group=group)

    specs = [cruise(0, (-4.0, -0.3, 1.0), (15.0, -0.3, 1.0), 0),
             cruise(1, (4.0, 0.3, 1.0), (-15.0, 0.3, 1.0), 1)]
    p0 = np.array([[-4.0, -0.3, 1.0], [4.0, 0.3, 1.0]])
    v0 = np.array([[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]])
    res = solve_game(specs, (p0, v0), (), grid, params)
    assert res.converged, f"solve did not reach eps=1e-8 ({res.final_error:.2e})"

    traj = res.trajectory
    N = grid.n_steps
    h = 1e-5
    rng = np.random.default_rng(0)

    def cost_with_controls(u0: np.ndarray) -> float:
        r = np.array(traj.r)
        v = np.array(traj.v)
        u = np.array(traj.u)
        u[0] = u0
        for k in range(N):
            v[0, k + 1] = v[0, k] + grid.dt * u0[k]
            r[0, k + 1] = r[0, k] + grid.dt * v[0, k]
        alt = JointTrajectory(grid=grid, ids=traj.ids, r=r, v=v, u=u,
                              lam_r=traj.lam_r, lam_v=traj.lam_v)
        return discrete_cost(alt, 0, specs, (), params)

    worst = 0.0
    for _ in range(20):
        delta = rng.normal(size=(N, 3))
        delta /= np.linalg.norm(delta)
        jp = cost_with_controls(traj.u[0] + h * delta)
        jm = cost_with_controls(traj.u[0] - h * delta)
        worst = max(worst, abs(jp - jm) / (2.0 * h))
    elapsed = time.time() - t0
    ok = worst < 1e-3 and elapsed < 60.0
    line = _verdict(3, ok, f"20 unit perturbations, worst |dJ/ddelta|={worst:.2e} "
                           f"(< 1e-3), {elapsed:.1f}s (< 60s)")
    assert ok, line


def test_criterion_04_brute_force_equivalence():
    t0 = time.time()
    reports = standard_brute_force_reports(tolerance=0.1)
    elapsed = time.time() - t0
    worst = max(r.max_relative_error for r in reports)
    ok = all(r.passed for r in reports) and elapsed < 60.0
    line = _verdict(4, ok, f"{len(reports)} instances, worst cost gap={worst:.3f} "
                           f"(slack 0.1), {elapsed:.1f}s (< 60s)")
    assert ok, line


def test_criterion_05_convergence_reproduction():
    """Relaxation traces on the one-on-one pair at T=10."""
    cfg = gen_one_on_one(seed=0)
    specs = list(cfg.drones)
    p0 = np.array([s.initial.position.as_array() for s in specs])
    v0 = np.zeros((2, 3))
    grid = make_grid(0.0, 10.0, 1.0)

    def trace_for(a: float) -> tuple[list, bool]:
        params = ModelParams(horizon_T=10.0, relaxation_a=a)
        try:
            res = solve_game(specs, (p0, v0), (), grid, params)
            return res.trace, res.converged
        except NumericalBlowup as exc:
            return exc.trace, False

    details = []
    fast_ok = True
    for a in (0.01, 0.02, 0.04):
        trace, converged = trace_for(a)
        within = converged and len(trace) <= 200
        tail = np.array(trace[5:])
        monotone = bool(np.all(np.diff(tail) <= 0)) if len(tail) > 1 else False
        fast_ok = fast_ok and within and monotone
        details.append(f"a={a}: iters={len(trace)} final={trace[-1]:.2e} "
                       f"converged={converged} monotone={monotone}")
    trace5, _ = trace_for(0.05)
    oscillates = bool(np.any(np.diff(np.array(trace5)) > 0))
    details.append(f"a=0.05: non-monotone={oscillates}")

    ok = fast_ok and oscillates
    line = _verdict(5, ok, "; ".join(details))
    assert ok, line


def test_criterion_06_one_on_one_table(table1_grid):
    cells = {k: float(v.mean()) for k, v in table1_grid["cells"].items()}
    pins = {"T2.5": 0.21, "T5": 0.34, "T10": 0.41,
            "b1": 0.18, "b100": 0.68, "R.05": 0.16, "R.2": 0.55}

    t_inc = cells["T2.5"] < cells["T5"] < cells["T10"]
    b_inc = cells["b1"] < cells["T5"] < cells["b100"]
    ratio = cells["R.2"] / cells["R.05"]
    ratio_ok = 3.0 <= ratio <= 5.0
    windows = {k: abs(cells[k] - pins[k]) <= 0.1 for k in pins}
    elapsed = table1_grid["elapsed"]

    ok = t_inc and b_inc and ratio_ok and all(windows.values()) and elapsed < 300.0
    bad = [k for k, good in windows.items() if not good]
    line = _verdict(6, ok,
                    f"means {_fmt_cells(cells.items())}; T_increasing={t_inc} "
                    f"beta0_increasing={b_inc} R-ratio={ratio:.2f} (want 3..5); "
                    f"cells outside +-0.1: {bad or 'none'}; {elapsed:.0f}s (< 300s)")
    assert ok, line


def test_criterion_07_head_on_table(headon_grid):
    cells = headon_grid["cells"]
    mins = {k: float(np.mean([r["min_dist"] for r in v])) for k, v in cells.items()}
    speeds = {k: float(np.mean([r["speed"] for r in v])) for k, v in cells.items()}
    pins = {"T2.5": 0.33, "T5": 0.44, "T10": 0.46,
            "b1": 0.22, "b100": 0.85, "R.05": 0.27, "R.2": 0.59}

    windows = {k: abs(mins[k] - pins[k]) <= 0.15 for k in pins}
    r_mono = mins["R.05"] < mins["T5"] < mins["R.2"]
    b_mono = mins["b1"] < mins["T5"] < mins["b100"]
    speed_ok = {k: v >= 0.95 for k, v in speeds.items()}
    elapsed = headon_grid["elapsed"]

    ok = all(windows.values()) and r_mono and b_mono and all(speed_ok.values()) \
        and elapsed < 1800.0
    bad_w = [k for k, good in windows.items() if not good]
    bad_s = [f"{k}={speeds[k]:.3f}" for k, good in speed_ok.items() if not good]
    line = _verdict(7, ok,
                    f"min means {_fmt_cells(mins.items())}; outside +-0.15: "
                    f"{bad_w or 'none'}; monotone R={r_mono} beta0={b_mono}; "
                    f"cells with speed<0.95: {bad_s or 'none'}; "
                    f"{elapsed:.0f}s (< 1800s)")
    assert ok, line


def test_criterion_08_bottleneck_table(bottleneck_grid):
    cells = bottleneck_grid["cells"]
    speeds = {k: float(np.mean([r["speed"] for r in v])) for k, v in cells.items()}
    pins_b = {"b1": 0.99, "T5": 0.86, "b100": 0.62}
    pins_r = {"R.05": 0.98, "T5": 0.92, "R.2": 0.73}

    b_dec = speeds["b1"] > speeds["T5"] > speeds["b100"]
    r_dec = speeds["R.05"] > speeds["T5"] > speeds["R.2"]
    windows = {k: abs(speeds[k] - pin) <= 0.1
               for k, pin in {**pins_b, **pins_r}.items()}
    # the shared center cell must sit in both rows' windows
    windows["T5"] = (abs(speeds["T5"] - pins_b["T5"]) <= 0.1
                     and abs(speeds["T5"] - pins_r["T5"]) <= 0.1)
    elapsed = bottleneck_grid["elapsed"]

    ok = b_dec and r_dec and all(windows.values()) and elapsed < 1800.0
    bad = [k for k, good in windows.items() if not good]
    line = _verdict(8, ok,
                    f"speed means {_fmt_cells(speeds.items())}; decreasing "
                    f"beta0={b_dec} R={r_dec}; outside +-0.1: {bad or 'none'}; "
                    f"{elapsed:.0f}s (< 1800s)")
    assert ok, line


def test_criterion_09_lane_separation(headon_grid):
    lanes = [r["lane"] for r in headon_grid["cells"]["T5"]]
    above = sum(1 for v in lanes if v > 1.0)
    ok = above >= 4
    line = _verdict(9, ok, f"lane_separation_index per seed: "
                           f"{' '.join(f'{v:.3f}' for v in lanes)}; "
                           f"{above}/5 above 1.0 (need >= 4)")
    assert ok, line


def test_criterion_10_determinism(tmp_path):
    base = ["--scenario", "head_on", "--seed", "5", "--set", "n_total=6",
            "--set", "t_max=10", "--no-figures"]
    texts = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert main(["run", *base, "--out", str(out)]) == 0
        texts.append((out / "trajectory.csv").read_bytes())
    run_same = texts[0] == texts[1]

    sweeps = []
    for jobs, name in (("1", "j1"), ("2", "j2")):
        out = tmp_path / name
        assert main(["sweep", *base, "--param", "beta0=5,10", "--reps", "2",
                     "--jobs", jobs, "--out", str(out)]) == 0
        sweeps.append((out / "sweep_summary.csv").read_bytes())
    sweep_same = sweeps[0] == sweeps[1]

    ok = run_same and sweep_same
    line = _verdict(10, ok, f"run CSVs byte-identical={run_same}; sweep CSVs "
                            f"byte-identical across --jobs 1/2={sweep_same}")
    assert ok, line
