"""Command-line interface: runs, sweeps, convergence studies, checks.

Subcommands: ``run`` (simulate one scenario and write trajectory/metrics
outputs), ``sweep`` (Cartesian parameter sweeps with per-cell repetitions),
``convergence`` (cold-start error traces across relaxation values) and
``check`` (the oracle suite).  Outputs are CSV files with a fixed header
plus '#' metadata lines, a YAML report, and figure files; every file embeds
the scenario name, effective parameters, seed and artifact version.
"""

from __future__ import annotations

import argparse
import itertools
import multiprocessing
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .core import ConfigError, ModelParams, make_grid, stack_positions, stack_velocities
from .cost import grad_running_cost_r
from .engine import SimulationLog, simulate
from .oracle import (
    fd_cost_gradients,
    standard_adjoint_reports,
    standard_brute_force_reports,
)
from .scenarios import (
    SCENARIO_NAMES,
    ScenarioConfig,
    compute_metrics,
    make_scenario,
)
from .solver import NumericalBlowup, solve_game

__all__ = ["main"]

TRAJECTORY_HEADER = "t,drone_id,group,x,y,z,vx,vy,vz,ux,uy,uz"
TRACES_HEADER = "a,iteration,error"

PARAM_FIELDS = {f.name for f in fields(ModelParams)}
PARAM_ALIASES = {"T": ("horizon_T",), "R": ("d0", "d1"),
                 "a": ("relaxation_a",), "h": ("dt",)}
SCENARIO_KEYS = {"n_total", "perturbation_scale"}
RUN_KEYS = {"t_max"}


def _parse_value(text: str):
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError:
        return text


def _expand_param_key(key: str) -> tuple[str, ...]:
    if key in PARAM_ALIASES:
        return PARAM_ALIASES[key]
    if key in PARAM_FIELDS:
        return (key,)
    return ()


def _route_overrides(pairs) -> tuple[dict, dict, dict]:
    """Split key=value overrides into params / scenario args / run settings."""
    params, scenario, run = {}, {}, {}
    for pair in pairs or []:
        if "=" not in pair:
            raise ConfigError(f"--set expects key=value, got {pair!r}")
        key, _, raw = pair.partition("=")
        key = key.strip()
        if raw.strip() == "":
            raise ConfigError(f"empty value for {key!r}")
        value = _parse_value(raw.strip())
        targets = _expand_param_key(key)
        if targets:
            for t in targets:
                params[t] = value
        elif key in SCENARIO_KEYS:
            scenario[key] = value
        elif key in RUN_KEYS:
            run[key] = value
        else:
            valid = sorted(PARAM_FIELDS | set(PARAM_ALIASES) | SCENARIO_KEYS | RUN_KEYS)
            raise ConfigError(f"unknown setting {key!r}; valid keys: {', '.join(valid)}")
    return params, scenario, run


def _expand_param_dict(raw: dict) -> dict:
    out = {}
    for key, value in (raw or {}).items():
        targets = _expand_param_key(str(key))
        if not targets:
            raise ConfigError(f"unknown parameter {key!r} in config file")
        for t in targets:
            out[t] = value
    return out


@dataclass
class Setup:
    """Fully resolved configuration for one command invocation."""

    scenario: ScenarioConfig
    params: ModelParams
    seed: int
    t_max: float
    scenario_name: str
    gen_args: dict
    regenerable: bool      # named scenario that can be rebuilt per seed


def _load_config_file(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid config {path}: {exc}") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a mapping")
    return data


def _build_scenario(name: str | None, file_cfg: dict, gen_args: dict,
                    seed: int) -> tuple[ScenarioConfig, str, bool]:
    if name is None and "drones" in file_cfg:
        if gen_args:
            raise ConfigError("generator arguments conflict with an explicit "
                              "drone list in the config file")
        return ScenarioConfig.from_dict(file_cfg), \
            str(file_cfg.get("name", "custom")), False
    name = name or "one_on_one"
    return make_scenario(name, seed=seed, **gen_args), name, True


def resolve_setup(args) -> Setup:
    """Apply precedence: command line --set over file values over defaults."""
    file_cfg = _load_config_file(args.config) if getattr(args, "config", None) else {}
    p_cli, s_cli, run_cli = _route_overrides(getattr(args, "set", None))
    p_file = _expand_param_dict(file_cfg.get("params", {}))

    seed = getattr(args, "seed", None)
    if seed is None:
        seed = int(file_cfg.get("seed", 0))
    gen_args = {**file_cfg.get("scenario_args", {}), **s_cli}
    for key in gen_args:
        if key not in SCENARIO_KEYS:
            raise ConfigError(f"unknown scenario argument {key!r}")

    name = getattr(args, "scenario", None) or file_cfg.get("scenario")
    scenario, scenario_name, regenerable = _build_scenario(name, file_cfg,
                                                           gen_args, seed)
    try:
        params = ModelParams(**{**p_file, **p_cli})
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc

    t_max = run_cli.get("t_max", file_cfg.get("t_max", scenario.t_max))
    return Setup(scenario=scenario, params=params, seed=seed,
                 t_max=float(t_max), scenario_name=scenario_name,
                 gen_args=gen_args, regenerable=regenerable)


def _fmt(value) -> str:
    """Deterministic CSV cell formatting."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "%.12g" % float(value)
    return str(value)


def _pyify(obj):
    """Plain-python view of nested values so yaml.safe_dump accepts them."""
    if isinstance(obj, dict):
        return {str(k): _pyify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_pyify(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return [_pyify(v) for v in obj.tolist()]
    if isinstance(obj, Path):
        return str(obj)
    return obj


def _metadata_lines(command: str, setup: Setup, extra: dict | None = None) -> list[str]:
    params = " ".join(f"{k}={_fmt(v)}" for k, v in setup.params.to_dict().items())
    lines = [
        f"# artifact: droneflow {__version__}",
        f"# command: {command}",
        f"# scenario: {setup.scenario_name}",
        f"# seed: {setup.seed}",
        f"# t_max: {_fmt(setup.t_max)}",
        f"# params: {params}",
    ]
    if setup.gen_args:
        args = " ".join(f"{k}={_fmt(v)}" for k, v in sorted(setup.gen_args.items()))
        lines.append(f"# scenario_args: {args}")
    for key, value in (extra or {}).items():
        lines.append(f"# {key}: {_fmt(value)}")
    return lines


def _write_lines(path: Path, lines) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for line in lines:
                fh.write(line + "\n")
    except OSError as exc:
        raise ConfigError(f"cannot write {path}: {exc}") from exc


def write_trajectory_csv(path: Path, log: SimulationLog, meta: list[str]) -> int:
    lines = list(meta)
    lines.append(TRAJECTORY_HEADER)
    count = 0
    for s in range(len(log.times)):
        t = log.times[s]
        for i, spec in enumerate(log.specs):
            cells = [_fmt(t), str(spec.id), str(spec.group)]
            cells += [_fmt(x) for x in log.r[s, i]]
            cells += [_fmt(x) for x in log.v[s, i]]
            cells += [_fmt(x) for x in log.u[s, i]]
            lines.append(",".join(cells))
            count += 1
    _write_lines(path, lines)
    return count


def write_crossing_csv(path: Path, points, axis: str, meta: list[str]) -> None:
    others = [c for c in "xyz" if c != axis]
    lines = list(meta)
    lines.append(f"{others[0]},{others[1]},t,group")
    for c1, c2, t, group in points:
        lines.append(",".join([_fmt(c1), _fmt(c2), _fmt(t), str(group)]))
    _write_lines(path, lines)


def write_report_yaml(path: Path, payload: dict) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            yaml.safe_dump(_pyify(payload), fh, sort_keys=False)
    except OSError as exc:
        raise ConfigError(f"cannot write {path}: {exc}") from exc


def _metrics_dict(metrics) -> dict:
    return {
        "min_pairwise_distance": metrics.min_pairwise_distance,
        "min_intergroup_distance": metrics.min_intergroup_distance,
        "min_obstacle_distance": metrics.min_obstacle_distance,
        "avg_directed_speed": metrics.avg_directed_speed,
        "lane_separation_index": metrics.lane_separation_index,
        "n_crossing_points": len(metrics.crossing_points),
    }


def _base_payload(command: str, setup: Setup) -> dict:
    return {
        "artifact": {"name": "droneflow", "version": __version__},
        "command": command,
        "scenario": {"name": setup.scenario_name,
                     "n_drones": len(setup.scenario.drones),
                     "n_obstacles": len(setup.scenario.obstacles),
                     "generator_args": setup.gen_args},
        "seed": setup.seed,
        "t_max": setup.t_max,
        "params": setup.params.to_dict(),
    }


def cmd_run(args) -> int:
    setup = resolve_setup(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    log = simulate(setup.scenario.drones, setup.scenario.obstacles,
                   setup.params, setup.t_max)
    metrics = compute_metrics(log, setup.scenario)

    extra = {"failure": log.failure} if log.failure else None
    meta = _metadata_lines("run", setup, extra)
    rows = write_trajectory_csv(out / "trajectory.csv", log, meta)

    axis = setup.scenario.metadata.get("plane_axis")
    if axis is not None:
        write_crossing_csv(out / "crossing_points.csv", metrics.crossing_points,
                           axis, meta)

    non_converged = sum(1 for s in log.summaries if not s.converged)
    payload = _base_payload("run", setup)
    payload["results"] = {
        "failure": log.failure,
        "all_arrived": log.all_arrived,
        "arrived": int(log.arrived[-1].sum()),
        "final_time": float(log.times[-1]),
        "metrics": _metrics_dict(metrics),
        "solver": {"periods": len(log.summaries),
                   "non_converged_periods": non_converged,
                   "total_iterations": int(sum(s.iterations for s in log.summaries))},
    }
    payload["periods"] = [{"t": s.t, "n_active": s.n_active,
                           "iterations": s.iterations,
                           "final_error": s.final_error,
                           "converged": s.converged} for s in log.summaries]
    write_report_yaml(out / "report.yaml", payload)

    if not args.no_figures:
        from .figures import plot_crossing_points, plot_trajectories
        plot_trajectories(log, out)
        if metrics.crossing_points:
            plot_crossing_points(metrics.crossing_points,
                                 out / "crossing_scatter.png")

    print(f"scenario {setup.scenario_name}: {len(setup.scenario.drones)} drones, "
          f"{rows} trajectory rows -> {out}")
    for key, value in _metrics_dict(metrics).items():
        print(f"  {key} = {_fmt(value) or 'n/a'}")
    print(f"  arrived = {int(log.arrived[-1].sum())}/{log.n_drones}"
          f" by t={_fmt(log.times[-1])}")

    if log.failure:
        print(f"error: {log.failure}", file=sys.stderr)
        return 1
    if args.strict and non_converged:
        print(f"error: NonConvergence in {non_converged} control period(s) "
              f"(strict mode)", file=sys.stderr)
        return 1
    return 0


def _parse_sweep_params(pairs) -> list[tuple[str, list]]:
    swept = []
    for pair in pairs or []:
        if "=" not in pair:
            raise ConfigError(f"--param expects key=v1,v2,..., got {pair!r}")
        key, _, raw = pair.partition("=")
        key = key.strip()
        values = [_parse_value(v.strip()) for v in raw.split(",") if v.strip() != ""]
        if not values:
            raise ConfigError(f"empty value list for swept parameter {key!r}")
        if not (_expand_param_key(key) or key in SCENARIO_KEYS or key in RUN_KEYS):
            raise ConfigError(f"cannot sweep unknown parameter {key!r}")
        swept.append((key, values))
    if not swept:
        raise ConfigError("sweep needs at least one --param key=v1,v2,...")
    return swept


def _sweep_worker(job: dict) -> dict:
    """Run one (cell, repetition) simulation; must stay importable for
    multiprocessing."""
    try:
        if job["scenario_dict"] is not None:
            scenario = ScenarioConfig.from_dict(job["scenario_dict"])
        else:
            scenario = make_scenario(job["scenario_name"], seed=job["seed"],
                                     **job["gen_args"])
        params = ModelParams(**job["params"])
        log = simulate(scenario.drones, scenario.obstacles, params,
                       job["t_max"])
        if log.failure:
            return {"error": log.failure}
        metrics = compute_metrics(log, scenario)
        result = _metrics_dict(metrics)
        result["all_arrived"] = log.all_arrived
        result["arrived_fraction"] = float(log.arrived[-1].mean())
        result["error"] = None
        return result
    except (ConfigError, NumericalBlowup, RuntimeError, ValueError) as exc:
        return {"error": f"{type(exc).__name__}: {exc}"}


SWEEP_METRICS = ("min_pairwise_distance", "avg_directed_speed",
                 "min_intergroup_distance", "min_obstacle_distance",
                 "lane_separation_index", "arrived_fraction")


def cmd_sweep(args) -> int:
    setup = resolve_setup(args)
    swept = _parse_sweep_params(args.param)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    base_params = setup.params.to_dict()
    cells = list(itertools.product(*(values for _, values in swept)))
    jobs = []
    for cell in cells:
        p_over, s_over, r_over = {}, {}, {}
        for (key, _), value in zip(swept, cell):
            targets = _expand_param_key(key)
            if targets:
                for t in targets:
                    p_over[t] = value
            elif key in SCENARIO_KEYS:
                s_over[key] = value
            else:
                r_over[key] = value
        for rep in range(args.reps):
            jobs.append({
                "scenario_name": setup.scenario_name,
                "scenario_dict": None if setup.regenerable
                else setup.scenario.to_dict(),
                "gen_args": {**setup.gen_args, **s_over},
                "params": {**base_params, **p_over},
                "seed": setup.seed + rep,
                "t_max": float(r_over.get("t_max", setup.t_max)),
            })

    if args.jobs > 1:
        with multiprocessing.Pool(args.jobs) as pool:
            results = pool.map(_sweep_worker, jobs)
    else:
        results = [_sweep_worker(job) for job in jobs]

    rows = []
    for ci, cell in enumerate(cells):
        reps = results[ci * args.reps:(ci + 1) * args.reps]
        good = [r for r in reps if r.get("error") is None]
        row: dict = {key: value for (key, _), value in zip(swept, cell)}
        row["reps"] = args.reps
        row["failures"] = len(reps) - len(good)
        for metric in SWEEP_METRICS:
            values = [r[metric] for r in good if r.get(metric) is not None]
            row[f"mean_{metric}"] = float(np.mean(values)) if values else None
            row[f"std_{metric}"] = float(np.std(values)) if values else None
        rows.append(row)

    columns = [key for key, _ in swept] + ["reps", "failures"]
    for metric in SWEEP_METRICS:
        columns += [f"mean_{metric}", f"std_{metric}"]
    sweep_desc = "; ".join(f"{k}={','.join(_fmt(v) for v in vals)}"
                           for k, vals in swept)
    meta = _metadata_lines("sweep", setup, {"sweep": sweep_desc,
                                            "reps": args.reps})
    lines = meta + [",".join(columns)]
    for row in rows:
        lines.append(",".join(_fmt(row.get(c)) for c in columns))
    _write_lines(out / "sweep_summary.csv", lines)

    payload = _base_payload("sweep", setup)
    payload["sweep"] = {"parameters": [{"key": k, "values": v} for k, v in swept],
                        "reps": args.reps}
    payload["rows"] = rows
    write_report_yaml(out / "report.yaml", payload)

    if not args.no_figures and len(swept) == 1:
        from .figures import plot_sweep
        plot_sweep(rows, swept[0][0], out / "sweep_summary.png")

    total_failures = sum(row["failures"] for row in rows)
    print(f"sweep over {sweep_desc}: {len(cells)} cells x {args.reps} reps -> {out}")
    for row in rows:
        cell_desc = " ".join(f"{k}={_fmt(row[k])}" for k, _ in swept)
        print(f"  {cell_desc}: min_dist={_fmt(row.get('mean_min_pairwise_distance')) or 'n/a'}"
              f" speed={_fmt(row.get('mean_avg_directed_speed')) or 'n/a'}"
              f" failures={row['failures']}")
    if total_failures:
        print(f"warning: {total_failures} failed repetition(s) marked in the "
              f"summary", file=sys.stderr)
        if args.strict:
            return 1
    return 0


def cmd_convergence(args) -> int:
    setup = resolve_setup(args)
    try:
        a_values = [float(v) for v in args.a_values.split(",") if v.strip() != ""]
    except ValueError as exc:
        raise ConfigError(f"invalid --a-values: {exc}") from exc
    if not a_values:
        raise ConfigError("--a-values must name at least one value")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    specs = setup.scenario.drones
    initial = (stack_positions(specs), stack_velocities(specs))
    grid = make_grid(0.0, setup.params.horizon_T, setup.params.dt)

    trace_rows = []
    traces = []
    summaries = []
    for a in a_values:
        params_a = setup.params.with_overrides(relaxation_a=a)
        blowup = None
        try:
            result = solve_game(specs, initial, setup.scenario.obstacles,
                                grid, params_a)
            trace = list(result.trace)
            converged = result.converged
        except NumericalBlowup as exc:
            trace = list(exc.trace)
            converged = False
            blowup = str(exc)
        traces.append((a, trace))
        for i, err in enumerate(trace):
            trace_rows.append((a, i + 1, err))
        summaries.append({"a": a, "iterations": len(trace),
                          "final_error": trace[-1] if trace else None,
                          "converged": converged, "blowup": blowup})

    meta = _metadata_lines("convergence", setup,
                           {"a_values": ",".join(_fmt(a) for a in a_values)})
    lines = meta + [TRACES_HEADER]
    for a, it, err in trace_rows:
        lines.append(f"{_fmt(a)},{it},{_fmt(err)}")
    _write_lines(out / "traces.csv", lines)

    payload = _base_payload("convergence", setup)
    payload["traces"] = summaries
    write_report_yaml(out / "report.yaml", payload)

    if not args.no_figures:
        from .figures import plot_convergence
        plot_convergence(traces, out / "convergence.png", eps=setup.params.eps)

    for s in summaries:
        status = "converged" if s["converged"] else \
            ("blowup" if s["blowup"] else "non-convergent")
        print(f"a={_fmt(s['a'])}: {s['iterations']} iterations, "
              f"final_error={_fmt(s['final_error']) or 'n/a'} [{status}]")
    if args.strict and any(not s["converged"] for s in summaries):
        print("error: NonConvergence in strict mode", file=sys.stderr)
        return 1
    return 0


def cmd_check(args) -> int:
    grad_r_fn = None
    if args.negative_control:
        def grad_r_fn(i, positions, obstacles, params):
            return grad_running_cost_r(i, positions, obstacles, params) * -1.0

    reports = [fd_cost_gradients(seed=args.seed, n_samples=args.samples,
                                 grad_r_fn=grad_r_fn)]
    reports += standard_adjoint_reports()
    reports += standard_brute_force_reports()

    for rep in reports:
        status = "PASS" if rep.passed else "FAIL"
        print(f"{status} {rep.name}: max_error={rep.max_relative_error:.3e} "
              f"tolerance={rep.tolerance:g} samples={rep.samples}")

    if args.out is not None:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        payload = {
            "artifact": {"name": "droneflow", "version": __version__},
            "command": "check",
            "seed": args.seed,
            "samples": args.samples,
            "checks": [{"name": r.name, "samples": r.samples,
                        "max_relative_error": r.max_relative_error,
                        "tolerance": r.tolerance, "passed": r.passed}
                       for r in reports],
        }
        write_report_yaml(out / "check_report.yaml", payload)

    return 0 if all(r.passed for r in reports) else 1


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--scenario", help="built-in scenario name: "
                        + ", ".join(SCENARIO_NAMES))
    parser.add_argument("--config", help="YAML config file (sections: scenario, "
                        "scenario_args, params, drones, obstacles, seed, t_max)")
    parser.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override a parameter (repeatable); aliases: "
                        "T=horizon_T R=d0,d1 a=relaxation_a h=dt")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--jobs", type=int, default=1,
                        help="parallel workers for sweep cells")
    parser.add_argument("--strict", action="store_true",
                        help="treat non-convergence as failure")
    parser.add_argument("--no-figures", action="store_true",
                        help="skip figure rendering")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="droneflow",
        description="Decentralized multi-drone conflict resolution simulator")
    parser.add_argument("--version", action="version",
                        version=f"droneflow {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="simulate one scenario")
    _add_common(p_run)
    p_run.set_defaults(handler=cmd_run)

    p_sweep = sub.add_parser("sweep", help="parameter sweep with repetitions")
    _add_common(p_sweep)
    p_sweep.add_argument("--param", action="append", metavar="KEY=V1,V2,...",
                         help="swept parameter and its values (repeatable)")
    p_sweep.add_argument("--reps", type=int, default=5,
                         help="repetitions (distinct seeds) per cell")
    p_sweep.set_defaults(handler=cmd_sweep)

    p_conv = sub.add_parser("convergence",
                            help="cold-start error traces per relaxation value")
    _add_common(p_conv)
    p_conv.add_argument("--a-values", default="0.01,0.02,0.04,0.05",
                        help="comma-separated relaxation values")
    p_conv.set_defaults(handler=cmd_convergence)

    p_check = sub.add_parser("check", help="run the oracle suite")
    p_check.add_argument("--samples", type=int, default=200,
                         help="random configurations for the gradient check")
    p_check.add_argument("--seed", type=int, default=0)
    p_check.add_argument("--out", default=None,
                         help="optional directory for check_report.yaml")
    p_check.add_argument("--negative-control", action="store_true",
                         help=argparse.SUPPRESS)
    p_check.set_defaults(handler=cmd_check)

    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
