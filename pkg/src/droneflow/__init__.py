"""Decentralized multi-drone conflict resolution via a receding-horizon
differential game.

Each drone repeatedly solves a finite-horizon optimal control problem that
trades progress toward its target against proximity to neighbours and
obstacles; the coupled problems are driven to a Nash equilibrium by a
relaxed forward-backward fixed-point sweep.
"""

__version__ = "0.1.0"

from .core import (
    ConfigError,
    DroneSpec,
    HorizonGrid,
    JointTrajectory,
    ModelParams,
    VerticalCylinder,
    HalfSpace,
    make_grid,
    specs_sorted,
    stack_positions,
    stack_velocities,
    unit_toward,
)
from .cost import desired_velocity_schedule, discrete_cost, running_cost
from .engine import SimulationLog, WorldState, receding_horizon_step, simulate
from .oracle import (
    CheckReport,
    brute_force_nash,
    fd_adjoint_check,
    fd_cost_gradients,
    standard_adjoint_reports,
    standard_brute_force_reports,
)
from .scenarios import (
    SCENARIO_NAMES,
    MetricsReport,
    ScenarioConfig,
    compute_metrics,
    crossing_points,
    gen_crossing,
    gen_head_on,
    gen_one_on_one,
    lane_separation_index,
    make_scenario,
)
from .solver import (
    NumericalBlowup,
    SolveResult,
    backward_sweep,
    forward_sweep,
    iteration_error,
    solve_game,
)

__all__ = [
    "__version__",
    "ConfigError",
    "DroneSpec",
    "HorizonGrid",
    "JointTrajectory",
    "ModelParams",
    "VerticalCylinder",
    "HalfSpace",
    "make_grid",
    "specs_sorted",
    "stack_positions",
    "stack_velocities",
    "unit_toward",
    "desired_velocity_schedule",
    "discrete_cost",
    "running_cost",
    "SimulationLog",
    "WorldState",
    "receding_horizon_step",
    "simulate",
    "CheckReport",
    "brute_force_nash",
    "fd_adjoint_check",
    "fd_cost_gradients",
    "standard_adjoint_reports",
    "standard_brute_force_reports",
    "SCENARIO_NAMES",
    "MetricsReport",
    "ScenarioConfig",
    "compute_metrics",
    "crossing_points",
    "gen_crossing",
    "gen_head_on",
    "gen_one_on_one",
    "lane_separation_index",
    "make_scenario",
    "NumericalBlowup",
    "SolveResult",
    "backward_sweep",
    "forward_sweep",
    "iteration_error",
    "solve_game",
]
