"""Shared value types: vectors, drone descriptions, obstacles, parameters, grids.

Units are SI throughout: positions in metres, velocities in m/s,
accelerations in m/s^2, times in seconds.  The numerical modules operate on
float64 numpy arrays; the types here are the immutable boundary objects that
those arrays are built from.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from typing import Sequence, Union

import numpy as np

__all__ = [
    "ConfigError",
    "Vec3",
    "DroneState",
    "DroneSpec",
    "VerticalCylinder",
    "HalfSpace",
    "Obstacle",
    "ModelParams",
    "HorizonGrid",
    "JointTrajectory",
    "unit_toward",
    "make_grid",
]


class ConfigError(ValueError):
    """A parameter set or scenario definition violates its contract."""


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ConfigError(message)


@dataclass(frozen=True)
class Vec3:
    """Three-component vector used for positions, velocities and co-states."""

    x: float
    y: float
    z: float

    def __post_init__(self) -> None:
        for c in (self.x, self.y, self.z):
            if not math.isfinite(c):
                raise ConfigError(f"vector component must be finite, got {c!r}")

    def __add__(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x + other.x, self.y + other.y, self.z + other.z)

    def __sub__(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x - other.x, self.y - other.y, self.z - other.z)

    def __mul__(self, s: float) -> "Vec3":
        return Vec3(self.x * s, self.y * s, self.z * s)

    __rmul__ = __mul__

    def dot(self, other: "Vec3") -> float:
        return self.x * other.x + self.y * other.y + self.z * other.z

    def norm(self) -> float:
        return math.sqrt(self.dot(self))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)

    @staticmethod
    def from_array(a) -> "Vec3":
        return Vec3(float(a[0]), float(a[1]), float(a[2]))

    @staticmethod
    def zero() -> "Vec3":
        return Vec3(0.0, 0.0, 0.0)


def unit_toward(origin: Vec3, goal: Vec3, floor: float = 1e-9) -> Vec3:
    """Unit vector pointing from ``origin`` toward ``goal``.

    The normalisation denominator is clamped below by ``floor`` so that
    coincident points yield the zero vector instead of a division by zero.
    For separations at or above ``floor`` the result is an exact unit vector.
    """
    _require(floor > 0.0, "floor must be positive")
    d = goal - origin
    return d * (1.0 / max(d.norm(), floor))


@dataclass(frozen=True)
class DroneState:
    """Instantaneous kinematic state of one drone."""

    position: Vec3
    velocity: Vec3


@dataclass(frozen=True)
class DroneSpec:
    """Static description of one drone: identity, start, destination, group."""

    id: int
    initial: DroneState
    target: Vec3
    desired_speed: float
    group: int = 0

    def __post_init__(self) -> None:
        _require(self.desired_speed >= 0.0, "desired_speed must be >= 0")


@dataclass(frozen=True)
class VerticalCylinder:
    """Infinite vertical cylinder; distance is radial in the x-y plane."""

    center_x: float
    center_y: float
    radius: float

    def __post_init__(self) -> None:
        _require(self.radius > 0.0, "cylinder radius must be positive")


@dataclass(frozen=True)
class HalfSpace:
    """Half space {r : normal . r < offset} acting as a wall or floor.

    ``normal`` is the outward unit normal of the forbidden region, i.e. it
    points into free space; the signed standoff of a point is
    normal . r - offset.
    """

    normal: Vec3
    offset: float

    def __post_init__(self) -> None:
        _require(abs(self.normal.norm() - 1.0) <= 1e-9,
                 "half-space normal must have unit length")


Obstacle = Union[VerticalCylinder, HalfSpace]


@dataclass(frozen=True)
class ModelParams:
    """Cost weights, interaction scales, horizon and solver controls.

    ``d0`` (drone-drone interaction scale) is also exposed under the alias
    ``R``.  ``control_period`` defaults to ``dt`` when not given and must be
    a positive integer multiple of ``dt``.
    """

    alpha: float = 1.0          # weight of the velocity-tracking (stray) cost
    beta0: float = 10.0         # weight of the drone-drone proximity cost
    beta1: float = 10.0         # weight of the obstacle proximity cost
    d0: float = 0.1             # drone-drone interaction scale (m)
    d1: float = 0.1             # obstacle interaction scale (m)
    eta: float = 0.0            # cost discount rate (1/s)
    horizon_T: float = 5.0      # prediction horizon (s)
    dt: float = 1.0             # integration step (s)
    control_period: float | None = None   # replanning interval (s); None -> dt
    relaxation_a: float = 0.02  # under-relaxation factor of the fixed point
    eps: float = 1e-6           # sup-norm convergence cutoff on co-states
    max_iters: int = 200
    arrival_radius: float = 0.5  # distance (m) at which a drone counts as arrived
    d_min: float = 1e-6         # clamp floor for distances and normalisations

    def __post_init__(self) -> None:
        if self.control_period is None:
            object.__setattr__(self, "control_period", self.dt)
        _require(self.horizon_T > 0.0, "horizon_T must be positive")
        _require(self.dt > 0.0, "dt must be positive")
        _require(self.dt <= self.horizon_T, "dt must not exceed horizon_T")
        ratio = self.control_period / self.dt
        _require(abs(ratio - round(ratio)) <= 1e-9 * max(1.0, ratio) and round(ratio) >= 1,
                 "control_period must be a positive integer multiple of dt")
        _require(0.0 < self.relaxation_a <= 1.0, "relaxation_a must lie in (0, 1]")
        _require(self.eps > 0.0, "eps must be positive")
        _require(self.max_iters >= 1, "max_iters must be at least 1")
        for name in ("d0", "d1", "d_min", "arrival_radius"):
            _require(getattr(self, name) > 0.0, f"{name} must be positive")
        for name in ("alpha", "beta0", "beta1", "eta"):
            _require(getattr(self, name) >= 0.0, f"{name} must be non-negative")

    @property
    def R(self) -> float:
        return self.d0

    @property
    def substeps_per_control(self) -> int:
        return int(round(self.control_period / self.dt))

    def with_overrides(self, **kw) -> "ModelParams":
        """Return a copy with the given fields replaced (aliases not resolved here)."""
        if "control_period" not in kw and "dt" in kw:
            # keep the default coupling unless the caller pinned it explicitly
            kw.setdefault("control_period", None)
        return replace(self, **kw)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class HorizonGrid:
    """Uniform time grid t0, t0+dt, ..., t0+n_steps*dt."""

    t0: float
    n_steps: int
    dt: float

    def __post_init__(self) -> None:
        _require(self.n_steps >= 1, "grid needs at least one step")
        _require(self.dt > 0.0, "grid dt must be positive")

    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n_steps + 1)

    @property
    def duration(self) -> float:
        return self.n_steps * self.dt


def make_grid(t0: float, horizon_T: float, dt: float) -> HorizonGrid:
    """Build the horizon grid, requiring horizon_T to be a multiple of dt.

    The ratio must be within 1e-9 of an integer; anything else is a
    configuration error rather than something to round silently.
    """
    _require(horizon_T > 0.0 and dt > 0.0, "horizon_T and dt must be positive")
    ratio = horizon_T / dt
    n = round(ratio)
    _require(n >= 1 and abs(ratio - n) <= 1e-9 * max(1.0, ratio),
             f"horizon_T={horizon_T} is not an integer multiple of dt={dt}")
    return HorizonGrid(t0=t0, n_steps=n, dt=dt)


@dataclass
class JointTrajectory:
    """Discrete joint plan of all drones over one horizon grid.

    Arrays are indexed ``[drone, time, component]``: positions ``r`` and
    velocities ``v`` plus co-states on the full grid (n, N+1, 3), controls
    ``u`` on the step grid (n, N, 3).  ``ids[i]`` names the drone in row i.
    """

    grid: HorizonGrid
    ids: tuple
    r: np.ndarray
    v: np.ndarray
    u: np.ndarray
    lam_r: np.ndarray
    lam_v: np.ndarray

    @property
    def n_drones(self) -> int:
        return len(self.ids)

    def validate(self) -> None:
        """Check array shapes and the defining explicit-Euler identities."""
        n, N = self.n_drones, self.grid.n_steps
        full, step = (n, N + 1, 3), (n, N, 3)
        for name, arr, shape in (("r", self.r, full), ("v", self.v, full),
                                 ("u", self.u, step), ("lam_r", self.lam_r, full),
                                 ("lam_v", self.lam_v, full)):
            _require(arr.shape == shape, f"{name} has shape {arr.shape}, want {shape}")
        dt = self.grid.dt
        _require(bool(np.array_equal(self.v[:, 1:], self.v[:, :-1] + dt * self.u)),
                 "velocity rows do not satisfy v[k+1] = v[k] + dt*u[k]")
        _require(bool(np.array_equal(self.r[:, 1:], self.r[:, :-1] + dt * self.v[:, :-1])),
                 "position rows do not satisfy r[k+1] = r[k] + dt*v[k]")


def specs_sorted(specs: Sequence[DroneSpec]) -> list[DroneSpec]:
    """Return specs in ascending id order, rejecting duplicate ids."""
    out = sorted(specs, key=lambda s: s.id)
    ids = [s.id for s in out]
    _require(len(set(ids)) == len(ids), f"duplicate drone ids in {ids}")
    return out


def stack_positions(specs: Sequence[DroneSpec]) -> np.ndarray:
    return np.array([[s.initial.position.x, s.initial.position.y, s.initial.position.z]
                     for s in specs], dtype=float).reshape(len(specs), 3)


def stack_velocities(specs: Sequence[DroneSpec]) -> np.ndarray:
    return np.array([[s.initial.velocity.x, s.initial.velocity.y, s.initial.velocity.z]
                     for s in specs], dtype=float).reshape(len(specs), 3)


def stack_targets(specs: Sequence[DroneSpec]) -> np.ndarray:
    return np.array([[s.target.x, s.target.y, s.target.z] for s in specs],
                    dtype=float).reshape(len(specs), 3)


def stack_speeds(specs: Sequence[DroneSpec]) -> np.ndarray:
    return np.array([s.desired_speed for s in specs], dtype=float)
