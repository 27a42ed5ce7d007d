"""Figure rendering for run, sweep and convergence outputs.

Everything renders through the Agg backend straight to files; nothing here
opens a window.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .engine import SimulationLog

__all__ = [
    "plot_trajectories",
    "plot_crossing_points",
    "plot_convergence",
    "plot_sweep",
]

_GROUP_COLORS = ("tab:blue", "tab:red", "tab:green", "tab:orange", "tab:purple")


def _group_color(group: int) -> str:
    return _GROUP_COLORS[group % len(_GROUP_COLORS)]


def plot_trajectories(log: SimulationLog, out_dir: Path) -> list[Path]:
    """Top (x,y) and side (x,z) views of every drone's realized path."""
    out_dir = Path(out_dir)
    written = []
    for name, (ai, aj), labels in (("trajectory_xy.png", (0, 1), ("x [m]", "y [m]")),
                                   ("trajectory_xz.png", (0, 2), ("x [m]", "z [m]"))):
        fig, ax = plt.subplots(figsize=(8, 4.5))
        seen_groups = set()
        for i, spec in enumerate(log.specs):
            color = _group_color(spec.group)
            label = f"group {spec.group}" if spec.group not in seen_groups else None
            seen_groups.add(spec.group)
            ax.plot(log.r[:, i, ai], log.r[:, i, aj], color=color, alpha=0.5,
                    linewidth=0.8, label=label)
            ax.plot(log.r[0, i, ai], log.r[0, i, aj], marker="o", color=color,
                    markersize=2)
            tgt = spec.target.as_array()
            ax.plot(tgt[ai], tgt[aj], marker="*", color=color, markersize=4)
        ax.set_xlabel(labels[0])
        ax.set_ylabel(labels[1])
        ax.set_title(f"{len(log.specs)} drones, realized trajectories")
        if seen_groups:
            ax.legend(loc="best", fontsize=8)
        fig.tight_layout()
        path = out_dir / name
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)
    return written


def plot_crossing_points(points: Sequence[tuple], path: Path,
                         axis_labels=("y [m]", "z [m]")) -> Path | None:
    """Scatter of plane-crossing points, one color per group."""
    if not points:
        return None
    fig, ax = plt.subplots(figsize=(6, 4))
    groups = sorted({p[3] for p in points})
    for g in groups:
        pts = np.array([(p[0], p[1]) for p in points if p[3] == g])
        ax.scatter(pts[:, 0], pts[:, 1], s=12, alpha=0.7,
                   color=_group_color(g), label=f"group {g}")
    ax.set_xlabel(axis_labels[0])
    ax.set_ylabel(axis_labels[1])
    ax.set_title("cross-section crossing points")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def plot_convergence(traces: Sequence[tuple[float, Sequence[float]]],
                     path: Path, eps: float | None = None) -> Path:
    """Semilog iteration-error traces for several relaxation values."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for a, trace in traces:
        ax.semilogy(np.arange(1, len(trace) + 1), trace, label=f"a={a:g}")
    if eps is not None:
        ax.axhline(eps, color="gray", linestyle=":", linewidth=1,
                   label=f"eps={eps:g}")
    ax.set_xlabel("iteration")
    ax.set_ylabel("fixed-point error")
    ax.set_title("solver convergence")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def plot_sweep(rows: Sequence[dict], param: str, path: Path) -> Path | None:
    """Mean metrics vs swept value, one subplot per available metric."""
    metrics = [("min_pairwise_distance", "min pairwise distance [m]"),
               ("avg_directed_speed", "avg directed speed [m/s]")]
    usable = [(k, lbl) for k, lbl in metrics
              if any(r.get(f"mean_{k}") is not None for r in rows)]
    if not usable or not rows:
        return None
    fig, axes = plt.subplots(1, len(usable), figsize=(5 * len(usable), 4),
                             squeeze=False)
    x = [r[param] for r in rows]
    for col, (key, label) in enumerate(usable):
        ax = axes[0][col]
        y = [r.get(f"mean_{key}") for r in rows]
        err = [r.get(f"std_{key}") or 0.0 for r in rows]
        ax.errorbar(x, y, yerr=err, marker="o", capsize=3)
        ax.set_xlabel(param)
        ax.set_ylabel(label)
        if min(v for v in x if v is not None) > 0 and max(x) / min(x) >= 10:
            ax.set_xscale("log")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)
