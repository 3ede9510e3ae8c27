"""Figure rendering from sweep CSVs.

Reads the delimited output a sweep wrote and drops PNG files next to it:
cost box plot and averages versus sample count, step averages, success rates
and (when a trajectory CSV is present) the driven path.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_BASELINE_COLOR = "#3b6bb5"
_WARMSTART_COLOR = "#c0443e"


def _read_csv(path: Path) -> list[dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def _by_controller(rows: list[dict[str, str]]) -> dict[str, list[dict[str, str]]]:
    grouped: dict[str, list[dict[str, str]]] = {}
    for row in rows:
        grouped.setdefault(row["controller"], []).append(row)
    return grouped


def _sample_counts(rows: list[dict[str, str]]) -> list[int]:
    return sorted({int(row["samples"]) for row in rows})


def render_sweep_figures(out_dir: str | Path) -> list[Path]:
    """Render every figure the CSVs in ``out_dir`` support; returns the paths."""
    out = Path(out_dir)
    episodes = _read_csv(out / "episodes.csv")
    aggregate = _read_csv(out / "aggregate.csv")
    written: list[Path] = []

    samples = _sample_counts(episodes)
    controllers = sorted(_by_controller(episodes))
    colors = {c: (_BASELINE_COLOR if c == "mppi" else _WARMSTART_COLOR) for c in controllers}

    # Cost distribution over successful episodes, one box per (samples, controller).
    fig, ax = plt.subplots(figsize=(7, 4))
    width = 0.35
    for ci, controller in enumerate(controllers):
        data, positions = [], []
        for si, count in enumerate(samples):
            costs = [
                float(r["cost"])
                for r in episodes
                if r["controller"] == controller
                and int(r["samples"]) == count
                and r["outcome"] == "goal_reached"
            ]
            if costs:
                data.append(costs)
                positions.append(si + (ci - (len(controllers) - 1) / 2) * width)
        if data:
            box = ax.boxplot(data, positions=positions, widths=width * 0.9, patch_artist=True)
            for patch in box["boxes"]:
                patch.set_facecolor(colors[controller])
                patch.set_alpha(0.6)
    ax.set_xticks(range(len(samples)))
    ax.set_xticklabels([str(s) for s in samples])
    ax.set_xlabel("Number of samples")
    ax.set_ylabel("Cost")
    ax.set_title("Cost over successful episodes")
    handles = [plt.Rectangle((0, 0), 1, 1, fc=colors[c], alpha=0.6) for c in controllers]
    ax.legend(handles, controllers, loc="best")
    fig.tight_layout()
    path = out / "cost_box_vs_samples.png"
    fig.savefig(path, dpi=130)
    plt.close(fig)
    written.append(path)

    # Aggregate bar charts straight from aggregate.csv.
    for column, label, filename in (
        ("mean_cost", "Average cost", "avg_cost_vs_samples.png"),
        ("mean_steps", "Average steps", "avg_steps_vs_samples.png"),
    ):
        fig, ax = plt.subplots(figsize=(7, 4))
        for ci, controller in enumerate(controllers):
            rows = [r for r in aggregate if r["controller"] == controller]
            rows.sort(key=lambda r: int(r["samples"]))
            xs = np.arange(len(rows)) + (ci - (len(controllers) - 1) / 2) * width
            ys = [float(r[column]) for r in rows]
            ax.bar(xs, ys, width=width * 0.9, color=colors[controller], alpha=0.75, label=controller)
        ax.set_xticks(range(len(samples)))
        ax.set_xticklabels([str(s) for s in samples])
        ax.set_xlabel("Number of samples")
        ax.set_ylabel(label)
        ax.legend(loc="best")
        fig.tight_layout()
        path = out / filename
        fig.savefig(path, dpi=130)
        plt.close(fig)
        written.append(path)

    # Success rate per cell.
    fig, ax = plt.subplots(figsize=(7, 4))
    for controller in controllers:
        rates = []
        for count in samples:
            cell = [
                r for r in episodes
                if r["controller"] == controller and int(r["samples"]) == count
            ]
            good = sum(r["outcome"] == "goal_reached" for r in cell)
            rates.append(good / len(cell) if cell else np.nan)
        ax.plot(samples, rates, marker="o", color=colors[controller], label=controller)
    ax.set_ylim(-0.05, 1.05)
    ax.set_xlabel("Number of samples")
    ax.set_ylabel("Success rate")
    ax.legend(loc="best")
    fig.tight_layout()
    path = out / "success_rate_vs_samples.png"
    fig.savefig(path, dpi=130)
    plt.close(fig)
    written.append(path)
    return written


def render_trajectory(trajectory_csv: str | Path, png_path: str | Path) -> Path:
    """Plot the x/y path from a trajectory CSV."""
    rows = _read_csv(Path(trajectory_csv))
    xs = [float(r["state_0"]) for r in rows]
    ys = [float(r["state_1"]) for r in rows]
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.plot(xs, ys, "-", color=_BASELINE_COLOR, linewidth=1.2)
    ax.plot(xs[0], ys[0], "go", label="start")
    ax.plot(xs[-1], ys[-1], "rs", label="end")
    ax.set_aspect("equal", adjustable="datalim")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.legend(loc="best")
    fig.tight_layout()
    path = Path(png_path)
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def render_training_curve(history_csv: str | Path, png_path: str | Path) -> Path:
    rows = _read_csv(Path(history_csv))
    epochs = [int(r["epoch"]) for r in rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(epochs, [float(r["train_loss"]) for r in rows], label="train")
    ax.plot(epochs, [float(r["val_loss"]) for r in rows], label="validation")
    ax.set_yscale("log")
    ax.set_xlabel("Epoch")
    ax.set_ylabel("Huber loss")
    ax.legend(loc="best")
    fig.tight_layout()
    path = Path(png_path)
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path
