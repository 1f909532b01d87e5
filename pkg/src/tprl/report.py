"""Figure rendering for training curves, driven traces, and test metrics.

Everything draws to files through the Agg backend so reports work headless;
figures land next to the delimited outputs they visualize.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

ACTION_COLORS = {0: "tab:gray", 1: "tab:blue", 2: "tab:orange"}


def _read_curves(csv_path: str) -> dict:
    cols = None
    rows = []
    with open(csv_path) as f:
        for line in f:
            if line.startswith("#"):
                continue
            rows.append(line.strip().split(","))
    header, data = rows[0], rows[1:]
    cols = {name: np.array([float(r[i]) for r in data]) for i, name in enumerate(header)}
    return cols


def plot_training_curves(csv_path: str, out_png: str) -> str:
    c = _read_curves(csv_path)
    fig, axes = plt.subplots(1, 3, figsize=(12, 3.4))
    ax = axes[0]
    ax.plot(c["epoch"], c["mean_period_reward"], color="tab:blue")
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean period reward")
    ax.set_title("Decision-period reward")
    ax = axes[1]
    ax.plot(c["epoch"], c["r1_step_reward_mean"], label="R1 (keep right)")
    ax.plot(c["epoch"], c["r2_step_reward_mean"], label="R2 (safe change)")
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean step reward")
    ax.set_title("Per-rule reward")
    ax.legend(fontsize=8)
    ax = axes[2]
    ax.plot(c["epoch"], c["value_loss"], label="value loss", color="tab:red")
    ax.plot(c["epoch"], c["policy_metric"], label="policy metric", color="tab:green")
    ax.set_xlabel("epoch")
    ax.set_title("Losses")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_png, dpi=130)
    plt.close(fig)
    return out_png


def _draw_map(ax, track_map) -> None:
    w = track_map.lane_width
    for lane, path in enumerate(track_map.centerlines):
        pts = np.vstack([path.points, path.points[:1]])
        ax.plot(pts[:, 0], pts[:, 1], ls="--", lw=0.6, color="0.7")
        normals = np.column_stack([-np.sin(path.headings), np.cos(path.headings)])
        for side, style in ((-0.5, "-"), (0.5, "-")):
            edge = path.points + side * w * normals
            if lane == 0 and side < 0 or lane == track_map.lane_count - 1 and side > 0:
                lw = 1.2
            else:
                lw = 0.5
            edge = np.vstack([edge, edge[:1]])
            ax.plot(edge[:, 0], edge[:, 1], style, lw=lw, color="0.4")
    ax.set_aspect("equal")


def plot_trace(track_map, rows: list[dict], out_png: str) -> str:
    """Driven paths over the map, ego colored by the held action."""
    fig, ax = plt.subplots(figsize=(6, 6))
    _draw_map(ax, track_map)
    ego = np.array([r["ego"][:2] for r in rows])
    target = np.array([r["target"][:2] for r in rows])
    actions = []
    current = 0
    for r in rows:
        if r["action"] is not None:
            current = int(r["action"])
        actions.append(current)
    actions = np.asarray(actions)
    for action in (0, 1, 2):
        mask = actions == action
        if mask.any():
            ax.plot(
                ego[mask, 0], ego[mask, 1], ".", ms=1.2,
                color=ACTION_COLORS[action],
                label=f"ego (action {action})",
            )
    ax.plot(target[:, 0], target[:, 1], ",", color="tab:purple", label="target")
    emergencies = np.array([("emergency" in r["events"]) for r in rows])
    if emergencies.any():
        ax.plot(ego[emergencies, 0], ego[emergencies, 1], "x", ms=5, color="red", label="emergency")
    ax.legend(fontsize=7, loc="upper right")
    ax.set_title("Driven trace")
    fig.tight_layout()
    fig.savefig(out_png, dpi=130)
    plt.close(fig)
    return out_png


def plot_metrics_summary(metrics_list: list[dict], labels: list[str], out_png: str) -> str:
    """Grouped bars for the three test metrics across runs."""
    fig, axes = plt.subplots(1, 3, figsize=(11, 3.2))
    x = np.arange(len(metrics_list))
    overall = [m["overall_compliance"] for m in metrics_list]
    axes[0].bar(x, overall, color="tab:blue")
    axes[0].set_title("Overall rule compliance")
    axes[0].set_ylim(0, 1.05)
    brakes = [m["emergency_brake_count"] for m in metrics_list]
    axes[1].bar(x, brakes, color="tab:red")
    axes[1].set_title("Emergency brake count")
    times = [m["time_cost"] for m in metrics_list]
    axes[2].bar(x, times, color="tab:green")
    axes[2].set_title("Time cost [s]")
    for ax in axes:
        ax.set_xticks(x)
        ax.set_xticklabels(labels, rotation=30, fontsize=7, ha="right")
    fig.tight_layout()
    fig.savefig(out_png, dpi=130)
    plt.close(fig)
    return out_png


def plot_trajectory(track_map, samples: np.ndarray, out_png: str, obstacles=None) -> str:
    """A planned trajectory over the map, speed-colored."""
    fig, ax = plt.subplots(figsize=(6, 6))
    _draw_map(ax, track_map)
    sc = ax.scatter(samples[:, 1], samples[:, 2], c=samples[:, 4], s=4, cmap="viridis")
    fig.colorbar(sc, ax=ax, label="speed [m/s]")
    if obstacles:
        for ob in obstacles:
            fp = ob.footprint_at(0.0)
            poly = np.vstack([fp, fp[:1]])
            ax.plot(poly[:, 0], poly[:, 1], color="tab:red", lw=1.0)
    ax.set_title("Planned trajectory")
    fig.tight_layout()
    fig.savefig(out_png, dpi=130)
    plt.close(fig)
    return out_png
