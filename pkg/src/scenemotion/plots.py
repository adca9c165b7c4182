"""Static figure rendering for reports.

Three views: a top-down trajectory overlay, a per-frame local-salience
heatmap, and a global-salience scatter over the cloud. Everything renders
through the Agg backend to files with fixed sizes, so outputs are stable
across runs given identical inputs.
"""
from __future__ import annotations

from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .core.types import ScenePointCloud  # noqa: E402
from .heads import PredictionBundle  # noqa: E402
from .synthworld.episodes import EpisodeRecord  # noqa: E402

_DPI = 120


def _save(fig, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def plot_trajectory_overlay(pred: PredictionBundle, truth: EpisodeRecord,
                            cloud: ScenePointCloud, path: Path) -> Path:
    """Top-down view: cloud, observed/true/predicted paths, gaze points."""
    fig, ax = plt.subplots(figsize=(6, 6))
    pts = cloud.points
    ax.scatter(pts[:, 0], pts[:, 1], s=1, c="0.8", linewidths=0,
               rasterized=True, label="_scene")
    obs = truth.observed.translations
    fut = truth.future.translations
    observed_frames = len(truth.observed.frames)
    pred_fut = pred.translations[observed_frames:]
    ax.plot(obs[:, 0], obs[:, 1], "o-", color="tab:blue", ms=3,
            label="observed")
    ax.plot(fut[:, 0], fut[:, 1], "o-", color="tab:green", ms=3,
            label="true future")
    ax.plot(pred_fut[:, 0], pred_fut[:, 1], "o--", color="tab:red", ms=3,
            label="predicted future")
    gaze = truth.gaze.points
    ax.scatter(gaze[:, 0], gaze[:, 1], marker="x", color="tab:purple", s=30,
               label="gaze")
    ax.set_aspect("equal")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.legend(loc="upper right", fontsize=8)
    ax.set_title("trajectory overlay (top-down)")
    return _save(fig, path)


def plot_local_salience(pred: PredictionBundle, path: Path,
                        block: int = -1) -> Path:
    """Heatmap of per-frame local salience rows for one fusion block."""
    fig, ax = plt.subplots(figsize=(8, 3.2))
    if pred.local_salience.size == 0:
        ax.text(0.5, 0.5, "no local salience recorded",
                ha="center", va="center", transform=ax.transAxes)
        ax.set_axis_off()
        return _save(fig, path)
    weights = pred.local_salience[block]
    order = np.argsort(-weights.mean(axis=0), kind="stable")
    im = ax.imshow(weights[:, order], aspect="auto", cmap="viridis",
                   interpolation="nearest")
    fig.colorbar(im, ax=ax, label="salience")
    ax.set_xlabel("scene point (sorted by mean salience)")
    ax.set_ylabel("frame")
    ax.set_title("local scene salience across time")
    return _save(fig, path)


def plot_global_salience(pred: PredictionBundle, cloud: ScenePointCloud,
                         path: Path, block: int = -1) -> Path:
    """Top-down scatter of the cloud colored by global salience."""
    fig, ax = plt.subplots(figsize=(6, 6))
    pts = cloud.points
    if pred.global_salience.size == 0:
        ax.scatter(pts[:, 0], pts[:, 1], s=2, c="0.8", linewidths=0)
        ax.set_title("global salience (none recorded)")
    else:
        weights = pred.global_salience[block]
        sc = ax.scatter(pts[:, 0], pts[:, 1], s=4, c=weights, cmap="plasma",
                        linewidths=0)
        fig.colorbar(sc, ax=ax, label="salience")
        ax.set_title("global scene salience")
    ax.set_aspect("equal")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    return _save(fig, path)


def render_report_figures(pred: PredictionBundle, truth: EpisodeRecord,
                          cloud: ScenePointCloud, out_dir: Path,
                          prefix: str = "episode") -> list[Path]:
    out = Path(out_dir)
    return [
        plot_trajectory_overlay(pred, truth, cloud,
                                out / f"{prefix}_trajectory.png"),
        plot_local_salience(pred, out / f"{prefix}_local_salience.png"),
        plot_global_salience(pred, cloud,
                             out / f"{prefix}_global_salience.png"),
    ]
