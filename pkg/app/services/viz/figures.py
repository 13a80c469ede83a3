"""
Figures written by ``viz``: localization heatmaps, per-step CAM and saliency
strips, amplification-ratio histograms and loss-landscape grids.

Everything renders off-screen (Agg) straight to files.
"""
from __future__ import annotations

import csv
import logging
from pathlib import Path
from typing import Dict, Iterable, Optional, Sequence, Union

import matplotlib

matplotlib.use("Agg")

import numpy as np  # noqa: E402
from matplotlib import colormaps  # noqa: E402
from matplotlib.figure import Figure  # noqa: E402
from PIL import Image  # noqa: E402

from app.services.climb.climber import ClimbTrace  # noqa: E402
from app.services.climb.diagnostics import AmplificationReport, LandscapeGrid  # noqa: E402
from app.services.data.storage import quantize  # noqa: E402

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def _prepare(path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def save_heatmap(path: PathLike, values: np.ndarray, cmap: Optional[str] = "jet") -> Path:
    """Normalized map as a colour-mapped PNG (or 8-bit gray with ``cmap=None``)."""
    path = _prepare(path)
    values = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0)
    if cmap is None:
        Image.fromarray(quantize(values)).save(path)
    else:
        rgba = colormaps[cmap](values)
        Image.fromarray(quantize(rgba[..., :3])).save(path)
    return path


def _image_panel(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image)
    if image.ndim == 3:
        image = image[0] if image.shape[0] == 1 else np.transpose(image, (1, 2, 0))
    return np.clip(image, 0.0, 1.0)


def save_overlay(path: PathLike, image: np.ndarray, values: np.ndarray, title: str = "") -> Path:
    path = _prepare(path)
    fig = Figure(figsize=(3, 3))
    ax = fig.subplots()
    ax.imshow(_image_panel(image), cmap="gray", vmin=0, vmax=1)
    ax.imshow(values, cmap="jet", alpha=0.5, vmin=0, vmax=1)
    ax.set_title(title, fontsize=8)
    ax.axis("off")
    fig.savefig(path, dpi=100, bbox_inches="tight")
    return path


def save_strip(path: PathLike, panels: Dict[int, np.ndarray], title: str, cmap: str = "jet") -> Path:
    """One row of maps keyed by step."""
    path = _prepare(path)
    steps = sorted(panels)
    fig = Figure(figsize=(1.6 * max(len(steps), 1), 1.9))
    axes = np.atleast_1d(fig.subplots(1, max(len(steps), 1)))
    for ax, step in zip(axes, steps):
        ax.imshow(panels[step], cmap=cmap, vmin=0, vmax=1)
        ax.set_title(f"t={step}", fontsize=7)
        ax.axis("off")
    fig.suptitle(title, fontsize=8)
    fig.savefig(path, dpi=100, bbox_inches="tight")
    return path


def cam_strip(path: PathLike, trace: ClimbTrace, steps: Iterable[int]) -> Path:
    """Normalized CAM(x^t) for the selected steps."""
    panels = {t: trace.records[t].cam_normalized for t in steps if 0 <= t < len(trace.records)}
    return save_strip(path, panels, f"CAM per step, class {trace.class_id}")


def amplification_histogram(path: PathLike, report: AmplificationReport, step: int) -> Path:
    """Histogram of amplification ratios at ``step`` over both regions."""
    path = _prepare(path)
    record = report.steps[min(step, len(report.steps) - 1)]
    fig = Figure(figsize=(4, 3))
    ax = fig.subplots()
    for values, label in (
        (record.discriminative, "discriminative"),
        (record.non_discriminative, "non-discriminative"),
    ):
        if values.size:
            ax.hist(values, bins=20, alpha=0.6, label=label)
    ax.set_xlabel(f"CAM(x^t) / CAM(x^0) at t={record.step}")
    ax.set_ylabel("pixels")
    ax.legend(fontsize=7)
    fig.savefig(path, dpi=100, bbox_inches="tight")
    return path


def landscape_csv(path: PathLike, grid: LandscapeGrid) -> Path:
    path = _prepare(path)
    with path.open("w", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=["alpha", "beta", "loss"])
        writer.writeheader()
        writer.writerows(grid.rows())
    return path


def landscape_plot(path: PathLike, grids: Dict[str, LandscapeGrid]) -> Path:
    """Side-by-side contour plots, one per labelled grid."""
    path = _prepare(path)
    fig = Figure(figsize=(3.2 * len(grids), 3))
    axes = np.atleast_1d(fig.subplots(1, len(grids)))
    for ax, (label, grid) in zip(axes, grids.items()):
        contour = ax.contourf(grid.betas, grid.alphas, grid.values, levels=20, cmap="viridis")
        fig.colorbar(contour, ax=ax)
        ax.set_title(label, fontsize=8)
        ax.set_xlabel("r")
        ax.set_ylabel("n")
    fig.savefig(path, dpi=100, bbox_inches="tight")
    return path


def write_rows(path: PathLike, rows: Sequence[dict]) -> Path:
    """Plain CSV of dict rows; columns in first-seen order, missing cells blank."""
    path = _prepare(path)
    fieldnames = list(dict.fromkeys(key for row in rows for key in row))
    with path.open("w", newline="") as handle:
        if rows:
            writer = csv.DictWriter(handle, fieldnames=fieldnames, restval="")
            writer.writeheader()
            writer.writerows(rows)
    return path
