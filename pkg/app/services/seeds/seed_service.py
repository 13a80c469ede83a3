"""
Segmentation seeds and pseudo ground truth.

A seed labels each pixel with the argmax class among the per-class maps that
exceed the background threshold theta (ties -> lowest class id), and
background elsewhere. Pseudo ground truth marks pixels where the seed and a
saliency mask disagree as ambiguous (255).
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Mapping, Sequence, Tuple, Union

import numpy as np

from app.core.errors import ConfigContradictionError, LabelError, ShapeMismatchError, TensorFormatError
from app.models.seed_mask import SeedMask, label_of
from app.schemas.enums import AMBIGUOUS_LABEL, BACKGROUND_LABEL
from app.services.attribution.cam_service import image_map
from app.services.climb.climber import ClimbTrace
from app.services.data import storage
from app.services.evaluation.segmentation import pooled_confusion, scores_from_confusion

logger = logging.getLogger(__name__)

ClassMaps = Mapping[int, np.ndarray]


def _check_theta(theta: float) -> None:
    if not 0.0 < theta < 1.0:
        raise ConfigContradictionError(f"background threshold {theta} outside (0, 1)")


def seed_from_maps(maps: ClassMaps, theta: float, class_names: Sequence[str] = ()) -> SeedMask:
    """Argmax-over-threshold labelling of normalized per-class maps (class index -> map)."""
    _check_theta(theta)
    if not maps:
        raise LabelError("seed needs at least one class map")
    class_ids = sorted(maps)
    stack = np.stack([np.asarray(maps[c], dtype=np.float64) for c in class_ids])
    if stack.ndim != 3:
        raise ShapeMismatchError(f"class maps must be 2-D and equally sized, stacked to {stack.shape}")
    winner = stack.argmax(axis=0)
    peak = stack.max(axis=0)
    labels = np.asarray([label_of(c) for c in class_ids], dtype=np.uint8)[winner]
    labels[peak <= theta] = BACKGROUND_LABEL
    return SeedMask(labels=labels, theta=theta, class_names=list(class_names))


@dataclass(frozen=True)
class ThresholdSweep:
    best_theta: float
    best_miou: float
    curve: Dict[float, float]


def best_threshold_sweep(
    maps: Sequence[ClassMaps],
    gt_masks: Sequence[np.ndarray],
    theta_grid: Sequence[float],
    class_count: int,
) -> ThresholdSweep:
    """Dataset mIoU of the seeds at each theta (pooled confusion); ties keep the smaller theta."""
    if not theta_grid:
        raise ConfigContradictionError("theta grid is empty")
    if len(maps) != len(gt_masks):
        raise ShapeMismatchError(f"{len(maps)} map sets but {len(gt_masks)} ground-truth masks")
    curve: Dict[float, float] = {}
    best_theta, best_miou = None, -1.0
    for theta in sorted(theta_grid):
        seeds = [seed_from_maps(m, theta) for m in maps]
        score = scores_from_confusion(pooled_confusion(seeds, gt_masks, class_count)).miou
        curve[float(theta)] = score
        if score > best_miou:
            best_theta, best_miou = float(theta), score
    logger.info(f"Best seed threshold {best_theta} (mIoU {best_miou:.4f}) over {len(curve)} values")
    return ThresholdSweep(best_theta=best_theta, best_miou=best_miou, curve=curve)


def pseudo_gt_with_saliency(seed: SeedMask, saliency_foreground: np.ndarray) -> SeedMask:
    """Relabel seed/saliency conflicts as ambiguous; agreeing pixels are unchanged."""
    salient = np.asarray(saliency_foreground, dtype=bool)
    if salient.shape != seed.shape:
        raise ShapeMismatchError(f"saliency {salient.shape} does not match seed {seed.shape}")
    labels = seed.labels.copy()
    foreground = seed.foreground
    background = labels == BACKGROUND_LABEL
    labels[(foreground & ~salient) | (background & salient)] = AMBIGUOUS_LABEL
    return SeedMask(labels=labels, theta=seed.theta, class_names=seed.class_names)


# -------- Traces -> maps --------
def trace_maps(traces: Sequence[ClimbTrace], image_hw: Tuple[int, int]) -> Dict[int, np.ndarray]:
    """Final localization map of each class, normalized at image resolution."""
    return {trace.class_id: image_map(trace.final_map.values, image_hw) for trace in traces}


def step_maps(traces: Sequence[ClimbTrace], image_hw: Tuple[int, int]) -> List[Dict[int, np.ndarray]]:
    """Per step t, the class maps as aggregated up to t (image resolution)."""
    if not traces:
        return []
    per_class = {trace.class_id: trace.step_maps() for trace in traces}
    steps = min(len(maps) for maps in per_class.values())
    return [{c: image_map(per_class[c][t], image_hw) for c in per_class} for t in range(steps)]


def step_foregrounds(traces: Sequence[ClimbTrace], image_hw: Tuple[int, int], theta: float) -> List[np.ndarray]:
    """Seed foreground (any class above theta) for every step."""
    _check_theta(theta)
    return [np.stack(list(maps.values())).max(axis=0) > theta for maps in step_maps(traces, image_hw)]


def seed_miou_per_step(
    traces_per_image: Sequence[Sequence[ClimbTrace]],
    gt_masks: Sequence[np.ndarray],
    theta: float,
    class_count: int,
) -> List[float]:
    """Dataset seed mIoU obtained from the step-t maps, t = 0..T."""
    per_image = [step_maps(traces, gt.shape) for traces, gt in zip(traces_per_image, gt_masks)]
    if not per_image:
        return []
    steps = min(len(maps) for maps in per_image)
    curve = []
    for t in range(steps):
        seeds = [seed_from_maps(maps[t], theta) for maps in per_image]
        curve.append(scores_from_confusion(pooled_confusion(seeds, gt_masks, class_count)).miou)
    return curve


# -------- Files --------
def save_seed(path: Union[str, Path], seed: SeedMask) -> Path:
    """Paletted PNG plus ``<name>.json`` sidecar mapping label values to class names."""
    path = storage.save_label_mask(path, seed.labels)
    sidecar = {
        "theta": seed.theta,
        "labels": {
            str(BACKGROUND_LABEL): "background",
            str(AMBIGUOUS_LABEL): "ambiguous",
            **{str(label_of(k)): name for k, name in enumerate(seed.class_names)},
        },
    }
    storage.write_json(path.with_suffix(".json"), sidecar)
    return path


def load_seed(path: Union[str, Path]) -> SeedMask:
    path = Path(path)
    labels = storage.load_label_mask(path)
    sidecar_path = path.with_suffix(".json")
    theta, names = None, []
    if sidecar_path.exists():
        try:
            sidecar = json.loads(sidecar_path.read_text())
        except json.JSONDecodeError as exc:
            raise TensorFormatError(f"invalid JSON: {exc.msg}", str(sidecar_path), exc.pos) from exc
        theta = sidecar.get("theta")
        class_labels = sorted(
            int(k) for k in sidecar.get("labels", {}) if int(k) not in (BACKGROUND_LABEL, AMBIGUOUS_LABEL)
        )
        names = [sidecar["labels"][str(k)] for k in class_labels]
    return SeedMask(labels=labels, theta=theta, class_names=names)
