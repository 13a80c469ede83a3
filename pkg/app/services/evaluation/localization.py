"""
Box-level localization metrics: box extraction, MaxBoxAccV2, GT-known and
Top-1 localization.
"""
from __future__ import annotations

import logging
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
from scipy import ndimage

from app.core.config import parse_float_list, settings
from app.core.errors import ConfigContradictionError, ShapeMismatchError
from app.models.classifier import ClassifierModel
from app.schemas.enums import ClassificationMode
from app.schemas.report import BBox, LocalizationReport

logger = logging.getLogger(__name__)

GT_KNOWN_IOU = 0.5
THETA_GRID = tuple(parse_float_list(settings.theta_grid))

BoxesLike = Union[BBox, Sequence[BBox]]


def boxes_from_map(values: np.ndarray, theta: float) -> List[BBox]:
    """Tight box per 4-connected component of ``values > theta``, in label order."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise ShapeMismatchError(f"box extraction needs a 2-D map, got {values.shape}")
    # default structuring element is the 4-connected cross
    labeled, count = ndimage.label(values > theta)
    boxes = []
    for rows, cols in ndimage.find_objects(labeled)[:count]:
        boxes.append(BBox(x_min=cols.start, y_min=rows.start, x_max=cols.stop - 1, y_max=rows.stop - 1))
    return boxes


def best_iou(predicted: Sequence[BBox], ground_truth: BoxesLike) -> float:
    """Largest IoU between any predicted and any ground-truth box (0 if none)."""
    targets = [ground_truth] if isinstance(ground_truth, BBox) else list(ground_truth)
    return max((p.iou(g) for p in predicted for g in targets), default=0.0)


def iou_table(maps: Sequence[np.ndarray], gt_boxes: Sequence[BoxesLike], theta_grid: Sequence[float]) -> np.ndarray:
    """best IoU per (image, theta)."""
    if len(maps) != len(gt_boxes):
        raise ShapeMismatchError(f"{len(maps)} maps but {len(gt_boxes)} ground-truth entries")
    table = np.zeros((len(maps), len(theta_grid)))
    for i, (values, truth) in enumerate(zip(maps, gt_boxes)):
        for j, theta in enumerate(theta_grid):
            table[i, j] = best_iou(boxes_from_map(values, theta), truth)
    return table


def _key(delta: float) -> str:
    return f"{delta:g}"


def max_box_acc_v2(
    maps: Sequence[np.ndarray],
    gt_boxes: Sequence[BoxesLike],
    iou_thresholds: Sequence[float] = (0.3, 0.5, 0.7),
    theta_grid: Sequence[float] = THETA_GRID,
) -> LocalizationReport:
    """Box accuracy maximized over theta for each IoU threshold, plus their mean.

    GT-known accuracy is the same sweep at IoU 0.5.
    """
    if not theta_grid:
        raise ConfigContradictionError("theta grid is empty")
    grid = list(theta_grid)
    table = iou_table(maps, gt_boxes, grid)

    def sweep(delta: float):
        accuracy = (table >= delta).mean(axis=0) if len(table) else np.zeros(len(grid))
        best = int(np.argmax(accuracy))  # first maximum -> smallest theta
        return float(accuracy[best]), grid[best]

    per_delta: Dict[str, float] = {}
    best_theta: Dict[str, float] = {}
    for delta in iou_thresholds:
        per_delta[_key(delta)], best_theta[_key(delta)] = sweep(delta)
    gt_known, gt_known_theta = sweep(GT_KNOWN_IOU)
    best_theta["gt_known"] = gt_known_theta
    return LocalizationReport(
        max_box_acc=per_delta,
        max_box_acc_mean=float(np.mean(list(per_delta.values()))) if per_delta else 0.0,
        best_theta=best_theta,
        gt_known=gt_known,
    )


def top1_from_parts(correct: Sequence[bool], ious: Sequence[float], iou_threshold: float = GT_KNOWN_IOU) -> float:
    """Fraction of images that are classified correctly AND localized at ``iou_threshold``."""
    correct = np.asarray(correct, dtype=bool)
    ious = np.asarray(ious, dtype=np.float64)
    if correct.shape != ious.shape:
        raise ShapeMismatchError(f"{correct.shape} correctness flags vs {ious.shape} IoUs")
    if not correct.size:
        return 0.0
    return float((correct & (ious >= iou_threshold)).mean())


def top1_localization(
    model: ClassifierModel,
    images: np.ndarray,
    labels: np.ndarray,
    gt_boxes: Sequence[BoxesLike],
    maps: Sequence[np.ndarray],
    iou_threshold: float = GT_KNOWN_IOU,
    theta: Optional[float] = None,
    theta_grid: Sequence[float] = THETA_GRID,
) -> Dict[str, float]:
    """Top-1 classification and Top-1 localization of a single-label model.

    ``maps`` are normalized image-resolution maps of each image's true class.
    Without ``theta`` the threshold maximizing box accuracy at ``iou_threshold``
    is used (the GT-known one at the default 0.5).
    """
    model.require_mode(ClassificationMode.SINGLE_LABEL, "Top-1 localization")
    labels = np.atleast_2d(labels)
    predicted = model.predict_logits(images).argmax(axis=1)
    correct = predicted == labels.argmax(axis=1)
    if theta is None:
        theta = max_box_acc_v2(maps, gt_boxes, (iou_threshold,), theta_grid).best_theta[_key(iou_threshold)]
    ious = [best_iou(boxes_from_map(values, theta), truth) for values, truth in zip(maps, gt_boxes)]
    result = {
        "top1_cls": float(correct.mean()) if correct.size else 0.0,
        "top1_loc": top1_from_parts(correct, ious, iou_threshold),
        "theta": float(theta),
    }
    logger.info(f"Top-1 cls {result['top1_cls']:.3f}, Top-1 loc {result['top1_loc']:.3f} at theta {theta}")
    return result
