"""
Segmentation-seed metrics.

Everything is computed from a confusion matrix over label values
0..class_count (rows = ground truth, columns = prediction). Pixels that are
ambiguous (255) in either mask never enter the matrix, so per-image and
pooled dataset scores share one code path.
"""
from __future__ import annotations

import logging
from typing import Iterable, List, Sequence, Tuple, Union

import numpy as np

from app.core.errors import ShapeMismatchError
from app.models.seed_mask import SeedMask
from app.schemas.enums import AMBIGUOUS_LABEL
from app.schemas.report import NoisePoint, RateReport, SegmentationScores

logger = logging.getLogger(__name__)

MaskLike = Union[SeedMask, np.ndarray]


def _labels(mask: MaskLike) -> np.ndarray:
    return mask.labels if isinstance(mask, SeedMask) else np.asarray(mask)


def confusion(pred: MaskLike, gt: MaskLike, class_count: int) -> np.ndarray:
    """(K+1) x (K+1) pixel counts; ambiguous pixels in pred or gt are skipped."""
    p, g = _labels(pred), _labels(gt)
    if p.shape != g.shape:
        raise ShapeMismatchError(f"prediction {p.shape} and ground truth {g.shape} differ")
    size = class_count + 1
    valid = (p != AMBIGUOUS_LABEL) & (g != AMBIGUOUS_LABEL)
    p = p[valid].astype(np.int64)
    g = g[valid].astype(np.int64)
    if p.size and (p.max() >= size or g.max() >= size):
        raise ShapeMismatchError(f"label value exceeds class count {class_count}")
    return np.bincount(g * size + p, minlength=size * size).reshape(size, size)


def pooled_confusion(preds: Iterable[MaskLike], gts: Iterable[MaskLike], class_count: int) -> np.ndarray:
    size = class_count + 1
    total = np.zeros((size, size), dtype=np.int64)
    for pred, gt in zip(preds, gts):
        total += confusion(pred, gt, class_count)
    return total


def scores_from_confusion(matrix: np.ndarray) -> SegmentationScores:
    """IoU per label value; labels absent from both pred and gt are left out of the mean."""
    inter = np.diag(matrix)
    union = matrix.sum(axis=0) + matrix.sum(axis=1) - inter
    per_class = {int(c): float(inter[c] / union[c]) for c in range(len(inter)) if union[c] > 0}
    miou_value = float(np.mean(list(per_class.values()))) if per_class else 0.0
    return SegmentationScores(per_class_iou=per_class, miou=miou_value)


def miou(pred: MaskLike, gt: MaskLike, class_count: int) -> SegmentationScores:
    """Per-class IoU (background included) and their mean for one image."""
    return scores_from_confusion(confusion(pred, gt, class_count))


def rates_from_confusion(matrix: np.ndarray) -> RateReport:
    """Foreground precision / recall / F1 per class, macro-averaged over classes seen."""
    per_class = {}
    undefined: List[str] = []
    for c in range(1, len(matrix)):
        tp = float(matrix[c, c])
        predicted = float(matrix[:, c].sum())
        actual = float(matrix[c, :].sum())
        if predicted == 0 and actual == 0:
            continue
        if predicted > 0:
            precision = tp / predicted
        else:
            precision = 0.0
            undefined.append(f"precision[{c}]")
        if actual > 0:
            recall = tp / actual
        else:
            recall = 0.0
            undefined.append(f"recall[{c}]")
        f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
        per_class[c] = {"precision": precision, "recall": recall, "f1": f1}

    if undefined:
        logger.warning(f"zero denominators reported as 0: {', '.join(undefined)}")
    if not per_class:
        return RateReport(precision=0.0, recall=0.0, f1=0.0, per_class={}, undefined=["no foreground"])
    return RateReport(
        precision=float(np.mean([v["precision"] for v in per_class.values()])),
        recall=float(np.mean([v["recall"] for v in per_class.values()])),
        f1=float(np.mean([v["f1"] for v in per_class.values()])),
        per_class=per_class,
        undefined=undefined,
    )


def precision_recall_f1(pred: MaskLike, gt: MaskLike, class_count: int) -> RateReport:
    return rates_from_confusion(confusion(pred, gt, class_count))


# -------- Proportion of noise --------
def noise_counts(foregrounds: Sequence[np.ndarray], gt: MaskLike) -> List[Tuple[int, int]]:
    """(new, noisy) pixel counts per step for boolean foreground maps fg_0..fg_T."""
    g = _labels(gt)
    if not foregrounds:
        return []
    initial = np.asarray(foregrounds[0], dtype=bool)
    valid = g != AMBIGUOUS_LABEL
    background = (g == 0) & valid
    counts = []
    for fg in foregrounds:
        fg = np.asarray(fg, dtype=bool)
        if fg.shape != g.shape:
            raise ShapeMismatchError(f"foreground {fg.shape} and ground truth {g.shape} differ")
        new = fg & ~initial & valid
        counts.append((int(new.sum()), int((new & background).sum())))
    return counts


def noise_curve(counts: Sequence[Tuple[int, int]]) -> List[NoisePoint]:
    points = []
    for step, (new, noisy) in enumerate(counts):
        points.append(
            NoisePoint(
                step=step,
                rate=noisy / new if new else 0.0,
                new_pixels=new,
                noisy_pixels=noisy,
                empty=new == 0,
            )
        )
    return points


def proportion_of_noise(foregrounds: Sequence[np.ndarray], gt: MaskLike) -> List[NoisePoint]:
    """Share of the newly localized region (vs. step 0) that is true background, per step."""
    return noise_curve(noise_counts(foregrounds, gt))


def pooled_noise(per_image: Sequence[Sequence[Tuple[int, int]]]) -> List[NoisePoint]:
    """Dataset-level curve: counts summed over images before dividing."""
    if not per_image:
        return []
    steps = min(len(counts) for counts in per_image)
    totals = [
        (sum(counts[t][0] for counts in per_image), sum(counts[t][1] for counts in per_image))
        for t in range(steps)
    ]
    return noise_curve(totals)
