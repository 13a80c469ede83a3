"""Classification losses with log-sum-exp stabilized forward and analytic backward."""
from __future__ import annotations

import numpy as np
from scipy.special import expit, log_softmax, softmax

from app.core.autodiff.tensor import Tensor
from app.core.errors import LabelError
from app.schemas.enums import ClassificationMode


def _as_targets(logits: Tensor, labels: np.ndarray, mode: ClassificationMode) -> np.ndarray:
    targets = np.asarray(labels, dtype=np.float64)
    if targets.ndim == 1:
        targets = targets[None, :]
    if targets.shape != logits.shape or logits.ndim != 2:
        raise LabelError(f"label shape {targets.shape} does not match logits {logits.shape}")
    if not np.isin(targets, (0.0, 1.0)).all():
        raise LabelError("labels must be 0/1 indicator vectors")
    if mode == ClassificationMode.SINGLE_LABEL:
        positives = targets.sum(axis=1)
        if not (positives == 1).all():
            raise LabelError(f"single_label mode needs exactly one positive per row, got {positives.tolist()}")
    return targets


def sigmoid_cross_entropy(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Mean over batch and classes of binary cross-entropy on logits."""
    z = logits.data
    per_element = np.maximum(z, 0.0) - z * targets + np.log1p(np.exp(-np.abs(z)))
    count = z.size
    return Tensor(
        per_element.mean(),
        "sigmoid_ce",
        (logits,),
        lambda g: (g * (expit(z) - targets) / count,),
    )


def softmax_cross_entropy(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Mean over batch of -log softmax(z)[y]."""
    z = logits.data
    batch = z.shape[0]
    value = -(log_softmax(z, axis=1) * targets).sum(axis=1).mean()
    return Tensor(
        value,
        "softmax_ce",
        (logits,),
        lambda g: (g * (softmax(z, axis=1) - targets) / batch,),
    )


def classification_losses(logits: Tensor, labels: np.ndarray, mode: ClassificationMode) -> Tensor:
    """Cross-entropy for ``mode``: sigmoid for multi-label, softmax for single-label."""
    targets = _as_targets(logits, labels, ClassificationMode(mode))
    if ClassificationMode(mode) == ClassificationMode.SINGLE_LABEL:
        return softmax_cross_entropy(logits, targets)
    return sigmoid_cross_entropy(logits, targets)
