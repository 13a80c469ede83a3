"""
Per-pixel label assignment shared by seeds, pseudo ground truth and GT masks.

Label values: 0 background, k + 1 for class index k, 255 ambiguous.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from app.core.errors import LabelError
from app.schemas.enums import AMBIGUOUS_LABEL, BACKGROUND_LABEL


@dataclass(frozen=True)
class SeedMask:
    labels: np.ndarray
    theta: Optional[float] = None
    class_names: List[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        labels = np.asarray(self.labels)
        if labels.ndim != 2:
            raise LabelError(f"seed mask must be 2-D, got shape {labels.shape}")
        if labels.size and (labels.min() < 0 or labels.max() > AMBIGUOUS_LABEL):
            raise LabelError(f"label values must lie in 0..{AMBIGUOUS_LABEL}")
        labels = labels.astype(np.uint8)
        if self.class_names:
            valid = labels[labels != AMBIGUOUS_LABEL]
            if valid.size and valid.max() > len(self.class_names):
                raise LabelError(f"label {valid.max()} exceeds {len(self.class_names)} classes")
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)

    @property
    def shape(self):
        return self.labels.shape

    @property
    def foreground(self) -> np.ndarray:
        return (self.labels != BACKGROUND_LABEL) & (self.labels != AMBIGUOUS_LABEL)

    @property
    def ambiguous(self) -> np.ndarray:
        return self.labels == AMBIGUOUS_LABEL

    def class_ids(self) -> List[int]:
        """0-based class indices present."""
        values = np.unique(self.labels[self.foreground])
        return [int(v) - 1 for v in values]


def label_of(class_id: int) -> int:
    return class_id + 1
