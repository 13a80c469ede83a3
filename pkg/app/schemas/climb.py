"""
Pydantic schemas for adversarial climbing.

ClimbConfig carries every knob of the iterative manipulation; the defaults
are the segmentation-seed setting, and ``for_task`` swaps the regularization
weight for the localization setting.
"""
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from app.core.config import settings
from app.schemas.enums import Aggregation, ClimbDirection, TaskMode


class ClimbConfig(BaseModel):
    """Hyper-parameters of one climbing run."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    steps: int = Field(default=27, ge=0, description="Number of manipulation steps T")
    xi: float = Field(default=0.008, ge=0.0, description="Step size")
    reg_lambda: float = Field(default=7.0, ge=0.0, description="Weight of the restricting-mask penalty")
    tau: float = Field(default=0.5, gt=0.0, lt=1.0, description="Restricting-mask threshold")
    direction: ClimbDirection = ClimbDirection.CLIMB
    suppress_other_classes: bool = True
    aggregation: Aggregation = Aggregation.SUM
    # Binary feature-resolution mask of pixels a saliency detector calls background
    saliency_background: Optional[np.ndarray] = Field(default=None, exclude=True)

    @field_validator("saliency_background")
    @classmethod
    def validate_saliency(cls, v):
        """Coerce to a read-only boolean 2-D mask."""
        if v is None:
            return None
        mask = np.asarray(v)
        if mask.ndim != 2:
            raise ValueError(f"saliency background must be 2-D, got shape {mask.shape}")
        mask = mask.astype(bool)
        mask.setflags(write=False)
        return mask

    @classmethod
    def for_task(cls, task: TaskMode, **overrides) -> "ClimbConfig":
        """Defaults for segmentation seeds (lambda=7) or localization (lambda=0.01)."""
        reg_lambda = settings.lambda_seg if TaskMode(task) == TaskMode.SEG else settings.lambda_loc
        values = {
            "steps": settings.steps,
            "xi": settings.xi,
            "reg_lambda": reg_lambda,
            "tau": settings.tau,
            "suppress_other_classes": settings.suppress_other_classes,
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)

    def audit_dict(self) -> dict:
        """JSON-safe view used in summaries and trace manifests."""
        data = self.model_dump(mode="json")
        data["saliency_background"] = self.saliency_background is not None
        return data


class LandscapeConfig(BaseModel):
    """Sampling grid for a 2-D loss landscape around one image."""

    grid_n: int = Field(default_factory=lambda: settings.landscape_grid, ge=2)
    radius: float = Field(default_factory=lambda: settings.landscape_radius, ge=0.0)
    seed: int = Field(default_factory=lambda: settings.seed, ge=0)
