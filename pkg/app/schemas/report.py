from pydantic import BaseModel, Field, model_validator
from typing import Dict, List, Optional


class BBox(BaseModel):
    """Axis-aligned box with inclusive pixel coordinates."""
    x_min: int = Field(ge=0)
    y_min: int = Field(ge=0)
    x_max: int
    y_max: int

    @model_validator(mode="after")
    def validate_corners(self):
        """Corners must be ordered."""
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise ValueError(f"unordered box corners: {self}")
        return self

    @property
    def area(self) -> int:
        return (self.x_max - self.x_min + 1) * (self.y_max - self.y_min + 1)

    def iou(self, other: "BBox") -> float:
        """Intersection over union in pixel counts."""
        ix = min(self.x_max, other.x_max) - max(self.x_min, other.x_min) + 1
        iy = min(self.y_max, other.y_max) - max(self.y_min, other.y_min) + 1
        if ix <= 0 or iy <= 0:
            return 0.0
        inter = ix * iy
        return inter / (self.area + other.area - inter)

    def within(self, height: int, width: int) -> bool:
        return self.x_max < width and self.y_max < height

    def as_tuple(self):
        return (self.x_min, self.y_min, self.x_max, self.y_max)


class SegmentationScores(BaseModel):
    """IoU per label value plus the mean over classes present in pred or gt."""
    per_class_iou: Dict[int, float]
    miou: float


class RateReport(BaseModel):
    """Foreground precision / recall / F1, macro-averaged over classes."""
    precision: float
    recall: float
    f1: float
    per_class: Dict[int, Dict[str, float]] = {}
    # Names of rates whose denominator was zero (reported as 0)
    undefined: List[str] = []


class NoisePoint(BaseModel):
    """Proportion of noise in the region newly localized at one step."""
    step: int
    rate: float
    new_pixels: int
    noisy_pixels: int
    empty: bool


class LocalizationReport(BaseModel):
    """Box-level localization metrics."""
    max_box_acc: Dict[str, float]            # IoU threshold (as string) -> accuracy
    max_box_acc_mean: float
    best_theta: Dict[str, float]
    gt_known: float
    top1_cls: Optional[float] = None
    top1_loc: Optional[float] = None


class EvalReport(BaseModel):
    """Everything an evaluation subcommand reports."""
    segmentation: Optional[SegmentationScores] = None
    rates: Optional[RateReport] = None
    noise_curve: List[NoisePoint] = []
    localization: Optional[LocalizationReport] = None
    best_theta: Optional[float] = None
    class_names: List[str] = []
    per_image: Optional[List[Dict[str, float]]] = None
