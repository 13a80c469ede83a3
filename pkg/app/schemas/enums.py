"""
Type-safe enums for the climbing pipeline.

Provides string-based enums for classifier loss mode, climbing direction,
map resolution, restricting-mask provenance, aggregation and task mode.
"""
from enum import Enum


class ClassificationMode(str, Enum):
    """Loss the classifier is trained with."""
    MULTI_LABEL = "multi_label"      # sigmoid cross-entropy (segmentation seeds)
    SINGLE_LABEL = "single_label"    # softmax cross-entropy (object localization)


class ClimbDirection(str, Enum):
    """Sign applied to the objective gradient at each step."""
    CLIMB = "climb"
    ATTACK = "attack"

    @property
    def sign(self) -> float:
        return 1.0 if self is ClimbDirection.CLIMB else -1.0


class MapResolution(str, Enum):
    """Grid an attribution map lives on."""
    FEATURE = "feature"
    IMAGE = "image"


class MaskProvenance(str, Enum):
    """How a restricting mask was formed."""
    CAM_THRESHOLD = "cam_threshold"
    CAM_THRESHOLD_SALIENCY = "cam_threshold_saliency_background"


class Aggregation(str, Enum):
    """How per-step CAMs become the final localization map."""
    SUM = "sum"      # normalized sum over all steps
    LAST = "last"    # normalized CAM of the last manipulated image


class TaskMode(str, Enum):
    """Operator-facing preset selecting the regularization weight."""
    SEG = "seg"
    LOC = "loc"


class SwitchState(str, Enum):
    """on/off flag values accepted by the CLI."""
    ON = "on"
    OFF = "off"


# Seed / mask label values
BACKGROUND_LABEL = 0
AMBIGUOUS_LABEL = 255
