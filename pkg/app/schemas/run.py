"""
Resolved configuration of one CLI invocation.

Every subcommand receives a RunConfig built by
:class:`app.services.settings_resolver.RunConfigResolver`; the same object is
embedded verbatim in the run's summary.
"""
from typing import List, Optional

from pydantic import BaseModel, Field, field_validator

from app.schemas.climb import ClimbConfig, LandscapeConfig
from app.schemas.dataset import GeneratorConfig
from app.schemas.enums import ClassificationMode, TaskMode
from app.schemas.training import TrainConfig

SUMMARY_SCHEMA_VERSION = 1

SWEEP_PARAMETERS = ("lambda", "tau", "xi", "steps")


def classification_mode_for(task: TaskMode) -> ClassificationMode:
    """Segmentation seeds use multi-label training, localization single-label."""
    if TaskMode(task) == TaskMode.LOC:
        return ClassificationMode.SINGLE_LABEL
    return ClassificationMode.MULTI_LABEL


class RunConfig(BaseModel):
    command: str
    out: str
    seed: int = Field(ge=0)
    workers: int = Field(default=1, ge=1)
    task: TaskMode = TaskMode.SEG

    # Inputs
    data: Optional[str] = None
    split: str = "test"
    model: Optional[str] = None
    climb_dir: Optional[str] = None
    pred: Optional[str] = None
    gt: Optional[str] = None
    saliency: Optional[str] = None

    # Stage configs
    climb: ClimbConfig = Field(default_factory=ClimbConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    generator: GeneratorConfig = Field(default_factory=GeneratorConfig)
    train_count: int = Field(default=200, ge=1)
    test_count: int = Field(default=50, ge=1)
    landscape: LandscapeConfig = Field(default_factory=LandscapeConfig)

    # Evaluation
    theta: Optional[float] = Field(default=None, gt=0.0, lt=1.0)
    theta_grid: List[float] = Field(default_factory=list)
    iou_thresholds: List[float] = Field(default_factory=lambda: [0.3, 0.5, 0.7])
    per_image: bool = False
    ablation: bool = False

    # viz / sweep
    viz_items: int = Field(default=4, ge=1)
    viz_steps: List[int] = Field(default_factory=lambda: [0, 5, 10, 20])
    sweep_param: Optional[str] = None
    sweep_values: List[float] = Field(default_factory=list)

    @field_validator("theta_grid")
    @classmethod
    def validate_theta_grid(cls, v):
        """Thresholds must lie strictly inside (0, 1)."""
        if any(not 0.0 < t < 1.0 for t in v):
            raise ValueError("theta grid values must lie in (0, 1)")
        return sorted(v)

    @field_validator("sweep_param")
    @classmethod
    def validate_sweep_param(cls, v):
        if v is not None and v not in SWEEP_PARAMETERS:
            raise ValueError(f"sweep parameter must be one of {', '.join(SWEEP_PARAMETERS)}")
        return v

    @property
    def classification_mode(self) -> ClassificationMode:
        return classification_mode_for(self.task)

    def audit_dict(self) -> dict:
        data = self.model_dump(mode="json", exclude={"climb"})
        data["climb"] = self.climb.audit_dict()
        return data
