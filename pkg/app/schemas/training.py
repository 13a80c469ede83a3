"""Pydantic schemas for the toy classifier and its training loop."""
from typing import List

from pydantic import BaseModel, Field, field_validator

from app.schemas.enums import ClassificationMode


class ArchitectureSpec(BaseModel):
    """Shape of the conv stack; stored verbatim in checkpoint manifests."""

    in_channels: int = Field(default=1, ge=1)
    block_channels: List[int] = Field(default_factory=lambda: [8, 16, 32])
    kernel_size: int = Field(default=3, ge=1)
    padding: int = Field(default=1, ge=0)
    stride: int = Field(default=1, ge=1)
    pool_size: int = Field(default=2, ge=1)
    # Pixels enter the first conv as (x - input_offset) * input_scale
    input_offset: float = 0.5
    input_scale: float = Field(default=4.0, gt=0.0)

    @field_validator("block_channels")
    @classmethod
    def validate_blocks(cls, v):
        """At least one block, all widths positive."""
        if not v or any(c < 1 for c in v):
            raise ValueError("block_channels must be a non-empty list of positive widths")
        return v

    @property
    def feature_channels(self) -> int:
        return self.block_channels[-1]

    def feature_extent(self, image_extent: int) -> int:
        """Spatial extent of f(x) for an input of ``image_extent`` pixels."""
        extent = image_extent
        for index in range(len(self.block_channels)):
            extent = (extent + 2 * self.padding - self.kernel_size) // self.stride + 1
            if index < len(self.block_channels) - 1:
                extent //= self.pool_size
        return extent


class TrainConfig(BaseModel):
    """Plain SGD training run."""

    epochs: int = Field(default=60, ge=1)
    batch_size: int = Field(default=16, ge=1)
    learning_rate: float = Field(default=1.0, ge=0.0)
    seed: int = Field(default=0, ge=0)
    mode: ClassificationMode = ClassificationMode.MULTI_LABEL


class TrainResult(BaseModel):
    """Loss curve and accuracy of a finished run."""

    epoch_losses: List[float]
    initial_loss: float
    final_loss: float
    train_accuracy: float
