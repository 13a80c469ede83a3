"""
Pydantic schemas for the synthetic dataset.

A dataset directory holds one manifest per split; every item references its
image, class mask, saliency mask and part mask by path relative to the
manifest.
"""
from typing import List, Optional

from pydantic import BaseModel, Field, model_validator

from app.schemas.report import BBox

MANIFEST_SCHEMA_VERSION = 1


class GeneratorConfig(BaseModel):
    """Knobs of the two-part object generator."""

    class_count: int = Field(default=3, ge=2, le=254)
    image_size: int = Field(default=32, ge=32)
    objects_per_image: int = Field(default=1, ge=1)
    count: int = Field(default=200, ge=1)
    seed: int = Field(default=0, ge=0)
    rgb: bool = False
    # Compact, high-contrast discriminative part
    head_size: int = Field(default=8, ge=2)
    head_contrast: float = Field(default=0.45, gt=0.0, le=0.5)
    # Elongated, low-contrast part of the same class
    body_length: int = Field(default=12, ge=2)
    body_width: int = Field(default=6, ge=1)
    body_contrast: float = Field(default=0.12, gt=0.0, le=0.5)
    background_noise: float = Field(default=0.04, ge=0.0)
    max_placement_attempts: int = Field(default=50, ge=1)

    @model_validator(mode="after")
    def validate_contrast_split(self):
        """The body must be the weaker part, and one object must fit."""
        if self.body_contrast >= self.head_contrast:
            raise ValueError("body_contrast must be below head_contrast")
        if self.objects_per_image > self.class_count:
            raise ValueError("objects_per_image cannot exceed class_count (one object per class)")
        if self.head_size + self.body_length + 2 > self.image_size:
            raise ValueError("object footprint does not fit the image")
        return self


class ObjectRecord(BaseModel):
    """One placed object: its class index and tight box."""

    class_index: int = Field(ge=0)
    box: BBox


class ManifestItem(BaseModel):
    """Paths and labels of one scene, relative to the manifest directory."""

    item_id: str
    image_path: str
    mask_path: str
    saliency_path: str
    parts_path: str
    labels: List[int]
    objects: List[ObjectRecord]
    seed: int


class DatasetManifest(BaseModel):
    """Index of one split."""

    schema_version: int = MANIFEST_SCHEMA_VERSION
    split: str
    class_names: List[str]
    generator: GeneratorConfig
    seed: int
    items: List[ManifestItem]
    root: Optional[str] = Field(default=None, exclude=True)
