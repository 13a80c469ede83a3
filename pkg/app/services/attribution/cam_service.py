"""
Class activation maps and their post-processing.

CAM_c(x) = w_c . f(x) per feature pixel, rectified with ReLU. The head bias
never enters a CAM. Thresholds elsewhere in the pipeline always apply to
max-normalized maps; upsampling to image resolution is for seeding and
display only.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Tuple, Union

import numpy as np
from scipy.ndimage import map_coordinates

from app.core.autodiff import Tensor, channel_dot, relu
from app.core.errors import LabelError, ShapeMismatchError
from app.models.classifier import ClassifierModel, ForwardResult
from app.schemas.enums import MapResolution


@dataclass(frozen=True)
class AttributionMap:
    """Single-class, non-negative 2-D score map."""

    class_id: int
    step: int
    values: np.ndarray
    normalized: bool = False
    resolution: MapResolution = MapResolution.FEATURE

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ShapeMismatchError(f"attribution map must be 2-D, got {values.shape}")
        if (values < 0).any():
            raise ValueError("attribution map values must be non-negative")
        if self.normalized and values.size and values.max() > 1.0:
            raise ValueError(f"normalized map has max {values.max()}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape  # type: ignore[return-value]


def check_class(model: ClassifierModel, class_id: int) -> None:
    if not 0 <= class_id < model.class_count:
        raise LabelError(f"class id {class_id} outside 0..{model.class_count - 1}")


def cam_graph(model: ClassifierModel, forward: ForwardResult, class_id: int, rectify: bool = True) -> Tensor:
    """Differentiable (h, w) CAM of the first batch item; no head bias."""
    check_class(model, class_id)
    weights = model.head_weight[class_id]
    raw = channel_dot(forward.features, weights)[0]
    return relu(raw) if rectify else raw


def raw_cam(model: ClassifierModel, image: Union[Tensor, np.ndarray], class_id: int) -> np.ndarray:
    """Unrectified, bias-free w_c . f(x); its spatial mean equals y_c - b_c."""
    return cam_graph(model, model.forward(image), class_id, rectify=False).numpy()


def cam(model: ClassifierModel, image: Union[Tensor, np.ndarray], class_id: int, step: int = 0) -> AttributionMap:
    """Rectified, unnormalized CAM at feature resolution."""
    values = cam_graph(model, model.forward(image), class_id).numpy()
    return AttributionMap(class_id=class_id, step=step, values=values)


def normalize_values(values: np.ndarray) -> np.ndarray:
    """Divide by the maximum; an all-zero map stays all-zero."""
    values = np.asarray(values, dtype=np.float64)
    peak = values.max() if values.size else 0.0
    if peak <= 0.0:
        return np.zeros_like(values)
    return values / peak


def normalize(attribution: AttributionMap) -> AttributionMap:
    """Max-normalize into [0, 1]; idempotent."""
    if attribution.normalized:
        return attribution
    return replace(attribution, values=normalize_values(attribution.values), normalized=True)


def bilinear_resize(values: np.ndarray, target_hw: Tuple[int, int]) -> np.ndarray:
    """Corner-aligned bilinear interpolation of a 2-D array."""
    values = np.asarray(values, dtype=np.float64)
    height, width = values.shape
    target_h, target_w = target_hw
    if target_h < height or target_w < width:
        raise ShapeMismatchError(f"upsample target {target_hw} smaller than source {values.shape}")
    rows = np.linspace(0.0, height - 1, target_h)
    cols = np.linspace(0.0, width - 1, target_w)
    grid_r, grid_c = np.meshgrid(rows, cols, indexing="ij")
    return map_coordinates(values, [grid_r, grid_c], order=1, mode="nearest")


def upsample(attribution: AttributionMap, target_hw: Tuple[int, int]) -> AttributionMap:
    """Bilinear upsample to image resolution (normalize afterwards for seeding/display)."""
    values = np.clip(bilinear_resize(attribution.values, target_hw), 0.0, None)
    return replace(attribution, values=values, normalized=False, resolution=MapResolution.IMAGE)


def image_map(values: np.ndarray, target_hw: Tuple[int, int]) -> np.ndarray:
    """Feature-resolution map -> normalized image-resolution map used for seeds and boxes."""
    values = np.asarray(values, dtype=np.float64)
    if values.shape == tuple(target_hw):
        return normalize_values(values)
    return normalize_values(np.clip(bilinear_resize(values, target_hw), 0.0, None))
