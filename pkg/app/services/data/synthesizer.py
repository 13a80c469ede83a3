"""
Synthetic two-part object scenes.

Every object is a compact, high-contrast "head" plus an elongated,
low-contrast "body" carrying the same class texture. A classifier trained on
these scenes leans on the head; the body is class-relevant but weakly
discriminative, which is exactly the region an expanded attribution map has
to recover. Parts are recorded separately (1 = head, 2 = body) so that
coverage of each can be measured.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import partial
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np

from app.core.errors import LabelError, PlacementError
from app.core.utils.retry import retry
from app.schemas.dataset import DatasetManifest, GeneratorConfig, ManifestItem, ObjectRecord
from app.schemas.enums import BACKGROUND_LABEL
from app.schemas.report import BBox
from app.services.data import storage
from app.services.worker_pool import ordered_map

logger = logging.getLogger(__name__)

HEAD_PART = 1
BODY_PART = 2
BACKGROUND_LEVEL = 0.5
TEST_SEED_OFFSET = 100_003

_PATTERN_KINDS = ("hstripe", "vstripe", "checker", "diagonal")


def class_names(class_count: int) -> List[str]:
    names = []
    for k in range(class_count):
        kind = _PATTERN_KINDS[k % len(_PATTERN_KINDS)]
        names.append(kind if k < len(_PATTERN_KINDS) else f"{kind}{k // len(_PATTERN_KINDS) + 1}")
    return names


def class_pattern(class_index: int, shape: Tuple[int, int]) -> np.ndarray:
    """+/-1 texture of a class; later classes repeat the four kinds at a coarser period."""
    rows, cols = np.indices(shape)
    period = 1 + class_index // len(_PATTERN_KINDS)
    kind = class_index % len(_PATTERN_KINDS)
    if kind == 0:
        phase = rows // period
    elif kind == 1:
        phase = cols // period
    elif kind == 2:
        phase = rows // period + cols // period
    else:
        phase = (rows + cols) // (2 * period)
    return np.where(phase % 2 == 0, 1.0, -1.0)


def class_tint(class_index: int) -> np.ndarray:
    """Per-channel gain for RGB scenes."""
    tint = np.full(3, 0.5)
    tint[class_index % 3] = 1.0
    return tint


@dataclass(frozen=True)
class SyntheticScene:
    image: np.ndarray          # (C, H, W) in [0, 1]
    mask: np.ndarray           # label values: 0 background, k + 1 for class k
    parts: np.ndarray          # 0 background, 1 head, 2 body
    labels: List[int]          # 0-based class indices present
    objects: List[ObjectRecord]
    seed: int

    @property
    def saliency(self) -> np.ndarray:
        return self.mask != BACKGROUND_LABEL


def item_seed(base_seed: int, index: int) -> int:
    return base_seed ^ index


def _object_layout(config: GeneratorConfig, rng: np.random.Generator) -> np.ndarray:
    """Part map of one object in its own footprint (head then body, random orientation)."""
    hs, bl, bw = config.head_size, config.body_length, config.body_width
    layout = np.zeros((hs, hs + bl), dtype=np.uint8)
    layout[:, :hs] = HEAD_PART
    offset = (hs - bw) // 2 if bw <= hs else 0
    layout[offset : offset + min(bw, hs), hs:] = BODY_PART
    if rng.random() < 0.5:
        layout = layout[:, ::-1]
    if rng.random() < 0.5:
        layout = layout.T
    return np.ascontiguousarray(layout)


class SceneSynthesizer:
    """Draws scenes for one GeneratorConfig."""

    def __init__(self, config: GeneratorConfig):
        self.config = config
        self.channels = 3 if config.rgb else 1

    def _try_place(self, occupied: np.ndarray, layout: np.ndarray, rng: np.random.Generator) -> Tuple[int, int]:
        size = self.config.image_size
        height, width = layout.shape
        top = int(rng.integers(0, size - height + 1))
        left = int(rng.integers(0, size - width + 1))
        # one pixel of clearance keeps objects separate components
        window = occupied[max(top - 1, 0) : top + height + 1, max(left - 1, 0) : left + width + 1]
        if window.any():
            raise PlacementError(f"overlap at ({top}, {left})")
        return top, left

    def _place(self, occupied: np.ndarray, layout: np.ndarray, rng: np.random.Generator, index: int):
        attempts = self.config.max_placement_attempts

        def exhausted(exc: BaseException, attempt: int) -> PlacementError:
            return PlacementError(f"scene {index}: no free position after {attempt} attempts ({exc})")

        placer = retry((PlacementError,), tries=attempts, on_exhausted=exhausted)(self._try_place)
        return placer(occupied, layout, rng)

    def scene(self, index: int, base_seed: Optional[int] = None) -> SyntheticScene:
        """Deterministic scene ``index`` of the split seeded with ``base_seed``."""
        config = self.config
        seed = item_seed(config.seed if base_seed is None else base_seed, index)
        rng = np.random.default_rng(seed)
        size = config.image_size

        classes = sorted(int(k) for k in rng.choice(config.class_count, config.objects_per_image, replace=False))
        image = np.full((self.channels, size, size), BACKGROUND_LEVEL)
        mask = np.zeros((size, size), dtype=np.uint8)
        parts = np.zeros((size, size), dtype=np.uint8)
        occupied = np.zeros((size, size), dtype=bool)
        objects = []

        for class_index in classes:
            layout = _object_layout(config, rng)
            top, left = self._place(occupied, layout, rng, index)
            height, width = layout.shape
            region = (slice(top, top + height), slice(left, left + width))
            texture = class_pattern(class_index, (height, width))
            contrast = np.where(layout == HEAD_PART, config.head_contrast, config.body_contrast)
            gain = class_tint(class_index)[: self.channels] if config.rgb else np.ones(1)
            patch = BACKGROUND_LEVEL + (contrast * texture)[None] * gain[:, None, None]
            inside = layout > 0
            image[(slice(None),) + region] = np.where(inside[None], patch, image[(slice(None),) + region])
            mask[region][inside] = class_index + 1
            parts[region][inside] = layout[inside]
            occupied[region] |= inside
            rows, cols = np.nonzero(inside)
            objects.append(
                ObjectRecord(
                    class_index=class_index,
                    box=BBox(
                        x_min=left + int(cols.min()),
                        y_min=top + int(rows.min()),
                        x_max=left + int(cols.max()),
                        y_max=top + int(rows.max()),
                    ),
                )
            )

        if config.background_noise > 0:
            image = image + rng.normal(0.0, config.background_noise, size=image.shape)
        image = np.clip(image, 0.0, 1.0)
        return SyntheticScene(image=image, mask=mask, parts=parts, labels=classes, objects=objects, seed=seed)


def validate_scene(scene: SyntheticScene) -> None:
    """Mask ids within the label set, tight boxes, saliency = mask > 0."""
    present = {int(v) - 1 for v in np.unique(scene.mask) if v != BACKGROUND_LABEL}
    if not present <= set(scene.labels):
        raise LabelError(f"mask classes {sorted(present)} not within labels {scene.labels}")
    for record in scene.objects:
        if not record.box.within(*scene.mask.shape):
            raise LabelError(f"box {record.box.as_tuple()} leaves the {scene.mask.shape} image")
        rows, cols = np.nonzero(scene.mask == record.class_index + 1)
        tight = (int(cols.min()), int(rows.min()), int(cols.max()), int(rows.max()))
        if record.box.as_tuple() != tight:
            raise LabelError(f"box {record.box.as_tuple()} is not tight around class {record.class_index} ({tight})")
    if not np.array_equal(scene.saliency, scene.mask > 0):
        raise LabelError("saliency differs from the foreground union")
    if not np.array_equal(scene.parts > 0, scene.mask > 0):
        raise LabelError("part map differs from the foreground union")


def _write_item(directory: Path, split: str, base_seed: int, config: GeneratorConfig, index: int) -> ManifestItem:
    scene = SceneSynthesizer(config).scene(index, base_seed)
    validate_scene(scene)
    item_id = f"{split}_{index:05d}"
    paths = {
        "image_path": f"{split}/images/{item_id}.png",
        "mask_path": f"{split}/masks/{item_id}.png",
        "saliency_path": f"{split}/saliency/{item_id}.png",
        "parts_path": f"{split}/parts/{item_id}.png",
    }
    storage.save_image(directory / paths["image_path"], scene.image)
    storage.save_label_mask(directory / paths["mask_path"], scene.mask)
    storage.save_saliency(directory / paths["saliency_path"], scene.saliency)
    storage.save_label_mask(directory / paths["parts_path"], scene.parts)
    return ManifestItem(item_id=item_id, labels=scene.labels, objects=scene.objects, seed=scene.seed, **paths)


def split_seed(seed: int, split: str) -> int:
    return seed if split == "train" else seed + TEST_SEED_OFFSET


def generate(
    config: GeneratorConfig,
    directory: Union[str, Path],
    split: str = "train",
    workers: Optional[int] = None,
) -> DatasetManifest:
    """Write ``config.count`` scenes plus ``<split>.json`` under ``directory``."""
    directory = Path(directory)
    base_seed = split_seed(config.seed, split)
    task = partial(_write_item, directory, split, base_seed, config)
    items = ordered_map(task, range(config.count), workers)
    manifest = DatasetManifest(
        split=split,
        class_names=class_names(config.class_count),
        generator=config,
        seed=base_seed,
        items=items,
        root=str(directory),
    )
    path = storage.save_manifest(directory, manifest)
    logger.info(f"Generated {len(items)} {split} scenes ({config.class_count} classes) -> {path}")
    return manifest
