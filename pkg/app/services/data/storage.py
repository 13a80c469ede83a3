"""
File formats of the pipeline.

Images: 8-bit PNG (L or RGB); a value v in [0, 1] is stored as
round(clip(v, 0, 1) * 255) and read back as byte / 255.
Label masks (class masks, seeds, pseudo ground truth): paletted PNG whose
indices are the label values, so round trips are lossless.
Saliency masks: 8-bit L PNG, 255 = salient foreground.
"""
from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
from PIL import Image, UnidentifiedImageError
from pydantic import ValidationError

from app.core.errors import MissingInputError, TensorFormatError
from app.schemas.dataset import DatasetManifest, ManifestItem
from app.schemas.enums import AMBIGUOUS_LABEL

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

# Background black, ambiguous white, classes cycle through a fixed colour table
_CLASS_COLOURS = [
    (128, 0, 0), (0, 128, 0), (128, 128, 0), (0, 0, 128), (128, 0, 128),
    (0, 128, 128), (128, 128, 128), (64, 0, 0), (192, 0, 0), (64, 128, 0),
]


def label_palette() -> List[int]:
    palette = [0, 0, 0]
    for index in range(1, 256):
        palette.extend(_CLASS_COLOURS[(index - 1) % len(_CLASS_COLOURS)])
    palette[3 * AMBIGUOUS_LABEL : 3 * AMBIGUOUS_LABEL + 3] = [255, 255, 255]
    return palette


def _open(path: PathLike) -> Image.Image:
    path = Path(path)
    if not path.exists():
        raise MissingInputError(f"file not found: {path}")
    try:
        image = Image.open(path)
        image.load()
    except UnidentifiedImageError as exc:
        raise TensorFormatError("not a recognized image", str(path), 0) from exc
    except (OSError, SyntaxError) as exc:
        raise TensorFormatError(f"corrupt image data ({exc})", str(path), 0) from exc
    return image


def quantize(values: np.ndarray) -> np.ndarray:
    return np.round(np.clip(values, 0.0, 1.0) * 255.0).astype(np.uint8)


# -------- Images --------
def save_image(path: PathLike, image: np.ndarray) -> Path:
    """(C, H, W) or (H, W) float image in [0, 1] -> 8-bit PNG."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    array = np.asarray(image, dtype=np.float64)
    if array.ndim == 3:
        array = array[0] if array.shape[0] == 1 else np.transpose(array, (1, 2, 0))
    Image.fromarray(quantize(array)).save(path)
    return path


def load_image(path: PathLike) -> np.ndarray:
    """8-bit PNG -> (C, H, W) float64 in [0, 1]."""
    image = _open(path)
    if image.mode not in ("L", "RGB"):
        image = image.convert("RGB")
    array = np.asarray(image, dtype=np.float64) / 255.0
    if array.ndim == 2:
        return array[None]
    return np.transpose(array, (2, 0, 1))


# -------- Label masks --------
def save_label_mask(path: PathLike, labels: np.ndarray) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    image = Image.fromarray(np.asarray(labels, dtype=np.uint8))
    # putpalette turns the L image into a P image with identical indices
    image.putpalette(label_palette())
    image.save(path)
    return path


def load_label_mask(path: PathLike) -> np.ndarray:
    image = _open(path)
    if image.mode not in ("P", "L"):
        raise TensorFormatError(f"label mask must be paletted or 8-bit gray, found mode {image.mode}", str(path), 0)
    return np.array(image, dtype=np.uint8)


# -------- Saliency --------
def save_saliency(path: PathLike, foreground: np.ndarray) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.asarray(foreground, dtype=bool).astype(np.uint8) * 255).save(path)
    return path


def load_saliency(path: PathLike) -> np.ndarray:
    """Boolean foreground mask; gray values above 127 count as salient."""
    image = _open(path)
    return np.asarray(image.convert("L")) > 127


# -------- Manifests --------
def save_manifest(directory: PathLike, manifest: DatasetManifest) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / f"{manifest.split}.json"
    path.write_text(manifest.model_dump_json(indent=2))
    return path


def load_manifest(directory: PathLike, split: str) -> DatasetManifest:
    directory = Path(directory)
    path = directory / f"{split}.json"
    if not path.exists():
        raise MissingInputError(f"manifest not found: {path}")
    text = path.read_text()
    try:
        manifest = DatasetManifest.model_validate_json(text)
    except ValidationError as exc:
        raise TensorFormatError(f"invalid manifest: {exc.errors()[0]['msg']}", str(path), 0) from exc
    manifest.root = str(directory)
    for item in manifest.items:
        for relative in (item.image_path, item.mask_path, item.saliency_path, item.parts_path):
            if not (directory / relative).exists():
                raise MissingInputError(f"{path} references missing file {relative}")
    return manifest


def load_split(
    directory: PathLike, split: str, with_saliency: bool = False
) -> Tuple[DatasetManifest, np.ndarray, np.ndarray, np.ndarray, Optional[np.ndarray]]:
    """(manifest, images (N,C,H,W), label vectors (N,K), class masks (N,H,W), saliency (N,H,W) or None)."""
    manifest = load_manifest(directory, split)
    root = Path(directory)
    images = np.stack([load_image(root / item.image_path) for item in manifest.items])
    labels = np.stack([label_vector(item, len(manifest.class_names)) for item in manifest.items])
    masks = np.stack([load_label_mask(root / item.mask_path) for item in manifest.items])
    saliency = None
    if with_saliency:
        saliency = np.stack([load_saliency(root / item.saliency_path) for item in manifest.items])
    logger.info(f"Loaded {len(manifest.items)} {split} items from {directory}")
    return manifest, images, labels, masks, saliency


def label_vector(item: ManifestItem, class_count: int) -> np.ndarray:
    vector = np.zeros(class_count)
    vector[item.labels] = 1.0
    return vector


def write_json(path: PathLike, payload: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True))
    return path
