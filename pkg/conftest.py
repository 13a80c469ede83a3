"""
Shared fixtures: small random models and a trained synthetic run.
"""
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pytest

from app.models.classifier import ClassifierModel
from app.schemas.dataset import DatasetManifest, GeneratorConfig
from app.schemas.enums import ClassificationMode
from app.schemas.training import ArchitectureSpec, TrainConfig, TrainResult
from app.services.data import storage
from app.services.data.synthesizer import generate
from app.services.training.trainer import Trainer

SMALL_ARCHITECTURE = ArchitectureSpec(block_channels=[4, 6])


def numeric_gradient(f, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central finite differences of a scalar function of an array."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    for index in np.ndindex(x.shape):
        plus, minus = x.copy(), x.copy()
        plus[index] += h
        minus[index] -= h
        grad[index] = (f(plus) - f(minus)) / (2 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(float(np.max(np.abs(analytic) + np.abs(numeric))), 1e-12)
    return float(np.max(np.abs(analytic - numeric))) / scale


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def small_model():
    """Random 3-class multi-label model on 1-channel images (12x12 -> 6x6 features)."""
    return ClassifierModel.initialize(["a", "b", "c"], ClassificationMode.MULTI_LABEL, SMALL_ARCHITECTURE, seed=3)


@pytest.fixture
def small_image(rng):
    return rng.random((1, 12, 12))


@dataclass
class TrainedRun:
    data_dir: Path
    manifest: DatasetManifest
    images: np.ndarray
    labels: np.ndarray
    masks: np.ndarray
    model: ClassifierModel
    result: TrainResult


@pytest.fixture(scope="session")
def trained_run(tmp_path_factory) -> TrainedRun:
    """Multi-label classifier trained on a small default-style synthetic split."""
    data_dir = tmp_path_factory.mktemp("data")
    config = GeneratorConfig(class_count=3, objects_per_image=1, count=60, seed=0)
    manifest = generate(config, data_dir, "train")
    _, images, labels, masks, _ = storage.load_split(data_dir, "train")
    model = ClassifierModel.initialize(manifest.class_names, ClassificationMode.MULTI_LABEL, seed=0)
    model, result = Trainer(TrainConfig(epochs=30, batch_size=4, learning_rate=1.0, seed=0)).train(
        model, images, labels
    )
    return TrainedRun(data_dir, manifest, images, labels, masks, model, result)
