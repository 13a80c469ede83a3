"""
Diagnostics of a climbing run: pixel amplification ratios over the
discriminative / non-discriminative regions, input-gradient saliency and 2-D
loss landscapes around an image.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Optional, Union

import numpy as np

from app.core.autodiff import Tensor, input_gradient
from app.core.errors import NonFiniteError
from app.core.utils.retry import retry
from app.models.classifier import ClassifierModel
from app.schemas.climb import LandscapeConfig
from app.services.attribution.cam_service import check_class, normalize_values
from app.services.climb.climber import ClimbTrace
from app.services.training.trainer import classification_loss

logger = logging.getLogger(__name__)

DISCRIMINATIVE_FLOOR = 0.5
NON_DISCRIMINATIVE_FLOOR = 0.1
DIRECTION_DRAWS = 8
COLLAPSE_TOLERANCE = 1e-8

ScoreFn = Callable[[Tensor], Tensor]


@dataclass(frozen=True)
class AmplificationStep:
    """Ratios CAM(x^t)_i / CAM(x^0)_i over both regions at one step."""

    step: int
    discriminative: np.ndarray
    non_discriminative: np.ndarray

    @staticmethod
    def _median(values: np.ndarray) -> Optional[float]:
        return float(np.median(values)) if values.size else None

    @property
    def median_discriminative(self) -> Optional[float]:
        return self._median(self.discriminative)

    @property
    def median_non_discriminative(self) -> Optional[float]:
        return self._median(self.non_discriminative)


@dataclass(frozen=True)
class AmplificationReport:
    class_id: int
    discriminative_region: np.ndarray
    non_discriminative_region: np.ndarray
    steps: List[AmplificationStep]

    @property
    def discriminative_empty(self) -> bool:
        return not self.discriminative_region.any()

    @property
    def non_discriminative_empty(self) -> bool:
        return not self.non_discriminative_region.any()

    def summary(self) -> List[Dict[str, Optional[float]]]:
        return [
            {
                "step": s.step,
                "median_discriminative": s.median_discriminative,
                "median_non_discriminative": s.median_non_discriminative,
            }
            for s in self.steps
        ]


def pixel_amplification(trace: ClimbTrace) -> AmplificationReport:
    """Amplification ratios per step; regions come from the normalized initial CAM."""
    initial = trace.initial
    normalized = initial.cam_normalized
    positive = initial.cam > 0.0
    r_d = (normalized >= DISCRIMINATIVE_FLOOR) & positive
    r_nd = (normalized > NON_DISCRIMINATIVE_FLOOR) & (normalized < DISCRIMINATIVE_FLOOR) & positive
    if not r_d.any():
        logger.warning(f"class {trace.class_id}: discriminative region is empty")
    if not r_nd.any():
        logger.warning(f"class {trace.class_id}: non-discriminative region is empty")

    steps = []
    for record in trace.records:
        steps.append(
            AmplificationStep(
                step=record.step,
                discriminative=record.cam[r_d] / initial.cam[r_d],
                non_discriminative=record.cam[r_nd] / initial.cam[r_nd],
            )
        )
    return AmplificationReport(
        class_id=trace.class_id,
        discriminative_region=r_d,
        non_discriminative_region=r_nd,
        steps=steps,
    )


def regularization_drift(trace: ClimbTrace) -> float:
    """Mean |CAM(x^T) - CAM(x^0)| over the first restricting mask (normalized maps)."""
    if len(trace.records) < 2:
        return 0.0
    first_mask = trace.records[1].mask
    if first_mask is None or not first_mask.values.any():
        logger.warning(f"class {trace.class_id}: first restricting mask is empty")
        return 0.0
    drift = np.abs(trace.last.cam_normalized - trace.initial.cam_normalized)
    return float(drift[first_mask.values].mean())


def saliency_from_score(score_fn: ScoreFn, image: np.ndarray) -> np.ndarray:
    """|d score / d x|, max over channels, max-normalized; (H, W)."""
    x = Tensor(image)
    grad = np.abs(input_gradient(score_fn(x), x))
    if grad.ndim == 4:
        grad = grad[0]
    if grad.ndim == 3:
        grad = grad.max(axis=0)
    return normalize_values(grad)


def input_saliency(model: ClassifierModel, image: np.ndarray, class_id: int) -> np.ndarray:
    """Normalized absolute input gradient of the class logit y_c."""
    check_class(model, class_id)
    return saliency_from_score(lambda x: model.forward(x).logits[0, class_id], image)


def saliency_strip(
    model: ClassifierModel,
    trace: ClimbTrace,
    steps: Iterable[int] = (0, 5, 10, 20),
) -> Dict[int, np.ndarray]:
    """Input saliency of x^t for each requested step the trace reaches."""
    strip = {}
    for step in steps:
        if 0 <= step < len(trace.records):
            strip[step] = input_saliency(model, trace.records[step].image, trace.class_id)
    return strip


@dataclass(frozen=True)
class LandscapeGrid:
    """loss(x + a * n + b * r) sampled on a square grid."""

    alphas: np.ndarray
    betas: np.ndarray
    values: np.ndarray     # values[i, j] at (alphas[i], betas[j])
    center_loss: float

    def rows(self) -> List[Dict[str, float]]:
        return [
            {"alpha": float(a), "beta": float(b), "loss": float(self.values[i, j])}
            for i, a in enumerate(self.alphas)
            for j, b in enumerate(self.betas)
        ]


def _unit(vector: np.ndarray) -> Optional[np.ndarray]:
    norm = np.linalg.norm(vector)
    return None if norm == 0.0 else vector / norm


def _orthogonal_direction(n: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Gaussian draw with its component along n removed, unit length."""
    r = rng.standard_normal(n.shape)
    orthogonal = r - np.sum(r * n) * n
    if np.linalg.norm(orthogonal) <= COLLAPSE_TOLERANCE * np.linalg.norm(r):
        raise NonFiniteError("random direction collapsed onto the gradient direction")
    return orthogonal / np.linalg.norm(orthogonal)


def loss_landscape(
    loss_fn: ScoreFn,
    image: np.ndarray,
    config: Optional[LandscapeConfig] = None,
) -> LandscapeGrid:
    """Sample a loss around ``image`` along its gradient n and a random r orthogonal to n."""
    config = config or LandscapeConfig()
    x = np.asarray(image, dtype=np.float64)
    leaf = Tensor(x)
    center = loss_fn(leaf)
    rng = np.random.default_rng(config.seed)

    n = _unit(input_gradient(center, leaf))
    if n is None:
        logger.warning("loss gradient vanishes at the center; using a random first direction")
        n = _unit(rng.standard_normal(x.shape))
    draw = retry((NonFiniteError,), tries=DIRECTION_DRAWS)(_orthogonal_direction)
    r = draw(n, rng)

    axis = np.linspace(-config.radius, config.radius, config.grid_n)
    if config.grid_n % 2:
        axis[config.grid_n // 2] = 0.0
    values = np.empty((config.grid_n, config.grid_n))
    for i, a in enumerate(axis):
        for j, b in enumerate(axis):
            values[i, j] = loss_fn(Tensor(x + a * n + b * r)).item()
    logger.debug(f"landscape {config.grid_n}x{config.grid_n} radius {config.radius}: center {center.item():.4f}")
    return LandscapeGrid(alphas=axis, betas=axis.copy(), values=values, center_loss=center.item())


def classification_landscape(
    model: ClassifierModel,
    image: np.ndarray,
    label: Union[np.ndarray, List[int]],
    config: Optional[LandscapeConfig] = None,
) -> LandscapeGrid:
    """Landscape of the model's classification loss for one labelled image."""
    label = np.asarray(label, dtype=np.float64)
    return loss_landscape(lambda x: classification_loss(model, x, label), image, config)
