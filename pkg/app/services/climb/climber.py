"""
Anti-adversarial climbing of class activation maps.

Each step manipulates the image along the input gradient of

    L = y_c - sum_{k != c} y_k - lambda * || M * |CAM(x^{t-1}) - CAM(x^0)| ||_1

where CAM terms are rectified and max-normalized at feature resolution, the
normalization denominator and the mask M are constants within a step, and
CAM(x^0) is frozen. The final localization map is the max-normalized sum of
the rectified CAMs of every manipulated image (or the last one only).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from app.core.autodiff import Tensor, absolute, input_gradient
from app.core.errors import NonFiniteError, ShapeMismatchError
from app.models.classifier import ClassifierModel, ForwardResult
from app.schemas.climb import ClimbConfig
from app.schemas.enums import Aggregation, MaskProvenance
from app.services.attribution.cam_service import AttributionMap, check_class, cam_graph, normalize_values

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RestrictingMask:
    """Binary feature-resolution mask of pixels whose CAM may not drift."""

    values: np.ndarray
    provenance: MaskProvenance = MaskProvenance.CAM_THRESHOLD

    def __post_init__(self) -> None:
        values = np.asarray(self.values).astype(bool)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def as_float(self) -> np.ndarray:
        return self.values.astype(np.float64)


@dataclass(frozen=True)
class ObjectiveTerms:
    """Scalar objective plus its parts, evaluated at one image."""

    objective: Tensor
    target_logit: float
    other_logits: float
    penalty: float
    forward: ForwardResult


@dataclass(frozen=True)
class ClimbRecord:
    """State after step t: x^t, its CAM, logits and the mask that produced it."""

    step: int
    image: np.ndarray
    cam: np.ndarray              # rectified, unnormalized, feature resolution
    cam_normalized: np.ndarray
    logits: np.ndarray
    mask: Optional[RestrictingMask] = None
    objective: Optional[float] = None
    penalty: Optional[float] = None


@dataclass(frozen=True)
class ClimbTrace:
    """Complete record of one climbing run, t = 0..T, plus the final map."""

    class_id: int
    config: ClimbConfig
    records: Tuple[ClimbRecord, ...]
    final_map: AttributionMap = field(repr=False)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def initial(self) -> ClimbRecord:
        return self.records[0]

    @property
    def last(self) -> ClimbRecord:
        return self.records[-1]

    def target_logits(self) -> np.ndarray:
        return np.array([record.logits[self.class_id] for record in self.records])

    def step_maps(self, aggregation: Optional[Aggregation] = None) -> List[np.ndarray]:
        """Localization map as it stood after each step t (normalized, feature resolution)."""
        aggregation = Aggregation(aggregation or self.config.aggregation)
        if aggregation == Aggregation.LAST:
            return [record.cam_normalized for record in self.records]
        running = np.cumsum(np.stack([record.cam for record in self.records]), axis=0)
        return [normalize_values(total) for total in running]


def aggregate_cams(cams: Sequence[np.ndarray], aggregation: Aggregation = Aggregation.SUM) -> np.ndarray:
    """Max-normalized sum over steps (or the last CAM alone)."""
    if not cams:
        raise ShapeMismatchError("cannot aggregate an empty CAM sequence")
    if Aggregation(aggregation) == Aggregation.LAST:
        return normalize_values(cams[-1])
    return normalize_values(np.sum(np.stack(cams), axis=0))


def restricting_mask(
    cam_prev: np.ndarray,
    tau: float,
    saliency_background: Optional[np.ndarray] = None,
) -> RestrictingMask:
    """1(cam_prev > tau), united with the saliency background when supplied."""
    cam_prev = np.asarray(cam_prev, dtype=np.float64)
    mask = cam_prev > tau
    if saliency_background is None:
        return RestrictingMask(mask, MaskProvenance.CAM_THRESHOLD)
    background = np.asarray(saliency_background).astype(bool)
    if background.shape != cam_prev.shape:
        raise ShapeMismatchError(
            f"saliency background {background.shape} does not match CAM {cam_prev.shape}"
        )
    return RestrictingMask(mask | background, MaskProvenance.CAM_THRESHOLD_SALIENCY)


def feature_saliency_background(saliency_foreground: np.ndarray, feature_hw: Tuple[int, int]) -> np.ndarray:
    """Image-resolution foreground mask -> feature-resolution background D.

    A feature pixel belongs to D when most of its image block is background.
    """
    foreground = np.asarray(saliency_foreground, dtype=np.float64)
    height, width = foreground.shape
    fh, fw = feature_hw
    bh, bw = height // fh, width // fw
    if bh < 1 or bw < 1:
        raise ShapeMismatchError(f"saliency {foreground.shape} smaller than feature grid {feature_hw}")
    blocks = foreground[: fh * bh, : fw * bw].reshape(fh, bh, fw, bw).mean(axis=(1, 3))
    return blocks < 0.5


def _objective_from_forward(
    model: ClassifierModel,
    forward: ForwardResult,
    class_id: int,
    x0_cam: Optional[np.ndarray],
    mask: Optional[RestrictingMask],
    reg_lambda: float,
    suppress_other_classes: bool,
) -> ObjectiveTerms:
    logits = forward.logits[0]
    target = logits[class_id]
    objective = target
    others_value = 0.0
    if suppress_other_classes and model.class_count > 1:
        complement = np.ones(model.class_count)
        complement[class_id] = 0.0
        others = (logits * complement).sum()
        others_value = others.item()
        objective = objective - others

    penalty_value = 0.0
    if mask is not None and x0_cam is not None and mask.values.any():
        live = cam_graph(model, forward, class_id)
        if live.shape != np.shape(x0_cam) or live.shape != mask.values.shape:
            raise ShapeMismatchError(
                f"live CAM {live.shape}, initial CAM {np.shape(x0_cam)} and mask {mask.values.shape} disagree"
            )
        peak = float(live.data.max())
        # Denominator is a per-step constant: no gradient through the max
        live_normalized = live * (1.0 / peak) if peak > 0.0 else live
        penalty = (absolute(live_normalized - x0_cam) * mask.as_float()).sum()
        penalty_value = penalty.item()
        if reg_lambda > 0.0:
            objective = objective - reg_lambda * penalty

    return ObjectiveTerms(
        objective=objective,
        target_logit=target.item(),
        other_logits=others_value,
        penalty=penalty_value,
        forward=forward,
    )


def climb_objective(
    model: ClassifierModel,
    image: Union[Tensor, np.ndarray],
    class_id: int,
    x0_cam: Optional[np.ndarray],
    mask: Optional[RestrictingMask],
    reg_lambda: float,
    suppress_other_classes: bool,
) -> ObjectiveTerms:
    """Build the regularized climbing objective at ``image`` as a scalar graph output."""
    check_class(model, class_id)
    return _objective_from_forward(
        model, model.forward(image), class_id, x0_cam, mask, reg_lambda, suppress_other_classes
    )


class AdversarialClimber:
    """Runs iterative climbing (or the attack direction) for one model."""

    def __init__(self, model: ClassifierModel, config: Optional[ClimbConfig] = None):
        self.model = model
        self.config = config or ClimbConfig()

    # -------- Single step --------
    def climb_step(
        self,
        x_prev: np.ndarray,
        class_id: int,
        x0_cam: Optional[np.ndarray] = None,
        step: int = 1,
        xi: Optional[float] = None,
    ) -> Tuple[np.ndarray, ObjectiveTerms, Optional[RestrictingMask]]:
        """x^t = x^{t-1} + direction * xi * grad L(x^{t-1}); no clipping."""
        check_class(self.model, class_id)
        forward = self.model.forward(np.asarray(x_prev, dtype=np.float64))
        cam_prev = normalize_values(cam_graph(self.model, forward, class_id).data)
        if x0_cam is None:
            x0_cam = cam_prev
        mask = restricting_mask(cam_prev, self.config.tau, self.config.saliency_background)
        return self._advance(np.asarray(x_prev, dtype=np.float64), forward, class_id, x0_cam, mask, step, xi)

    def _advance(
        self,
        x_prev: np.ndarray,
        forward: ForwardResult,
        class_id: int,
        x0_cam: np.ndarray,
        mask: RestrictingMask,
        step: int,
        xi: Optional[float] = None,
    ) -> Tuple[np.ndarray, ObjectiveTerms, RestrictingMask]:
        terms = _objective_from_forward(
            self.model,
            forward,
            class_id,
            x0_cam,
            mask,
            self.config.reg_lambda,
            self.config.suppress_other_classes,
        )
        try:
            grad = input_gradient(terms.objective, forward.image).reshape(x_prev.shape)
        except NonFiniteError as exc:
            raise NonFiniteError(f"non-finite input gradient at step {step}: {exc}") from exc
        step_size = self.config.xi if xi is None else xi
        x_next = x_prev + self.config.direction.sign * step_size * grad
        if not np.isfinite(x_next).all():
            raise NonFiniteError(f"manipulated image became non-finite at step {step}")
        return x_next, terms, mask

    # -------- Full run --------
    def run_climb(self, image: np.ndarray, class_id: int) -> ClimbTrace:
        """Climb for ``config.steps`` steps and aggregate every step's CAM."""
        check_class(self.model, class_id)
        config = self.config
        x = np.asarray(image, dtype=np.float64)
        records: List[ClimbRecord] = []
        x0_cam: Optional[np.ndarray] = None
        mask: Optional[RestrictingMask] = None
        terms: Optional[ObjectiveTerms] = None

        for t in range(config.steps + 1):
            forward = self.model.forward(x)
            raw = cam_graph(self.model, forward, class_id).numpy()
            normalized = normalize_values(raw)
            if x0_cam is None:
                x0_cam = normalized
            records.append(
                ClimbRecord(
                    step=t,
                    image=x,
                    cam=raw,
                    cam_normalized=normalized,
                    logits=forward.logits.numpy()[0],
                    mask=mask,
                    objective=None if terms is None else terms.objective.item(),
                    penalty=None if terms is None else terms.penalty,
                )
            )
            if t == config.steps:
                break
            # M for step t+1 comes from CAM(x^t)
            mask = restricting_mask(normalized, config.tau, config.saliency_background)
            x, terms, mask = self._advance(x, forward, class_id, x0_cam, mask, t + 1)
            logger.debug(
                f"class {class_id} step {t + 1}: y_c={terms.target_logit:.4f} "
                f"penalty={terms.penalty:.4f} masked={int(mask.values.sum())}"
            )

        final = aggregate_cams([record.cam for record in records], config.aggregation)
        trace = ClimbTrace(
            class_id=class_id,
            config=config,
            records=tuple(records),
            final_map=AttributionMap(class_id=class_id, step=config.steps, values=final, normalized=True),
        )
        logger.debug(
            f"class {class_id}: {config.direction.value} T={config.steps} "
            f"y_c {records[0].logits[class_id]:.3f} -> {records[-1].logits[class_id]:.3f}"
        )
        return trace
