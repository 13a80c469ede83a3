#!/usr/bin/env python3
"""
Tests for climbing diagnostics: amplification ratios, input saliency and
loss landscapes.
"""
import numpy as np
import pytest

from app.schemas.climb import ClimbConfig, LandscapeConfig
from app.services.attribution.cam_service import AttributionMap
from app.services.climb.climber import AdversarialClimber, ClimbRecord, ClimbTrace, RestrictingMask
from app.services.climb.diagnostics import (
    classification_landscape,
    input_saliency,
    loss_landscape,
    pixel_amplification,
    regularization_drift,
    saliency_from_score,
    saliency_strip,
)
from app.services.training.trainer import classification_loss


def constant_trace(value: float) -> ClimbTrace:
    cam = np.full((4, 4), value)
    record = ClimbRecord(step=0, image=np.zeros((1, 8, 8)), cam=cam, cam_normalized=cam / value, logits=np.zeros(2))
    return ClimbTrace(
        class_id=0,
        config=ClimbConfig(steps=0),
        records=(record,),
        final_map=AttributionMap(class_id=0, step=0, values=cam / value, normalized=True),
    )


def test_initial_ratios_are_one(small_model, small_image):
    trace = AdversarialClimber(small_model, ClimbConfig(steps=3)).run_climb(small_image, 0)
    report = pixel_amplification(trace)
    first = report.steps[0]
    assert np.all(first.discriminative == 1.0)
    assert np.all(first.non_discriminative == 1.0)
    assert len(report.steps) == 4


def test_constant_map_has_no_non_discriminative_region():
    report = pixel_amplification(constant_trace(0.6))
    assert report.discriminative_region.all()
    assert not report.discriminative_empty
    assert report.non_discriminative_empty
    assert report.steps[0].median_non_discriminative is None
    assert report.summary()[0]["median_discriminative"] == 1.0


def test_saliency_of_linear_score_follows_weights(rng):
    weights = rng.standard_normal((1, 6, 6))
    saliency = saliency_from_score(lambda x: (x * weights).sum(), rng.random((1, 6, 6)))
    np.testing.assert_allclose(saliency, np.abs(weights[0]) / np.abs(weights).max())


def test_input_saliency_is_normalized(small_model, small_image):
    saliency = input_saliency(small_model, small_image, 1)
    assert saliency.shape == (12, 12)
    assert saliency.max() == pytest.approx(1.0)


def test_saliency_strip_skips_unreached_steps(small_model, small_image):
    trace = AdversarialClimber(small_model, ClimbConfig(steps=5)).run_climb(small_image, 0)
    assert sorted(saliency_strip(small_model, trace, (0, 5, 10, 20))) == [0, 5]


def test_landscape_of_quadratic(rng):
    v = rng.standard_normal((2, 3))
    grid = loss_landscape(lambda x: (x * x).sum(), v, LandscapeConfig(grid_n=5, radius=0.5, seed=1))
    norm = np.linalg.norm(v)
    expected = norm**2 + 2 * grid.alphas[:, None] * norm + grid.alphas[:, None] ** 2 + grid.betas[None, :] ** 2
    np.testing.assert_allclose(grid.values, expected, atol=1e-10)


def test_landscape_center_is_exact(small_model, small_image):
    label = np.array([1.0, 0.0, 1.0])
    grid = classification_landscape(small_model, small_image, label, LandscapeConfig(grid_n=3, radius=1.0, seed=0))
    assert grid.values[1, 1] == classification_loss(small_model, small_image, label).item()
    assert grid.center_loss == grid.values[1, 1]
    assert len(grid.rows()) == 9


def test_zero_radius_gives_constant_grid(rng):
    v = rng.standard_normal(4)
    grid = loss_landscape(lambda x: (x * x).sum(), v, LandscapeConfig(grid_n=4, radius=0.0, seed=7))
    np.testing.assert_allclose(grid.values, np.full((4, 4), np.sum(v * v)))


def test_collapsed_random_direction_is_redrawn():
    # same stream as the landscape seed: the first draw is parallel to the gradient
    v = np.random.default_rng(0).standard_normal(4)
    grid = loss_landscape(lambda x: (x * x).sum(), v, LandscapeConfig(grid_n=3, radius=0.5, seed=0))
    norm = np.linalg.norm(v)
    expected = norm**2 + 2 * grid.alphas[:, None] * norm + grid.alphas[:, None] ** 2 + grid.betas[None, :] ** 2
    np.testing.assert_allclose(grid.values, expected, atol=1e-10)


def test_drift_is_measured_inside_first_mask():
    before = np.array([[1.0, 0.2], [0.0, 0.0]])
    after = np.array([[0.4, 0.2], [0.0, 1.0]])
    mask = RestrictingMask(np.array([[True, True], [False, False]]))
    records = (
        ClimbRecord(step=0, image=np.zeros((1, 4, 4)), cam=before, cam_normalized=before, logits=np.zeros(2)),
        ClimbRecord(step=1, image=np.zeros((1, 4, 4)), cam=after, cam_normalized=after, logits=np.zeros(2), mask=mask),
    )
    trace = ClimbTrace(
        class_id=0,
        config=ClimbConfig(steps=1),
        records=records,
        final_map=AttributionMap(class_id=0, step=1, values=after, normalized=True),
    )
    # the 0 -> 1 jump outside the mask is not counted
    assert regularization_drift(trace) == pytest.approx(0.3)
    assert regularization_drift(constant_trace(0.6)) == 0.0
