#!/usr/bin/env python3
"""
Tests for seed metrics (mIoU, precision/recall/F1, proportion of noise) and
box localization metrics.
"""
import numpy as np
import pytest

from app.core.errors import ConfigContradictionError, ShapeMismatchError
from app.models.classifier import ClassifierModel
from app.schemas.enums import ClassificationMode
from app.schemas.report import BBox
from app.services.evaluation.localization import (
    best_iou,
    boxes_from_map,
    max_box_acc_v2,
    top1_from_parts,
    top1_localization,
)
from app.services.evaluation.segmentation import (
    miou,
    noise_counts,
    pooled_noise,
    precision_recall_f1,
    proportion_of_noise,
)
from conftest import SMALL_ARCHITECTURE

GT_4X4 = np.array(
    [
        [0, 0, 1, 1],
        [0, 0, 1, 1],
        [2, 2, 0, 0],
        [2, 2, 0, 0],
    ]
)


def test_identical_masks_score_one():
    scores = miou(GT_4X4, GT_4X4, class_count=2)
    assert scores.miou == 1.0
    assert set(scores.per_class_iou) == {0, 1, 2}


def test_disjoint_foreground_scores_zero():
    pred = np.zeros((4, 4), dtype=np.uint8)
    pred[0, 0] = 1
    gt = np.zeros((4, 4), dtype=np.uint8)
    gt[3, 3] = 1
    assert miou(pred, gt, class_count=1).per_class_iou[1] == 0.0


def test_crafted_case():
    pred = GT_4X4.copy()
    pred[0, 1] = 1  # one background pixel taken by class 1
    scores = miou(pred, GT_4X4, class_count=2)
    assert scores.per_class_iou[0] == pytest.approx(7 / 8)
    assert scores.per_class_iou[1] == pytest.approx(4 / 5)
    assert scores.per_class_iou[2] == 1.0
    assert scores.miou == pytest.approx((7 / 8 + 4 / 5 + 1.0) / 3)


def test_ambiguous_pixels_are_ignored():
    gt = GT_4X4.copy()
    gt[0, 1] = 255
    pred = GT_4X4.copy()
    pred[0, 1] = 1
    assert miou(pred, gt, class_count=2).miou == 1.0


def test_absent_class_is_left_out_of_mean():
    gt = np.array([[0, 1], [0, 1]])
    scores = miou(gt, gt, class_count=3)
    assert set(scores.per_class_iou) == {0, 1}


def test_shape_mismatch():
    with pytest.raises(ShapeMismatchError):
        miou(np.zeros((2, 2)), np.zeros((3, 3)), class_count=1)


def test_rates_of_perfect_prediction():
    rates = precision_recall_f1(GT_4X4, GT_4X4, class_count=2)
    assert (rates.precision, rates.recall, rates.f1) == (1.0, 1.0, 1.0)
    assert not rates.undefined


def test_empty_prediction_flags_precision():
    rates = precision_recall_f1(np.zeros((4, 4)), GT_4X4, class_count=2)
    assert rates.precision == 0.0
    assert rates.recall == 0.0
    assert "precision[1]" in rates.undefined


def test_partial_recall():
    pred = np.zeros((4, 4), dtype=np.uint8)
    pred[0, 2:] = 1  # top row of the class-1 block only
    rates = precision_recall_f1(pred, GT_4X4, class_count=2)
    assert rates.per_class[1]["precision"] == 1.0
    assert rates.per_class[1]["recall"] == 0.5
    assert rates.per_class[1]["f1"] == pytest.approx(2 / 3)


def test_noise_at_initial_step_is_empty():
    fg = GT_4X4 > 0
    point = proportion_of_noise([fg, fg], GT_4X4)[0]
    assert point.empty
    assert point.rate == 0.0


def test_growth_inside_objects_is_not_noise():
    initial = np.zeros((4, 4), dtype=bool)
    initial[0, 2] = True
    grown = GT_4X4 > 0
    assert proportion_of_noise([initial, grown], GT_4X4)[1].rate == 0.0


def test_growth_into_background():
    initial = GT_4X4 == 1
    grown = initial.copy()
    grown[0, :2] = True  # two background pixels
    grown[2:, :2] = True  # four class-2 pixels
    point = proportion_of_noise([initial, grown], GT_4X4)[1]
    assert (point.new_pixels, point.noisy_pixels) == (6, 2)
    assert point.rate == pytest.approx(1 / 3)


def test_pooled_noise_sums_counts():
    first = noise_counts([np.zeros((2, 2), bool), np.ones((2, 2), bool)], np.zeros((2, 2)))
    second = noise_counts([np.zeros((2, 2), bool), np.eye(2, dtype=bool)], np.eye(2))
    curve = pooled_noise([first, second])
    assert curve[1].new_pixels == 6
    assert curve[1].noisy_pixels == 4


def test_tight_box_of_rectangle():
    values = np.zeros((8, 8))
    values[2:5, 1:7] = 0.9
    assert boxes_from_map(values, 0.5) == [BBox(x_min=1, y_min=2, x_max=6, y_max=4)]


def test_no_box_above_threshold():
    assert boxes_from_map(np.full((4, 4), 0.5), 0.5) == []


def test_diagonal_blobs_are_separate_components():
    values = np.zeros((4, 4))
    values[:2, :2] = 1.0
    values[2:, 2:] = 1.0
    boxes = boxes_from_map(values, 0.5)
    assert len(boxes) == 2
    assert BBox(x_min=2, y_min=2, x_max=3, y_max=3) in boxes


def test_box_iou_thresholds():
    predicted = BBox(x_min=0, y_min=0, x_max=1, y_max=1)
    truth = BBox(x_min=1, y_min=1, x_max=2, y_max=2)
    assert predicted.iou(truth) == pytest.approx(1 / 7)
    values = np.zeros((4, 4))
    values[:2, :2] = 1.0
    report = max_box_acc_v2([values], [truth], iou_thresholds=(0.1, 0.3), theta_grid=(0.5,))
    assert report.max_box_acc == {"0.1": 1.0, "0.3": 0.0}
    assert report.gt_known == 0.0


def test_best_iou_over_several_truths():
    predicted = [BBox(x_min=0, y_min=0, x_max=3, y_max=3)]
    truths = [BBox(x_min=10, y_min=10, x_max=12, y_max=12), BBox(x_min=0, y_min=0, x_max=3, y_max=3)]
    assert best_iou(predicted, truths) == 1.0
    assert best_iou([], truths) == 0.0


def test_max_box_acc_of_perfect_maps():
    maps, truths = [], []
    for offset in range(4):
        values = np.zeros((16, 16))
        values[offset:offset + 5, 2 * offset:2 * offset + 7] = 1.0
        maps.append(values)
        truths.append(BBox(x_min=2 * offset, y_min=offset, x_max=2 * offset + 6, y_max=offset + 4))
    report = max_box_acc_v2(maps, truths)
    assert report.max_box_acc == {"0.3": 1.0, "0.5": 1.0, "0.7": 1.0}
    assert report.max_box_acc_mean == 1.0
    assert report.gt_known == 1.0


def test_max_box_acc_is_monotone_in_iou_threshold(rng):
    maps = [rng.random((12, 12)) for _ in range(6)]
    truths = [BBox(x_min=2, y_min=2, x_max=8, y_max=9) for _ in range(6)]
    report = max_box_acc_v2(maps, truths, theta_grid=(0.2, 0.5, 0.8, 0.95))
    accuracy = report.max_box_acc
    assert accuracy["0.3"] >= accuracy["0.5"] >= accuracy["0.7"]


def test_empty_theta_grid():
    with pytest.raises(ConfigContradictionError):
        max_box_acc_v2([], [], theta_grid=())


def test_top1_needs_correct_class_and_box():
    assert top1_from_parts([True, True, False, False], [0.6, 0.2, 0.9, 0.1]) == 0.25
    assert top1_from_parts([], []) == 0.0


def test_top1_rejects_multi_label_model(small_model, small_image):
    with pytest.raises(ConfigContradictionError):
        top1_localization(
            small_model,
            small_image[None],
            np.eye(3)[:1],
            [BBox(x_min=0, y_min=0, x_max=3, y_max=3)],
            [np.ones((12, 12))],
        )


def test_top1_picks_theta_for_requested_iou_threshold():
    model = ClassifierModel.initialize(["a", "b"], ClassificationMode.SINGLE_LABEL, SMALL_ARCHITECTURE)
    arrays = [np.zeros(p.shape) for p in model.parameters()]
    arrays[-1] = np.array([1.0, 0.0])
    model = model.with_parameters(arrays)
    values = np.zeros((12, 12))
    values[:6, :6] = 0.4   # box IoU 16/36 with the truth
    values[:2, :4] = 0.9   # box IoU 8/16
    truth = [BBox(x_min=0, y_min=0, x_max=3, y_max=3)]
    args = (model, np.zeros((1, 1, 12, 12)), np.eye(2)[:1], truth, [values])

    loose = top1_localization(*args, iou_threshold=0.3, theta_grid=(0.3, 0.6))
    assert loose["theta"] == 0.3
    assert loose["top1_loc"] == 1.0
    strict = top1_localization(*args, theta_grid=(0.3, 0.6))
    assert strict["theta"] == 0.6
    assert strict["top1_loc"] == 1.0
