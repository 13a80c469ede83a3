#!/usr/bin/env python3
"""
Complete Workflow Test for the climbing pipeline
Runs gen-data -> train -> climb -> seed -> eval-seg -> eval-loc -> viz -> sweep
on the default synthetic split and checks the scaled-experiment trends.

Run with ``pytest -m slow test_workflow.py`` or directly as a script.
"""
import json
from pathlib import Path

import numpy as np
import pytest

from advclimb_cli import COMMANDS
from app.core.utils import atns
from app.models.classifier import ClassifierModel
from app.schemas.climb import ClimbConfig
from app.schemas.enums import Aggregation
from app.services.attribution.cam_service import image_map
from app.services.climb.climber import AdversarialClimber
from app.services.climb.diagnostics import pixel_amplification, regularization_drift
from app.services.climb.trace_store import load_trace
from app.services.data import storage
from app.services.data.synthesizer import BODY_PART, HEAD_PART
from app.services.evaluation.segmentation import noise_counts, pooled_confusion, pooled_noise, rates_from_confusion
from app.services.pipeline_service import PipelineService
from app.services.seeds.seed_service import best_threshold_sweep, seed_from_maps, step_foregrounds
from app.services.settings_resolver import RunConfigResolver

pytestmark = pytest.mark.slow

# mIoU points are fractions of 1
MIOU_MARGIN = 0.05
SWEEP_SPREAD = 0.02
RECALL_MATCH = 0.02


class WorkflowRunner:
    """Drives subcommands the way the CLI does, one output directory per stage."""

    def __init__(self, root: Path, seed: int = 0):
        self.root = Path(root)
        self.seed = seed

    def run(self, command: str, out: str, **flags) -> dict:
        flags = {"out": str(self.root / out), "seed": self.seed, "workers": 1, **flags}
        run = RunConfigResolver(command, flags).resolve()
        return COMMANDS[command](PipelineService(run))["results"]

    def path(self, name: str) -> str:
        return str(self.root / name)

    def seg_chain(self) -> dict:
        """Data, a multi-label model, CAM (T=0) and climbed maps, and their seeds."""
        results = {"data": self.run("gen-data", "data")}
        results["train"] = self.run("train", "train", data=self.path("data"))
        model = self.path("train/model")
        for name, steps in (("cam", 0), ("climb", None)):
            results[name] = self.run("climb", name, data=self.path("data"), model=model, steps=steps)
            results[f"seed_{name}"] = self.run(
                "seed", f"seed_{name}", data=self.path("data"), climb_dir=self.path(name)
            )
        return results

    def stored_maps(self, climb_dir: str):
        manifest, images, _, masks, _ = storage.load_split(self.path("data"), "test")
        maps = [
            {
                k: image_map(atns.load(self.root / climb_dir / "maps" / f"{item.item_id}_c{k}.atns"), images.shape[-2:])
                for k in item.labels
            }
            for item in manifest.items
        ]
        return manifest, maps, masks

    def trace(self, climb_dir: str, item_id: str, class_id: int):
        return load_trace(self.root / climb_dir / "traces" / f"{item_id}_c{class_id}")

    def pooled_noise(self, climb_dir: str, theta: float):
        """Dataset proportion-of-noise curve of a stored climb at seed threshold theta."""
        manifest, _, _, masks, _ = storage.load_split(self.path("data"), "test")
        counts = []
        for item, gt in zip(manifest.items, masks):
            traces = [self.trace(climb_dir, item.item_id, k) for k in item.labels]
            counts.append(noise_counts(step_foregrounds(traces, gt.shape, theta), gt))
        return pooled_noise(counts)


@pytest.fixture(scope="module")
def runner(tmp_path_factory):
    return WorkflowRunner(tmp_path_factory.mktemp("workflow"))


@pytest.fixture(scope="module")
def chain(runner):
    return runner.seg_chain()


def test_classifier_fits_training_split(chain):
    assert chain["data"]["splits"]["train"]["count"] == 200
    assert chain["train"]["train_accuracy"] >= 0.95


def test_cam_seed_misses_body_more_than_head(runner, chain):
    manifest, maps, _ = runner.stored_maps("cam")
    theta = chain["seed_cam"]["theta"]
    covered = {HEAD_PART: [0, 0], BODY_PART: [0, 0]}
    for item, item_maps in zip(manifest.items, maps):
        parts = storage.load_label_mask(Path(runner.path("data")) / item.parts_path)
        foreground = seed_from_maps(item_maps, theta).foreground
        for part in covered:
            covered[part][0] += int((foreground & (parts == part)).sum())
            covered[part][1] += int((parts == part).sum())
    head_recall = covered[HEAD_PART][0] / covered[HEAD_PART][1]
    body_recall = covered[BODY_PART][0] / covered[BODY_PART][1]
    assert body_recall < head_recall


def test_climbing_improves_seed(chain):
    assert chain["seed_climb"]["seed"]["miou"] >= chain["seed_cam"]["seed"]["miou"] + MIOU_MARGIN


def test_seed_summary_matches_recomputation(runner, chain):
    manifest, maps, masks = runner.stored_maps("climb")
    sweep = best_threshold_sweep(maps, masks, RunConfigResolver("seed").resolve().theta_grid, len(manifest.class_names))
    assert chain["seed_climb"]["theta"] == sweep.best_theta
    assert chain["seed_climb"]["seed"]["miou"] == pytest.approx(sweep.best_miou, abs=1e-12)


def test_seed_stage_is_byte_identical(runner, chain):
    runner.run("seed", "seed_again", data=runner.path("data"), climb_dir=runner.path("climb"))
    first, second = Path(runner.path("seed_climb")), Path(runner.path("seed_again"))
    for path in sorted((first / "seeds").glob("*")):
        assert path.read_bytes() == (second / "seeds" / path.name).read_bytes()
    first_summary = json.loads((first / "summary.json").read_text())
    second_summary = json.loads((second / "summary.json").read_text())
    assert first_summary["results"] == second_summary["results"]


def test_eval_seg_curves(runner, chain):
    results = runner.run(
        "eval-seg", "eval", data=runner.path("data"), pred=runner.path("seed_climb/seeds"), climb_dir=runner.path("climb")
    )
    assert results["miou"] == pytest.approx(chain["seed_climb"]["seed"]["miou"])
    assert len(results["noise_curve"]) == 28
    assert len(results["seed_miou_per_step"]) == 28
    assert results["noise_curve"][0]["empty"]


def test_viz_writes_figures(runner, chain):
    results = runner.run(
        "viz", "viz", data=runner.path("data"), model=runner.path("train/model"), climb_dir=runner.path("climb"),
        viz_items=1, landscape_grid=5,
    )
    assert any(name.endswith("_landscape.png") for name in results["files"])
    assert any(name.endswith("_cam_strip.png") for name in results["files"])
    assert list(Path(runner.path("viz")).glob("*_landscape_attack.csv"))


def test_lambda_sweep(runner, chain):
    results = runner.run(
        "sweep", "sweep", data=runner.path("data"), model=runner.path("train/model"), param="lambda", values="5,7,9"
    )
    rows = results["rows"]
    assert [row["value"] for row in rows] == [5.0, 7.0, 9.0]
    spread = max(row["miou"] for row in rows) - min(row["miou"] for row in rows)
    assert spread < SWEEP_SPREAD


def test_tau_sweep(runner, chain):
    results = runner.run(
        "sweep", "sweep_tau", data=runner.path("data"), model=runner.path("train/model"), param="tau", values="0.4,0.5,0.6"
    )
    rows = results["rows"]
    assert [row["value"] for row in rows] == [0.4, 0.5, 0.6]
    spread = max(row["miou"] for row in rows) - min(row["miou"] for row in rows)
    assert spread < SWEEP_SPREAD


def test_localization_ablation(runner):
    runner.run("gen-data", "data_loc", mode="loc", test_count=20)
    runner.run("train", "train_loc", mode="loc", data=runner.path("data_loc"))
    results = runner.run(
        "eval-loc", "eval_loc", mode="loc", data=runner.path("data_loc"), model=runner.path("train_loc/model"),
        ablation=True,
    )["ablation"]
    assert set(results) == {"cam", "climb_lambda_0", "climb_lambda_0.01"}
    for report in results.values():
        assert 0.0 <= report["top1_loc"] <= report["top1_cls"] <= 1.0
        assert report["max_box_acc"]["0.5"] == report["gt_known"]


def test_regularization_limits_drift(runner, chain):
    manifest, images, _, _, _ = storage.load_split(runner.path("data"), "test")
    model = ClassifierModel.load(runner.path("train/model"))
    held, ratios = 0, {"discriminative": [], "non_discriminative": []}
    for image, item in zip(images, manifest.items):
        traces = {
            reg_lambda: AdversarialClimber(model, ClimbConfig(steps=20, reg_lambda=reg_lambda)).run_climb(
                image, item.labels[0]
            )
            for reg_lambda in (0.0, 7.0)
        }
        held += regularization_drift(traces[7.0]) <= regularization_drift(traces[0.0])
        step = pixel_amplification(traces[7.0]).steps[20]
        ratios["discriminative"].append(step.discriminative)
        ratios["non_discriminative"].append(step.non_discriminative)
    assert len(images) == 50
    assert held >= 0.9 * len(images)
    assert np.median(np.concatenate(ratios["non_discriminative"])) > np.median(
        np.concatenate(ratios["discriminative"])
    )


@pytest.fixture(scope="module")
def noise_runs(runner, chain):
    """Climbs without regularization and with the dataset's saliency masks."""
    data, model = runner.path("data"), runner.path("train/model")
    runner.run("climb", "climb_unregularized", data=data, model=model, **{"lambda": 0.0})
    runner.run("climb", "climb_saliency", data=data, model=model, saliency=runner.path("data/test/saliency"))
    return {"regularized": "climb", "unregularized": "climb_unregularized", "saliency": "climb_saliency"}


def test_regularization_and_saliency_reduce_noise(runner, chain, noise_runs):
    theta = chain["seed_climb"]["theta"]
    final = {name: runner.pooled_noise(climb_dir, theta)[-1] for name, climb_dir in noise_runs.items()}
    assert len(runner.pooled_noise("climb", theta)) == 28
    assert final["regularized"].rate <= final["unregularized"].rate
    assert final["saliency"].rate < final["regularized"].rate


def test_saliency_keeps_maps_off_the_background(runner, noise_runs):
    def background_mean(climb_dir):
        _, maps, masks = runner.stored_maps(climb_dir)
        values = [m[gt == 0] for item_maps, gt in zip(maps, masks) for m in item_maps.values()]
        return float(np.concatenate(values).mean())

    assert background_mean(noise_runs["saliency"]) <= background_mean(noise_runs["regularized"])


def foreground_rates(maps, masks, theta, class_count):
    seeds = [seed_from_maps(item_maps, theta) for item_maps in maps]
    return rates_from_confusion(pooled_confusion(seeds, masks, class_count))


def test_summed_maps_beat_last_step_at_matched_recall(runner, chain):
    manifest, _, _, masks, _ = storage.load_split(runner.path("data"), "test")
    class_count = len(manifest.class_names)
    summed, last = [], []
    for item, gt in zip(manifest.items, masks):
        traces = {k: runner.trace("climb", item.item_id, k) for k in item.labels}
        summed.append({k: image_map(t.step_maps(Aggregation.SUM)[-1], gt.shape) for k, t in traces.items()})
        last.append({k: image_map(t.step_maps(Aggregation.LAST)[-1], gt.shape) for k, t in traces.items()})

    grid = RunConfigResolver("seed").resolve().theta_grid
    reference = foreground_rates(last, masks, best_threshold_sweep(last, masks, grid, class_count).best_theta, class_count)
    fine_grid = np.round(np.arange(0.01, 1.0, 0.01), 2)
    matched = [
        rates
        for rates in (foreground_rates(summed, masks, float(theta), class_count) for theta in fine_grid)
        if abs(rates.recall - reference.recall) <= RECALL_MATCH
    ]
    assert matched
    assert max(rates.precision for rates in matched) >= reference.precision


def test_pipeline_is_byte_identical(tmp_path, monkeypatch):
    trees = []
    for name in ("first", "second"):
        root = tmp_path / name
        root.mkdir()
        # relative paths keep the resolved configs in the summaries identical
        monkeypatch.chdir(root)
        runner = WorkflowRunner(Path("."))
        runner.run("gen-data", "data", train_count=40, test_count=6)
        runner.run("train", "train", data="data", epochs=3)
        runner.run("climb", "climb", data="data", model="train/model", steps=5)
        runner.run("seed", "seed", data="data", climb_dir="climb")
        runner.run("eval-seg", "eval", data="data", pred="seed/seeds", climb_dir="climb")
        runner.run("viz", "viz", data="data", model="train/model", climb_dir="climb", viz_items=1, landscape_grid=3)
        trees.append({str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()})
    assert trees[0].keys() == trees[1].keys()
    for path, content in trees[0].items():
        assert content == trees[1][path], path


def main():
    """Run the seg chain in ./runs/workflow and print the headline numbers."""
    print("🚀 Adversarial climbing - Complete Workflow Test")
    print("=" * 50)
    runner = WorkflowRunner(Path("runs") / "workflow")
    results = runner.seg_chain()
    print(f"✅ Training accuracy: {results['train']['train_accuracy']:.3f}")
    print(f"📊 CAM seed mIoU:     {results['seed_cam']['seed']['miou']:.4f} (theta {results['seed_cam']['theta']})")
    print(f"📊 Climb seed mIoU:   {results['seed_climb']['seed']['miou']:.4f} (theta {results['seed_climb']['theta']})")


if __name__ == "__main__":
    main()
