"""
Pipeline orchestration behind the CLI subcommands.

Each public method of :class:`PipelineService` runs one subcommand, writes
its artifacts below ``run.out`` and returns the JSON summary it also writes
to ``<out>/summary.json``. Summaries carry the fully resolved config and no
timestamps, so identical inputs give byte-identical outputs.

Climb output layout (read back by seed / eval-seg / eval-loc / viz):

    <out>/maps/<item_id>_c<k>.atns      final localization map (feature resolution)
    <out>/heatmaps/<item_id>_c<k>.png   colour-mapped map at image resolution
    <out>/traces/<item_id>_c<k>/        per-step trace dump
"""
from __future__ import annotations

import logging
from functools import partial
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.core.errors import ConfigContradictionError, MissingInputError
from app.core.utils import atns
from app.models.classifier import ClassifierModel
from app.models.seed_mask import SeedMask
from app.schemas.climb import ClimbConfig
from app.schemas.dataset import DatasetManifest
from app.schemas.enums import ClassificationMode, ClimbDirection, TaskMode
from app.schemas.report import EvalReport
from app.schemas.run import SUMMARY_SCHEMA_VERSION, RunConfig
from app.schemas.training import ArchitectureSpec
from app.services.attribution.cam_service import image_map
from app.services.climb.climber import AdversarialClimber, feature_saliency_background
from app.services.climb.diagnostics import (
    classification_landscape,
    pixel_amplification,
    regularization_drift,
    saliency_strip,
)
from app.services.climb.trace_store import load_trace, save_trace
from app.services.data import storage
from app.services.data.synthesizer import generate
from app.services.evaluation.localization import max_box_acc_v2, top1_localization
from app.services.evaluation.segmentation import (
    confusion,
    noise_counts,
    pooled_confusion,
    pooled_noise,
    rates_from_confusion,
    scores_from_confusion,
)
from app.services.seeds.seed_service import (
    best_threshold_sweep,
    load_seed,
    pseudo_gt_with_saliency,
    save_seed,
    seed_from_maps,
    seed_miou_per_step,
    step_foregrounds,
)
from app.services.training.trainer import Trainer
from app.services.viz import figures
from app.services.worker_pool import ordered_map

logger = logging.getLogger(__name__)

ClassMaps = Dict[int, np.ndarray]

_SWEEP_FIELDS = {"lambda": "reg_lambda", "tau": "tau", "xi": "xi", "steps": "steps"}


def _map_name(item_id: str, class_id: int) -> str:
    return f"{item_id}_c{class_id}"


# -------- Per-image work (module level so worker processes can unpickle it) --------
def _climb_and_store(
    model: ClassifierModel,
    config: ClimbConfig,
    out: Path,
    task: Tuple[str, np.ndarray, List[int], Optional[np.ndarray]],
) -> List[dict]:
    item_id, image, classes, background = task
    if background is not None:
        config = config.model_copy(update={"saliency_background": background})
    climber = AdversarialClimber(model, config)
    rows = []
    for class_id in classes:
        trace = climber.run_climb(image, class_id)
        name = _map_name(item_id, class_id)
        save_trace(trace, out / "traces" / name)
        map_path = atns.save(out / "maps" / f"{name}.atns", trace.final_map.values)
        figures.save_heatmap(out / "heatmaps" / f"{name}.png", image_map(trace.final_map.values, image.shape[-2:]))
        logits = trace.target_logits()
        rows.append(
            {
                "item_id": item_id,
                "class_id": class_id,
                "target_logit_initial": float(logits[0]),
                "target_logit_final": float(logits[-1]),
                "map": str(map_path.relative_to(out)),
            }
        )
    return rows


def _climb_maps(model: ClassifierModel, config: ClimbConfig, task: Tuple[np.ndarray, List[int]]) -> ClassMaps:
    image, classes = task
    climber = AdversarialClimber(model, config)
    return {k: image_map(climber.run_climb(image, k).final_map.values, image.shape[-2:]) for k in classes}


def climb_maps(
    model: ClassifierModel,
    config: ClimbConfig,
    images: np.ndarray,
    classes: Sequence[List[int]],
    workers: Optional[int] = None,
) -> List[ClassMaps]:
    """Normalized image-resolution localization maps for every (image, class)."""
    return ordered_map(partial(_climb_maps, model, config), list(zip(images, classes)), workers)


class PipelineService:
    """Runs one resolved subcommand."""

    def __init__(self, run: RunConfig):
        self.run = run
        self.out = Path(run.out)

    # -------- Helpers --------
    def _require(self, value: Optional[str], flag: str) -> str:
        if not value:
            raise MissingInputError(f"{flag} is required for {self.run.command}")
        return value

    def _summary(self, results: dict) -> dict:
        summary = {
            "schema_version": SUMMARY_SCHEMA_VERSION,
            "command": self.run.command,
            "seed": self.run.seed,
            "config": self.run.audit_dict(),
            "results": results,
        }
        path = storage.write_json(self.out / "summary.json", summary)
        logger.info(f"{self.run.command} finished; summary at {path}")
        return summary

    def _load_model(self, mode: Optional[ClassificationMode] = None) -> ClassifierModel:
        model = ClassifierModel.load(self._require(self.run.model, "--model"))
        model.require_mode(mode or self.run.classification_mode, f"{self.run.command} --mode {self.run.task.value}")
        return model

    def _load_split(self, split: Optional[str] = None, with_saliency: bool = False):
        return storage.load_split(self._require(self.run.data, "--data"), split or self.run.split, with_saliency)

    def _saliency_foreground(self, manifest: DatasetManifest) -> List[np.ndarray]:
        """Foreground masks from --saliency <dir> (<item_id>.png), else the dataset's own."""
        if self.run.saliency:
            directory = Path(self.run.saliency)
            return [storage.load_saliency(directory / f"{item.item_id}.png") for item in manifest.items]
        root = Path(self._require(self.run.data, "--data"))
        return [storage.load_saliency(root / item.saliency_path) for item in manifest.items]

    def _stored_maps(self, manifest: DatasetManifest, image_hw: Tuple[int, int]) -> List[ClassMaps]:
        climb_dir = Path(self._require(self.run.climb_dir, "--climb-dir"))
        maps = []
        for item in manifest.items:
            maps.append(
                {
                    k: image_map(atns.load(climb_dir / "maps" / f"{_map_name(item.item_id, k)}.atns"), image_hw)
                    for k in item.labels
                }
            )
        return maps

    # -------- gen-data --------
    def gen_data(self) -> dict:
        run = self.run
        if run.task == TaskMode.LOC and run.generator.objects_per_image != 1:
            raise ConfigContradictionError("--mode loc needs single-label scenes (--objects-per-image 1)")
        splits = {}
        for split, count in (("train", run.train_count), ("test", run.test_count)):
            manifest = generate(run.generator.model_copy(update={"count": count}), self.out, split, run.workers)
            splits[split] = {"count": len(manifest.items), "manifest": f"{split}.json", "seed": manifest.seed}
        return self._summary({"splits": splits, "class_names": manifest.class_names})

    # -------- train --------
    def train(self) -> dict:
        run = self.run
        manifest, images, labels, _, _ = self._load_split("train")
        mode = run.classification_mode
        if mode == ClassificationMode.SINGLE_LABEL and not np.all(labels.sum(axis=1) == 1):
            raise ConfigContradictionError("single-label training needs exactly one class per image")
        architecture = ArchitectureSpec(in_channels=images.shape[1])
        model = ClassifierModel.initialize(manifest.class_names, mode, architecture, seed=run.seed)
        trainer = Trainer(run.train)
        model, result = trainer.train(model, images, labels)
        model.save(self.out / "model")
        results = {"model": "model", **result.model_dump()}
        test_manifest = Path(run.data) / "test.json"
        if test_manifest.exists():
            _, test_images, test_labels, _, _ = self._load_split("test")
            results["test_accuracy"] = trainer.accuracy(model, test_images, test_labels)
        return self._summary(results)

    # -------- climb --------
    def climb(self) -> dict:
        run = self.run
        model = self._load_model()
        manifest, images, _, _, _ = self._load_split()
        feature_hw = (model.feature_extent(images.shape[2]), model.feature_extent(images.shape[3]))
        backgrounds: List[Optional[np.ndarray]] = [None] * len(images)
        if run.saliency:
            backgrounds = [feature_saliency_background(fg, feature_hw) for fg in self._saliency_foreground(manifest)]
        tasks = [
            (item.item_id, image, list(item.labels), background)
            for item, image, background in zip(manifest.items, images, backgrounds)
        ]
        logger.info(f"Climbing {len(tasks)} images ({run.climb.direction.value}, T={run.climb.steps})")
        rows = ordered_map(partial(_climb_and_store, model, run.climb, self.out), tasks, run.workers)
        flat = [row for item_rows in rows for row in item_rows]
        return self._summary({"count": len(flat), "steps": run.climb.steps, "items": flat})

    # -------- seed --------
    def seed(self) -> dict:
        run = self.run
        manifest, images, _, masks, _ = self._load_split()
        maps = self._stored_maps(manifest, images.shape[-2:])
        class_count = len(manifest.class_names)
        sweep = None
        theta = run.theta
        if theta is None:
            sweep = best_threshold_sweep(maps, masks, run.theta_grid, class_count)
            theta = sweep.best_theta
        saliency = self._saliency_foreground(manifest)

        seeds, pseudo = [], []
        for item, item_maps, foreground in zip(manifest.items, maps, saliency):
            seed = seed_from_maps(item_maps, theta, manifest.class_names)
            save_seed(self.out / "seeds" / f"{item.item_id}.png", seed)
            pseudo_gt = pseudo_gt_with_saliency(seed, foreground)
            save_seed(self.out / "pseudo_gt" / f"{item.item_id}.png", pseudo_gt)
            seeds.append(seed)
            pseudo.append(pseudo_gt)

        matrix = pooled_confusion(seeds, masks, class_count)
        scores = scores_from_confusion(matrix)
        pseudo_scores = scores_from_confusion(pooled_confusion(pseudo, masks, class_count))
        ambiguous = float(np.mean([p.ambiguous.mean() for p in pseudo])) if pseudo else 0.0
        return self._summary(
            {
                "theta": theta,
                "sweep": None if sweep is None else {str(k): v for k, v in sweep.curve.items()},
                "seed": {"miou": scores.miou, "per_class_iou": scores.per_class_iou},
                "rates": rates_from_confusion(matrix).model_dump(),
                "pseudo_gt": {"miou": pseudo_scores.miou, "ambiguous_fraction": ambiguous},
            }
        )

    # -------- eval-seg --------
    def _prediction_pairs(self) -> Tuple[List[str], List[SeedMask], List[np.ndarray], int, Optional[DatasetManifest]]:
        pred_dir = Path(self._require(self.run.pred, "--pred"))
        if self.run.gt:
            gt_dir = Path(self.run.gt)
            files = sorted(gt_dir.glob("*.png"))
            if not files:
                raise MissingInputError(f"no ground-truth PNGs in {gt_dir}")
            names = [f.stem for f in files]
            gts = [storage.load_label_mask(f) for f in files]
            preds = [load_seed(pred_dir / f.name) for f in files]
            labels = [m[m != 255] for m in gts] + [p.labels[~p.ambiguous] for p in preds]
            class_count = max(int(v.max()) if v.size else 0 for v in labels)
            return names, preds, gts, max(class_count, 1), None
        manifest, _, _, masks, _ = self._load_split()
        names = [item.item_id for item in manifest.items]
        preds = [load_seed(pred_dir / f"{name}.png") for name in names]
        return names, preds, list(masks), len(manifest.class_names), manifest

    def eval_seg(self) -> dict:
        run = self.run
        names, preds, gts, class_count, manifest = self._prediction_pairs()
        matrix = pooled_confusion(preds, gts, class_count)
        report = EvalReport(
            segmentation=scores_from_confusion(matrix),
            rates=rates_from_confusion(matrix),
            class_names=manifest.class_names if manifest else [],
        )
        if run.per_image:
            report.per_image = [
                {"item": index, "miou": scores_from_confusion(confusion(p, g, class_count)).miou}
                for index, (p, g) in enumerate(zip(preds, gts))
            ]

        step_curve = None
        if run.climb_dir and manifest is not None:
            theta = run.theta if run.theta is not None else preds[0].theta
            if theta is None:
                raise ConfigContradictionError("--theta is required when seeds carry no threshold")
            climb_dir = Path(run.climb_dir)
            traces = [
                [load_trace(climb_dir / "traces" / _map_name(item.item_id, k)) for k in item.labels]
                for item in manifest.items
            ]
            counts = [
                noise_counts(step_foregrounds(item_traces, gt.shape, theta), gt)
                for item_traces, gt in zip(traces, gts)
            ]
            report.noise_curve = pooled_noise(counts)
            report.best_theta = theta
            step_curve = seed_miou_per_step(traces, gts, theta, class_count)

        self.out.mkdir(parents=True, exist_ok=True)
        (self.out / "report.json").write_text(report.model_dump_json(indent=2))
        rows = [
            {"label": c, "iou": iou, **report.rates.per_class.get(c, {})}
            for c, iou in sorted(report.segmentation.per_class_iou.items())
        ]
        figures.write_rows(self.out / "report.csv", rows)
        if report.noise_curve:
            figures.write_rows(self.out / "noise_curve.csv", [p.model_dump() for p in report.noise_curve])
        return self._summary(
            {
                "items": len(names),
                "miou": report.segmentation.miou,
                "per_class_iou": report.segmentation.per_class_iou,
                "precision": report.rates.precision,
                "recall": report.rates.recall,
                "f1": report.rates.f1,
                "undefined_rates": report.rates.undefined,
                "noise_curve": [p.model_dump() for p in report.noise_curve],
                "seed_miou_per_step": step_curve,
            }
        )

    # -------- eval-loc --------
    def _localize(self, model, images, labels, gt_boxes, maps) -> dict:
        run = self.run
        report = max_box_acc_v2(maps, gt_boxes, run.iou_thresholds, run.theta_grid)
        top1 = top1_localization(model, images, labels, gt_boxes, maps, theta=run.theta, theta_grid=run.theta_grid)
        report.top1_cls = top1["top1_cls"]
        report.top1_loc = top1["top1_loc"]
        return report.model_dump()

    def eval_loc(self) -> dict:
        run = self.run
        model = self._load_model(ClassificationMode.SINGLE_LABEL)
        manifest, images, labels, _, _ = self._load_split()
        gt_boxes = [[o.box for o in item.objects] for item in manifest.items]
        true_class = [[int(np.argmax(vector))] for vector in labels]
        hw = images.shape[-2:]

        if run.ablation:
            variants = {
                "cam": run.climb.model_copy(update={"steps": 0}),
                "climb_lambda_0": run.climb.model_copy(update={"reg_lambda": 0.0}),
                f"climb_lambda_{run.climb.reg_lambda:g}": run.climb,
            }
            results = {}
            for name, config in variants.items():
                maps = [m[k[0]] for m, k in zip(climb_maps(model, config, images, true_class, run.workers), true_class)]
                results[name] = self._localize(model, images, labels, gt_boxes, maps)
                logger.info(f"ablation {name}: MaxBoxAccV2 mean {results[name]['max_box_acc_mean']:.3f}")
            storage.write_json(self.out / "ablation.json", results)
            return self._summary({"ablation": results})

        stored = self._stored_maps(manifest, hw)
        maps = [m[k[0]] for m, k in zip(stored, true_class)]
        return self._summary(self._localize(model, images, labels, gt_boxes, maps))

    # -------- viz --------
    def viz(self) -> dict:
        run = self.run
        model = self._load_model()
        manifest, images, labels, _, _ = self._load_split()
        climb_dir = Path(self._require(run.climb_dir, "--climb-dir"))
        written = []
        for item, image, label in list(zip(manifest.items, images, labels))[: run.viz_items]:
            for class_id in item.labels:
                name = _map_name(item.item_id, class_id)
                trace = load_trace(climb_dir / "traces" / name)
                T = trace.config.steps
                final = image_map(trace.final_map.values, image.shape[-2:])
                written.append(figures.save_heatmap(self.out / f"{name}_map.png", final))
                written.append(figures.save_overlay(self.out / f"{name}_overlay.png", image, final, name))

                strip_steps = sorted(set(run.viz_steps) | {T})
                written.append(figures.cam_strip(self.out / f"{name}_cam_strip.png", trace, strip_steps))
                saliency = saliency_strip(model, trace, run.viz_steps)
                written.append(
                    figures.save_strip(self.out / f"{name}_saliency_strip.png", saliency, f"input saliency, class {class_id}")
                )

                amplification = pixel_amplification(trace)
                written.append(
                    figures.amplification_histogram(self.out / f"{name}_amplification.png", amplification, min(20, T))
                )
                figures.write_rows(self.out / f"{name}_amplification.csv", amplification.summary())

                attack = AdversarialClimber(
                    model, trace.config.model_copy(update={"direction": ClimbDirection.ATTACK})
                ).run_climb(trace.initial.image, class_id)
                grids = {
                    "climb x^T": classification_landscape(model, trace.last.image, label, run.landscape),
                    "attack x^T": classification_landscape(model, attack.last.image, label, run.landscape),
                }
                figures.landscape_csv(self.out / f"{name}_landscape_climb.csv", grids["climb x^T"])
                figures.landscape_csv(self.out / f"{name}_landscape_attack.csv", grids["attack x^T"])
                written.append(figures.landscape_plot(self.out / f"{name}_landscape.png", grids))
                logger.debug(f"{name}: drift over first mask {regularization_drift(trace):.4f}")
        return self._summary({"files": sorted(str(p.relative_to(self.out)) for p in written)})

    # -------- sweep --------
    def sweep(self) -> dict:
        run = self.run
        if run.sweep_param is None or not run.sweep_values:
            raise MissingInputError("sweep needs --param and --values")
        model = self._load_model()
        manifest, images, _, masks, _ = self._load_split()
        classes = [list(item.labels) for item in manifest.items]
        field = _SWEEP_FIELDS[run.sweep_param]
        rows = []
        for value in run.sweep_values:
            update = {field: int(value) if field == "steps" else value}
            base = run.climb.model_dump(exclude={"saliency_background"})
            config = ClimbConfig(**{**base, **update})
            maps = climb_maps(model, config, images, classes, run.workers)
            result = best_threshold_sweep(maps, masks, run.theta_grid, len(manifest.class_names))
            rows.append({"param": run.sweep_param, "value": value, "best_theta": result.best_theta, "miou": result.best_miou})
            logger.info(f"sweep {run.sweep_param}={value}: seed mIoU {result.best_miou:.4f} at theta {result.best_theta}")
        storage.write_json(self.out / "sweep.json", {"rows": rows})
        figures.write_rows(self.out / "sweep.csv", rows)
        return self._summary({"rows": rows})
