"""
Trace dump directories.

    <dir>/trace.json          config, class id, per-step logits / objective / mask provenance
    <dir>/step_XXX/image.atns x^t
    <dir>/step_XXX/cam.atns   rectified CAM(x^t), feature resolution
    <dir>/step_XXX/mask.atns  restricting mask that produced x^t (t >= 1)
    <dir>/final.atns          localization map
"""
from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Union

import numpy as np

from app.core.errors import MissingInputError, TensorFormatError
from app.core.utils import atns
from app.schemas.climb import ClimbConfig
from app.schemas.enums import MaskProvenance
from app.services.attribution.cam_service import AttributionMap, normalize_values
from app.services.climb.climber import ClimbRecord, ClimbTrace, RestrictingMask

logger = logging.getLogger(__name__)

TRACE_SCHEMA_VERSION = 1


def _step_dir(root: Path, step: int) -> Path:
    return root / f"step_{step:03d}"


def save_trace(trace: ClimbTrace, directory: Union[str, Path]) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    steps = []
    for record in trace.records:
        step_dir = _step_dir(directory, record.step)
        atns.save(step_dir / "image.atns", record.image)
        atns.save(step_dir / "cam.atns", record.cam)
        entry = {
            "step": record.step,
            "logits": [float(v) for v in record.logits],
            "objective": record.objective,
            "penalty": record.penalty,
            "mask": None,
        }
        if record.mask is not None:
            atns.save(step_dir / "mask.atns", record.mask.as_float())
            entry["mask"] = {
                "provenance": record.mask.provenance.value,
                "pixels": int(record.mask.values.sum()),
            }
        steps.append(entry)
    atns.save(directory / "final.atns", trace.final_map.values)
    manifest = {
        "schema_version": TRACE_SCHEMA_VERSION,
        "class_id": trace.class_id,
        "config": trace.config.audit_dict(),
        "steps": steps,
    }
    path = directory / "trace.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    logger.debug(f"Trace for class {trace.class_id} ({len(steps)} records) written to {directory}")
    return path


def load_trace(directory: Union[str, Path]) -> ClimbTrace:
    """Rebuild a ClimbTrace from its dump (saliency mask itself is not stored)."""
    directory = Path(directory)
    manifest_path = directory / "trace.json"
    if not manifest_path.exists():
        raise MissingInputError(f"trace manifest not found: {manifest_path}")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise TensorFormatError(f"invalid JSON: {exc.msg}", str(manifest_path), exc.pos) from exc

    config_data = dict(manifest["config"])
    config_data.pop("saliency_background", None)
    config = ClimbConfig(**config_data)
    records = []
    for entry in manifest["steps"]:
        step_dir = _step_dir(directory, entry["step"])
        raw = atns.load(step_dir / "cam.atns")
        mask = None
        if entry["mask"] is not None:
            mask = RestrictingMask(
                atns.load(step_dir / "mask.atns") > 0.5,
                MaskProvenance(entry["mask"]["provenance"]),
            )
        records.append(
            ClimbRecord(
                step=entry["step"],
                image=atns.load(step_dir / "image.atns"),
                cam=raw,
                cam_normalized=normalize_values(raw),
                logits=np.asarray(entry["logits"], dtype=np.float64),
                mask=mask,
                objective=entry["objective"],
                penalty=entry["penalty"],
            )
        )
    final = atns.load(directory / "final.atns")
    return ClimbTrace(
        class_id=manifest["class_id"],
        config=config,
        records=tuple(records),
        final_map=AttributionMap(
            class_id=manifest["class_id"], step=config.steps, values=final, normalized=True
        ),
    )
