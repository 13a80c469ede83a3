"""
Run configuration resolver.

Resolves effective settings with cascade:
built-in defaults -> .env / ADVCLIMB_* (Settings) -> --config JSON file -> explicit flags
"""
import json
import logging
from pathlib import Path
from typing import Any, Dict, Optional

from app.core.config import Settings, parse_float_list, settings
from app.core.errors import ConfigContradictionError, MissingInputError, TensorFormatError
from app.schemas.climb import ClimbConfig, LandscapeConfig
from app.schemas.dataset import GeneratorConfig
from app.schemas.enums import Aggregation, ClimbDirection, SwitchState, TaskMode
from app.schemas.run import RunConfig, classification_mode_for
from app.schemas.training import TrainConfig

logger = logging.getLogger(__name__)

# Keys accepted in a --config file (flag names with dashes or underscores)
KNOWN_KEYS = {
    "out", "seed", "workers", "mode", "data", "split", "model", "climb_dir", "pred", "gt", "saliency",
    "steps", "xi", "lambda", "tau", "mask_threshold", "suppress_others", "aggregation", "direction",
    "epochs", "batch_size", "learning_rate",
    "class_count", "image_size", "objects_per_image", "train_count", "test_count", "rgb",
    "head_contrast", "body_contrast",
    "theta", "theta_grid", "iou_thresholds", "per_image", "ablation",
    "landscape_grid", "landscape_radius", "viz_items", "viz_steps", "param", "values",
}


def load_config_file(path: Optional[str]) -> Dict[str, Any]:
    """Flat JSON object of flag values; keys may use dashes."""
    if not path:
        return {}
    file_path = Path(path)
    if not file_path.exists():
        raise MissingInputError(f"config file not found: {file_path}")
    try:
        raw = json.loads(file_path.read_text())
    except json.JSONDecodeError as exc:
        raise TensorFormatError(f"invalid JSON: {exc.msg}", str(file_path), exc.pos) from exc
    if not isinstance(raw, dict):
        raise ConfigContradictionError(f"{file_path} must hold a JSON object")
    values = {key.replace("-", "_"): value for key, value in raw.items()}
    unknown = sorted(set(values) - KNOWN_KEYS)
    if unknown:
        raise ConfigContradictionError(f"{file_path}: unknown keys {', '.join(unknown)}")
    return values


class RunConfigResolver:
    """
    Resolves effective run settings with inheritance hierarchy.

    Priority (lowest to highest):
    1. Global defaults from .env / environment (via app.core.config.settings)
    2. Values from the --config JSON file
    3. Flags given explicitly on the command line
    """

    def __init__(
        self,
        command: str,
        flag_overrides: Optional[Dict[str, Any]] = None,
        file_overrides: Optional[Dict[str, Any]] = None,
        global_settings: Optional[Settings] = None,
    ):
        self.command = command
        self.global_settings = global_settings or settings
        self.flag_overrides = {k: v for k, v in (flag_overrides or {}).items() if v is not None}
        self.file_overrides = {k: v for k, v in (file_overrides or {}).items() if v is not None}

    def get(self, key: str, default: Any = None) -> Any:
        """Flag, then config file, then ``default``."""
        if key in self.flag_overrides:
            return self.flag_overrides[key]
        if key in self.file_overrides:
            return self.file_overrides[key]
        return default

    def _float_list(self, key: str, fallback: str) -> list:
        value = self.get(key)
        if value is None:
            return parse_float_list(fallback)
        if isinstance(value, str):
            return parse_float_list(value)
        return [float(v) for v in value]

    def get_tau(self) -> float:
        """--tau and its alias --mask-threshold must agree when both are set."""
        tau = self.get("tau")
        alias = self.get("mask_threshold")
        if tau is not None and alias is not None and float(tau) != float(alias):
            raise ConfigContradictionError(f"--tau {tau} contradicts --mask-threshold {alias}")
        value = tau if tau is not None else alias
        return float(value) if value is not None else self.global_settings.tau

    def get_task(self) -> TaskMode:
        value = self.get("mode", TaskMode.SEG.value)
        try:
            return TaskMode(value)
        except ValueError:
            raise ConfigContradictionError(f"unknown mode {value!r}; expected seg or loc") from None

    def get_switch(self, key: str, default: bool) -> bool:
        value = self.get(key)
        if value is None:
            return default
        if isinstance(value, bool):
            return value
        return SwitchState(value) == SwitchState.ON

    def get_climb_config(self) -> ClimbConfig:
        g = self.global_settings
        task = self.get_task()
        default_lambda = g.lambda_seg if task == TaskMode.SEG else g.lambda_loc
        return ClimbConfig(
            steps=self.get("steps", g.steps),
            xi=self.get("xi", g.xi),
            reg_lambda=self.get("lambda", default_lambda),
            tau=self.get_tau(),
            direction=ClimbDirection(self.get("direction", ClimbDirection.CLIMB.value)),
            suppress_other_classes=self.get_switch("suppress_others", g.suppress_other_classes),
            aggregation=Aggregation(self.get("aggregation", Aggregation.SUM.value)),
        )

    def get_generator_config(self, seed: int) -> GeneratorConfig:
        g = self.global_settings
        return GeneratorConfig(
            class_count=self.get("class_count", g.class_count),
            image_size=self.get("image_size", g.image_size),
            objects_per_image=self.get("objects_per_image", g.objects_per_image),
            head_contrast=self.get("head_contrast", g.head_contrast),
            body_contrast=self.get("body_contrast", g.body_contrast),
            rgb=bool(self.get("rgb", False)),
            seed=seed,
        )

    def resolve(self) -> RunConfig:
        """Build the RunConfig; pydantic validation errors propagate to the caller."""
        g = self.global_settings
        seed = int(self.get("seed", g.seed))
        task = self.get_task()
        out = self.get("out") or str(Path(g.output_root) / self.command)
        run = RunConfig(
            command=self.command,
            out=out,
            seed=seed,
            workers=self.get("workers", g.workers),
            task=task,
            data=self.get("data", g.data_root),
            split=self.get("split", "test"),
            model=self.get("model"),
            climb_dir=self.get("climb_dir"),
            pred=self.get("pred"),
            gt=self.get("gt"),
            saliency=self.get("saliency"),
            climb=self.get_climb_config(),
            train=TrainConfig(
                epochs=self.get("epochs", g.epochs),
                batch_size=self.get("batch_size", g.batch_size),
                learning_rate=self.get("learning_rate", g.learning_rate),
                seed=seed,
                mode=classification_mode_for(task),
            ),
            generator=self.get_generator_config(seed),
            train_count=self.get("train_count", g.train_count),
            test_count=self.get("test_count", g.test_count),
            landscape=LandscapeConfig(
                grid_n=self.get("landscape_grid", g.landscape_grid),
                radius=self.get("landscape_radius", g.landscape_radius),
                seed=seed,
            ),
            theta=self.get("theta"),
            theta_grid=self._float_list("theta_grid", g.theta_grid),
            iou_thresholds=self._float_list("iou_thresholds", g.iou_thresholds),
            per_image=bool(self.get("per_image", False)),
            ablation=bool(self.get("ablation", False)),
            viz_items=self.get("viz_items", 4),
            viz_steps=[int(v) for v in self._float_list("viz_steps", "0,5,10,20")],
            sweep_param=self.get("param"),
            sweep_values=self._float_list("values", ""),
        )
        logger.debug(f"Resolved {self.command} config: {run.audit_dict()}")
        return run
