"""
Toy convolutional classifier with a GAP head.

centered input -> conv blocks (conv -> ReLU, 2x average downsample between
blocks) -> GAP -> linear head. The synthetic background sits at 0.5, so
centering leaves it at zero and GAP sees object responses only. The head bias
exists for classification but is never part of a class activation map. A
model is immutable: training produces new instances via
:meth:`ClassifierModel.with_parameters`.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np

from app.core.autodiff import Tensor, avg_pool2d, conv2d, gap, linear, relu
from app.core.errors import ConfigContradictionError, MissingInputError, ShapeMismatchError, TensorFormatError
from app.core.utils import atns
from app.schemas.enums import ClassificationMode
from app.schemas.training import ArchitectureSpec

logger = logging.getLogger(__name__)

CHECKPOINT_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class ForwardResult:
    """Graph outputs of one forward pass (batch dimension kept)."""

    image: Tensor      # (B, C, H, W) graph input
    features: Tensor   # f(x), (B, C_f, h, w), pre-GAP
    pooled: Tensor     # GAP(f(x)), (B, C_f)
    logits: Tensor     # (B, K)


class ClassifierModel:
    """Parameter set of the conv/GAP/linear classifier."""

    def __init__(
        self,
        architecture: ArchitectureSpec,
        kernels: Sequence[Tensor],
        biases: Sequence[Tensor],
        head_weight: Tensor,
        head_bias: Tensor,
        mode: ClassificationMode,
        class_names: Sequence[str],
    ) -> None:
        if len(kernels) != len(architecture.block_channels) or len(biases) != len(kernels):
            raise ShapeMismatchError(
                f"{len(kernels)} kernels / {len(biases)} biases for {len(architecture.block_channels)} blocks"
            )
        in_channels = architecture.in_channels
        for index, (kernel, bias, width) in enumerate(zip(kernels, biases, architecture.block_channels)):
            expected = (width, in_channels, architecture.kernel_size, architecture.kernel_size)
            if kernel.shape != expected or bias.shape != (width,):
                raise ShapeMismatchError(
                    f"block {index}: kernel {kernel.shape} / bias {bias.shape}, expected {expected} / ({width},)"
                )
            in_channels = width
        if head_weight.shape != (len(class_names), architecture.feature_channels):
            raise ShapeMismatchError(
                f"head weight {head_weight.shape} does not match "
                f"{len(class_names)} classes x {architecture.feature_channels} feature channels"
            )
        if head_bias.shape != (len(class_names),):
            raise ShapeMismatchError(f"head bias {head_bias.shape} does not match {len(class_names)} classes")

        self.architecture = architecture
        self.kernels = tuple(kernels)
        self.biases = tuple(biases)
        self.head_weight = head_weight
        self.head_bias = head_bias
        self.mode = ClassificationMode(mode)
        self.class_names = list(class_names)

    # -------- Construction --------
    @classmethod
    def initialize(
        cls,
        class_names: Sequence[str],
        mode: ClassificationMode = ClassificationMode.MULTI_LABEL,
        architecture: Optional[ArchitectureSpec] = None,
        seed: int = 0,
    ) -> "ClassifierModel":
        """He-initialized kernels, zero biases, small random head."""
        architecture = architecture or ArchitectureSpec()
        rng = np.random.default_rng(seed)
        kernels, biases = [], []
        in_channels = architecture.in_channels
        k = architecture.kernel_size
        for width in architecture.block_channels:
            scale = np.sqrt(2.0 / (in_channels * k * k))
            kernels.append(Tensor(rng.normal(0.0, scale, size=(width, in_channels, k, k))))
            biases.append(Tensor(np.zeros(width)))
            in_channels = width
        head_scale = np.sqrt(1.0 / architecture.feature_channels)
        head_weight = Tensor(rng.normal(0.0, head_scale, size=(len(class_names), architecture.feature_channels)))
        head_bias = Tensor(np.zeros(len(class_names)))
        return cls(architecture, kernels, biases, head_weight, head_bias, mode, class_names)

    def parameters(self) -> List[Tensor]:
        """Kernels and biases per block, then head weight and bias."""
        params: List[Tensor] = []
        for kernel, bias in zip(self.kernels, self.biases):
            params.extend([kernel, bias])
        params.extend([self.head_weight, self.head_bias])
        return params

    def parameter_names(self) -> List[str]:
        names: List[str] = []
        for index in range(len(self.kernels)):
            names.extend([f"block{index}.kernel", f"block{index}.bias"])
        names.extend(["head.weight", "head.bias"])
        return names

    def with_parameters(self, arrays: Sequence[np.ndarray]) -> "ClassifierModel":
        """New model with the same architecture and the given parameter values."""
        tensors = [Tensor(a) for a in arrays]
        blocks = len(self.kernels)
        return ClassifierModel(
            self.architecture,
            tensors[0 : 2 * blocks : 2],
            tensors[1 : 2 * blocks : 2],
            tensors[2 * blocks],
            tensors[2 * blocks + 1],
            self.mode,
            self.class_names,
        )

    @property
    def class_count(self) -> int:
        return len(self.class_names)

    def feature_extent(self, image_extent: int) -> int:
        return self.architecture.feature_extent(image_extent)

    # -------- Forward --------
    def as_input(self, image: Union[Tensor, np.ndarray]) -> Tensor:
        """Lift an image to a (B, C, H, W) graph leaf; 2-D and 3-D inputs gain leading axes."""
        tensor = image if isinstance(image, Tensor) else Tensor(image)
        if tensor.ndim == 2:
            tensor = tensor.reshape(1, 1, *tensor.shape)
        elif tensor.ndim == 3:
            tensor = tensor.reshape(1, *tensor.shape)
        if tensor.ndim != 4 or tensor.shape[1] != self.architecture.in_channels:
            raise ShapeMismatchError(
                f"image {tensor.shape} incompatible with {self.architecture.in_channels}-channel model"
            )
        return tensor

    def forward(self, image: Union[Tensor, np.ndarray]) -> ForwardResult:
        """logits = W . GAP(f(x)) + b, with f(x) returned pre-GAP."""
        x = self.as_input(image)
        if min(self.feature_extent(x.shape[2]), self.feature_extent(x.shape[3])) < 1:
            raise ShapeMismatchError(f"image {x.shape} too small for the conv stack")
        hidden = (x - self.architecture.input_offset) * self.architecture.input_scale
        last = len(self.kernels) - 1
        for index, (kernel, bias) in enumerate(zip(self.kernels, self.biases)):
            hidden = relu(
                conv2d(
                    hidden,
                    kernel,
                    bias,
                    stride=self.architecture.stride,
                    padding=self.architecture.padding,
                )
            )
            if index < last:
                hidden = avg_pool2d(hidden, self.architecture.pool_size)
        pooled = gap(hidden)
        logits = linear(pooled, self.head_weight, self.head_bias)
        return ForwardResult(image=x, features=hidden, pooled=pooled, logits=logits)

    def predict_logits(self, images: np.ndarray) -> np.ndarray:
        """Logits as a plain array for a batch (or single image)."""
        return self.forward(images).logits.numpy()

    def require_mode(self, mode: ClassificationMode, purpose: str) -> None:
        if self.mode != ClassificationMode(mode):
            raise ConfigContradictionError(f"{purpose} needs a {mode.value} model, checkpoint is {self.mode.value}")

    # -------- Persistence --------
    def save(self, directory: Union[str, Path]) -> Path:
        """Write manifest.json plus one ATNS blob per parameter."""
        directory = Path(directory)
        (directory / "params").mkdir(parents=True, exist_ok=True)
        entries = []
        for name, tensor in zip(self.parameter_names(), self.parameters()):
            relative = f"params/{name}.atns"
            atns.save(directory / relative, tensor.data)
            entries.append({"name": name, "file": relative, "shape": list(tensor.shape)})
        manifest = {
            "schema_version": CHECKPOINT_SCHEMA_VERSION,
            "architecture": self.architecture.model_dump(),
            "mode": self.mode.value,
            "class_names": self.class_names,
            "parameters": entries,
        }
        path = directory / "manifest.json"
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
        logger.info(f"Saved checkpoint ({len(entries)} tensors) to {directory}")
        return path

    @classmethod
    def load(cls, directory: Union[str, Path]) -> "ClassifierModel":
        directory = Path(directory)
        manifest_path = directory / "manifest.json"
        if not manifest_path.exists():
            raise MissingInputError(f"checkpoint manifest not found: {manifest_path}")
        try:
            manifest = json.loads(manifest_path.read_text())
        except json.JSONDecodeError as exc:
            raise TensorFormatError(f"invalid JSON: {exc.msg}", str(manifest_path), exc.pos) from exc
        architecture = ArchitectureSpec(**manifest["architecture"])
        arrays = []
        for entry in manifest["parameters"]:
            array = atns.load(directory / entry["file"])
            if list(array.shape) != entry["shape"]:
                raise TensorFormatError(
                    f"shape {list(array.shape)} differs from manifest {entry['shape']}",
                    str(directory / entry["file"]),
                )
            arrays.append(array)
        template = cls.initialize(manifest["class_names"], ClassificationMode(manifest["mode"]), architecture)
        model = template.with_parameters(arrays)
        logger.info(f"Loaded {model.mode.value} checkpoint with {model.class_count} classes from {directory}")
        return model
