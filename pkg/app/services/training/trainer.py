"""
Plain-SGD training of the toy classifier.

Every batch rebuilds the graph, takes the gradient of the mode's
cross-entropy with respect to all parameters and produces a new immutable
model. Shuffling draws from one seeded generator, so a seed fully determines
the run.
"""
from __future__ import annotations

import logging
from typing import Tuple, Union

import numpy as np

from app.core.autodiff import Tensor, classification_losses, gradients
from app.core.errors import ConfigContradictionError, LabelError, NonFiniteError
from app.models.classifier import ClassifierModel
from app.schemas.enums import ClassificationMode
from app.schemas.training import TrainConfig, TrainResult

logger = logging.getLogger(__name__)

_EVAL_BATCH = 64


def classification_loss(
    model: ClassifierModel,
    image: Union[Tensor, np.ndarray],
    label: np.ndarray,
) -> Tensor:
    """Scalar graph output of the model's training loss for one image (or batch)."""
    result = model.forward(image)
    return classification_losses(result.logits, np.atleast_2d(label), model.mode)


def predictions_correct(logits: np.ndarray, labels: np.ndarray, mode: ClassificationMode) -> np.ndarray:
    """Per-image correctness: argmax for single-label, exact match of logit > 0 for multi-label."""
    labels = np.atleast_2d(labels)
    if mode == ClassificationMode.SINGLE_LABEL:
        return logits.argmax(axis=1) == labels.argmax(axis=1)
    return ((logits > 0).astype(int) == labels.astype(int)).all(axis=1)


class Trainer:
    """Trains a ClassifierModel on an in-memory image array."""

    def __init__(self, config: TrainConfig):
        self.config = config

    def train(
        self,
        model: ClassifierModel,
        images: np.ndarray,
        labels: np.ndarray,
    ) -> Tuple[ClassifierModel, TrainResult]:
        """Run ``config.epochs`` epochs of SGD and return the trained model with its loss curve."""
        if len(images) == 0:
            raise LabelError("cannot train on an empty dataset")
        if len(images) != len(labels):
            raise LabelError(f"{len(images)} images but {len(labels)} label vectors")
        if model.mode != self.config.mode:
            raise ConfigContradictionError(
                f"train config mode {self.config.mode.value} differs from model mode {model.mode.value}"
            )

        rng = np.random.default_rng(self.config.seed)
        initial_loss = self.dataset_loss(model, images, labels)
        logger.info(
            f"Training {model.mode.value} classifier on {len(images)} images "
            f"({self.config.epochs} epochs, lr={self.config.learning_rate}); initial loss {initial_loss:.4f}"
        )

        epoch_losses = []
        for epoch in range(1, self.config.epochs + 1):
            order = rng.permutation(len(images))
            batch_losses = []
            for start in range(0, len(order), self.config.batch_size):
                batch = order[start : start + self.config.batch_size]
                try:
                    loss = classification_loss(model, images[batch], labels[batch])
                    grads = gradients(loss, model.parameters())
                except NonFiniteError as exc:
                    raise NonFiniteError(f"training diverged in epoch {epoch}: {exc}") from exc
                lr = self.config.learning_rate
                model = model.with_parameters([p.data - lr * g for p, g in zip(model.parameters(), grads)])
                batch_losses.append(loss.item())
            epoch_loss = float(np.mean(batch_losses))
            if not np.isfinite(epoch_loss):
                raise NonFiniteError(f"training diverged in epoch {epoch}")
            epoch_losses.append(epoch_loss)
            logger.debug(f"epoch {epoch}: mean batch loss {epoch_loss:.5f}")

        final_loss = self.dataset_loss(model, images, labels)
        accuracy = self.accuracy(model, images, labels)
        logger.info(f"Training finished: loss {initial_loss:.4f} -> {final_loss:.4f}, accuracy {accuracy:.3f}")
        return model, TrainResult(
            epoch_losses=epoch_losses,
            initial_loss=initial_loss,
            final_loss=final_loss,
            train_accuracy=accuracy,
        )

    @staticmethod
    def dataset_loss(model: ClassifierModel, images: np.ndarray, labels: np.ndarray) -> float:
        """Mean loss over the whole set, evaluated in fixed chunks."""
        total = 0.0
        for start in range(0, len(images), _EVAL_BATCH):
            chunk = slice(start, start + _EVAL_BATCH)
            loss = classification_loss(model, images[chunk], labels[chunk])
            total += loss.item() * len(images[chunk])
        return total / len(images)

    @staticmethod
    def accuracy(model: ClassifierModel, images: np.ndarray, labels: np.ndarray) -> float:
        correct = []
        for start in range(0, len(images), _EVAL_BATCH):
            chunk = slice(start, start + _EVAL_BATCH)
            logits = model.predict_logits(images[chunk])
            correct.append(predictions_correct(logits, labels[chunk], model.mode))
        return float(np.concatenate(correct).mean())
