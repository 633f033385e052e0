"""Minibatch training with Nesterov momentum, learning rate decay and early stopping."""

import csv
import logging
from pathlib import Path
from typing import Annotated, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from caption_forge.core.dataset import ExampleTable, TrainingExample
from caption_forge.core.embedding_store import EmbeddingStore
from caption_forge.core.neural_lm import (
    ArchitectureSpec,
    ModelParameters,
    batch_loss,
    batch_loss_and_gradient,
    build_model,
)
from caption_forge.utils.config import Settings
from caption_forge.utils.errors import ScorerErrors, TrainingErrors

logger = logging.getLogger(__name__)

EVALUATION_CHUNK = 512


class TrainingConfig(BaseModel):
    """Optimizer and stopping settings; `patience` 0 disables early stopping."""

    model_config = ConfigDict(frozen=True)

    learning_rate: Annotated[float, Field(gt=0.0)] = 0.01
    momentum: Annotated[float, Field(ge=0.0, lt=1.0)] = 0.9
    decay: Annotated[float, Field(ge=0.0)] = 1e-6
    batch_size: Annotated[int, Field(ge=1)] = 64
    max_epochs: Annotated[int, Field(ge=1)] = 30
    patience: Annotated[int, Field(ge=0)] = 2
    seed: int = 0
    train_word_embeddings: bool = True

    @classmethod
    def from_settings(cls, settings: Settings) -> "TrainingConfig":
        return cls(
            learning_rate=settings.learning_rate,
            momentum=settings.momentum,
            decay=settings.decay,
            batch_size=settings.batch_size,
            max_epochs=settings.max_epochs,
            patience=settings.patience,
            seed=settings.seed,
            train_word_embeddings=settings.train_word_embeddings,
        )


class LossRecord(BaseModel):
    """Mean training and validation cross-entropy of one epoch."""

    epoch: int
    train_loss: float
    val_loss: float


class OptimizerState:
    """
    Nesterov momentum state.

    Args:
        spec: Architecture, for the velocity shapes.
        learning_rate: Initial learning rate.
        momentum: Momentum term.
        decay: Per-iteration decay rate of the learning rate.
    """

    def __init__(self, spec: ArchitectureSpec, learning_rate: float, momentum: float, decay: float) -> None:
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.decay = decay
        self.iteration = 0
        self.velocity = ModelParameters.zeros(spec)

    def learning_rate_at(self, iteration: int) -> float:
        return self.learning_rate / (1.0 + iteration * self.decay)

    def lookahead(self, params: ModelParameters) -> ModelParameters:
        """Point where the gradient is evaluated: `params + momentum * velocity`."""
        return params.combine(self.velocity, self.momentum)

    def step(self, params: ModelParameters, grads: ModelParameters) -> ModelParameters:
        """
        Apply one update and advance the iteration counter.

        Args:
            params: Current parameters.
            grads: Gradient taken at `lookahead(params)`.

        Returns:
            ModelParameters: Updated parameters.
        """
        rate = self.learning_rate_at(self.iteration)
        self.velocity = ModelParameters(
            {name: self.momentum * velocity - rate * grads[name] for name, velocity in self.velocity},
        )
        self.iteration += 1
        return params.combine(self.velocity, 1.0)


class EarlyStopping:
    """
    Tracks the best validation loss and signals a stop after `patience` epochs without improvement.

    Args:
        patience: Allowed epochs without improvement; 0 never stops.
    """

    def __init__(self, patience: int) -> None:
        self.patience = patience
        self.best_loss = float("inf")
        self.best_epoch = 0
        self.stale_epochs = 0

    def update(self, epoch: int, val_loss: float) -> bool:
        """
        Record one epoch.

        Returns:
            bool: True if this epoch improved on the best loss.
        """
        if val_loss < self.best_loss:
            self.best_loss = val_loss
            self.best_epoch = epoch
            self.stale_epochs = 0
            return True
        self.stale_epochs += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.patience > 0 and self.stale_epochs >= self.patience


class _ImageIndex:
    """Example table plus one image row per distinct photo."""

    def __init__(self, examples: Sequence[TrainingExample], store: EmbeddingStore) -> None:
        self.table = ExampleTable(examples)
        unique = list(dict.fromkeys(self.table.photo_ids))
        rows = {photo_id: row for row, photo_id in enumerate(unique)}
        self.images = store.matrix(unique)
        self.image_rows = np.array([rows[photo_id] for photo_id in self.table.photo_ids], dtype=np.int64)

    def arrays(self, selection: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        return (
            self.images[self.image_rows[selection]],
            self.table.prefixes[selection],
            self.table.lengths[selection],
            self.table.targets[selection],
        )


def _evaluate_loss(params: ModelParameters, spec: ArchitectureSpec, data: _ImageIndex) -> float:
    total = 0.0
    for start in range(0, len(data.table), EVALUATION_CHUNK):
        selection = np.arange(start, min(start + EVALUATION_CHUNK, len(data.table)))
        total += batch_loss(params, spec, *data.arrays(selection)) * len(selection)
    return total / len(data.table)


def train(
    spec: ArchitectureSpec,
    train_examples: Sequence[TrainingExample],
    validation_examples: Sequence[TrainingExample],
    store: EmbeddingStore,
    config: TrainingConfig,
    initial_params: ModelParameters | None = None,
) -> tuple[ModelParameters, list[LossRecord]]:
    """
    Fit a caption model.

    Each epoch shuffles the training examples, takes one Nesterov step per minibatch and
    measures the validation loss over all validation examples.

    Args:
        spec: Architecture.
        train_examples: Expanded training examples.
        validation_examples: Expanded validation examples.
        store: Embeddings of every referenced photo.
        config: Optimizer and stopping settings.
        initial_params: Starting point; a fresh model seeded with `config.seed` if None.

    Raises:
        CaptionForgeError: If a split is empty, an embedding is missing or the loss diverges.

    Returns:
        tuple[ModelParameters, list[LossRecord]]: Parameters of the epoch with the lowest
        validation loss and the per-epoch loss history.
    """
    if not train_examples:
        raise TrainingErrors.EMPTY_DATASET.error(split="training")
    if not validation_examples:
        raise TrainingErrors.EMPTY_DATASET.error(split="validation")
    if store.dim != spec.image_input_dim:
        raise ScorerErrors.DIMENSION_MISMATCH.error(actual=store.dim, expected=spec.image_input_dim)

    train_data = _ImageIndex(train_examples, store)
    validation_data = _ImageIndex(validation_examples, store)
    params = initial_params.copy() if initial_params is not None else build_model(spec, config.seed)
    optimizer = OptimizerState(spec, config.learning_rate, config.momentum, config.decay)
    stopping = EarlyStopping(config.patience)
    rng = np.random.default_rng(config.seed)

    best_params = params.copy()
    history: list[LossRecord] = []
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(train_data.table))
        epoch_loss = 0.0
        for start in range(0, len(order), config.batch_size):
            selection = order[start : start + config.batch_size]
            batch_value, grads = batch_loss_and_gradient(
                optimizer.lookahead(params), spec, *train_data.arrays(selection),
            )
            if not np.isfinite(batch_value):
                raise TrainingErrors.DIVERGED.error(epoch=epoch, iteration=optimizer.iteration, loss=batch_value)
            if not config.train_word_embeddings:
                grads["word_embedding"][...] = 0.0
            params = optimizer.step(params, grads)
            if not params.all_finite():
                raise TrainingErrors.DIVERGED.error(epoch=epoch, iteration=optimizer.iteration, loss="non-finite")
            epoch_loss += batch_value * len(selection)

        record = LossRecord(
            epoch=epoch,
            train_loss=epoch_loss / len(order),
            val_loss=_evaluate_loss(params, spec, validation_data),
        )
        history.append(record)
        logger.info(
            "Epoch %d/%d: train_loss=%.4f val_loss=%.4f lr=%.6f",
            epoch, config.max_epochs, record.train_loss, record.val_loss,
            optimizer.learning_rate_at(optimizer.iteration),
        )

        if not np.isfinite(record.val_loss):
            raise TrainingErrors.DIVERGED.error(epoch=epoch, iteration=optimizer.iteration, loss=record.val_loss)
        if stopping.update(epoch, record.val_loss):
            best_params = params.copy()
        if stopping.should_stop:
            logger.info(
                "Stopping early; best validation loss %.4f at epoch %d", stopping.best_loss, stopping.best_epoch,
            )
            break
    return best_params, history


def write_loss_history(history: Sequence[LossRecord], path: Path) -> None:
    """Write the history as CSV with columns `epoch,train_loss,val_loss`."""
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["epoch", "train_loss", "val_loss"])
        for record in history:
            writer.writerow([record.epoch, f"{record.train_loss:.6f}", f"{record.val_loss:.6f}"])
