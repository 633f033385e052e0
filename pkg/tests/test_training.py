"""Test suite for the optimizer, early stopping and the training loop."""

from pathlib import Path

import numpy as np
import pytest

from caption_forge.core.dataset import CaptionRecord, TrainingExample, expand_all
from caption_forge.core.embedding_store import EmbeddingStore, ImageEmbedding
from caption_forge.core.neural_lm import ArchitectureSpec, ModelParameters, build_model, loss, make_spec
from caption_forge.core.text_pipeline import TokenSequence, build_vocabulary
from caption_forge.core.training import (
    EarlyStopping,
    LossRecord,
    OptimizerState,
    TrainingConfig,
    train,
    write_loss_history,
)
from caption_forge.utils.errors import CaptionForgeError


def memorization_task() -> tuple[list[TrainingExample], EmbeddingStore, int]:
    """
    Two photos with one five-token caption each: eight examples a model can fit exactly.

    Returns:
        tuple[list[TrainingExample], EmbeddingStore, int]: Examples, store and vocabulary size.
    """
    records = [
        CaptionRecord(
            photo_id="first", tokens=TokenSequence(tokens=["<startseq>", "hot", "spicy", "soup", "<endseq>"]),
        ),
        CaptionRecord(
            photo_id="second", tokens=TokenSequence(tokens=["<startseq>", "cold", "dark", "beer", "<endseq>"]),
        ),
    ]
    vocab = build_vocabulary((record.tokens for record in records), 1)
    store = EmbeddingStore(4)
    store.add("first", ImageEmbedding(values=[1.0, 0.0, 0.0, 0.0]))
    store.add("second", ImageEmbedding(values=[0.0, 1.0, 0.0, 0.0]))
    return expand_all(records, vocab, 5), store, vocab.size


def task_spec(kind: str, vocab_size: int, dim: int = 16) -> ArchitectureSpec:
    """
    Architecture of the given kind at the dimensions of the memorization task.

    Args:
        kind: Architecture kind.
        vocab_size: Vocabulary size.
        dim: Shared embedding, hidden and image dense size.

    Returns:
        ArchitectureSpec: The architecture.
    """
    return make_spec(
        kind=kind,
        embedding_dim=dim,
        lstm_hidden_dim=dim,
        image_dense_dim=dim,
        vocab_size=vocab_size,
        max_len=5,
        image_input_dim=4,
    )


@pytest.mark.parametrize("kind", ["inject", "merge_concat", "merge_add"])
def test_overfits_a_tiny_corpus(kind: str) -> None:
    """
    Test that every architecture drives the loss of eight examples below 0.05 within 200 epochs.

    Each example is its own optimizer step.

    Args:
        kind: Architecture under test.
    """
    examples, store, vocab_size = memorization_task()
    spec = task_spec(kind, vocab_size)
    config = TrainingConfig(
        learning_rate=0.01, momentum=0.9, decay=1e-6, batch_size=1, max_epochs=200, patience=0, seed=3,
    )
    params, history = train(spec, examples, examples, store, config)

    assert len(examples) == 8
    assert len(history) == 200
    assert min(record.val_loss for record in history) < 0.05
    assert loss(params, spec, examples, store) < 0.05


def test_returns_best_epoch_parameters() -> None:
    """Test that early stopping hands back the parameters of the best validation epoch."""
    examples, store, vocab_size = memorization_task()
    spec = task_spec("merge_concat", vocab_size, dim=8)
    config = TrainingConfig(learning_rate=0.05, batch_size=2, max_epochs=15, patience=3, seed=1)
    params, history = train(spec, examples, examples[:3], store, config)

    best = min(record.val_loss for record in history)
    assert loss(params, spec, examples[:3], store) == pytest.approx(best, rel=1e-9)
    assert [record.epoch for record in history] == list(range(1, len(history) + 1))


def test_training_is_deterministic() -> None:
    """Test that the same seed gives the same history and parameters."""
    examples, store, vocab_size = memorization_task()
    spec = task_spec("merge_add", vocab_size, dim=8)
    config = TrainingConfig(learning_rate=0.05, batch_size=2, max_epochs=5, patience=0, seed=11)
    first_params, first_history = train(spec, examples, examples, store, config)
    second_params, second_history = train(spec, examples, examples, store, config)

    assert first_history == second_history
    for name, array in first_params:
        assert np.array_equal(array, second_params[name])


def test_frozen_word_embeddings_do_not_move() -> None:
    """Test that frozen word embeddings stay put while other weights train."""
    examples, store, vocab_size = memorization_task()
    spec = task_spec("merge_concat", vocab_size, dim=8)
    config = TrainingConfig(
        learning_rate=0.05, batch_size=2, max_epochs=3, patience=0, seed=2, train_word_embeddings=False,
    )
    initial = build_model(spec, seed=2)
    params, _ = train(spec, examples, examples, store, config, initial_params=initial)

    assert np.array_equal(params["word_embedding"], initial["word_embedding"])
    assert not np.array_equal(params["output_weight"], initial["output_weight"])


def test_divergence_is_reported() -> None:
    """Test that non-finite parameters stop training with a data error."""
    examples, store, vocab_size = memorization_task()
    spec = task_spec("merge_concat", vocab_size, dim=8)
    broken = build_model(spec, seed=0)
    broken["output_bias"][...] = np.nan

    with pytest.raises(CaptionForgeError) as exc:
        train(spec, examples, examples, store, TrainingConfig(max_epochs=2), initial_params=broken)
    assert exc.value.reason == "DIVERGED"


def test_training_input_errors() -> None:
    """Test empty example sets and embeddings of the wrong size."""
    examples, store, vocab_size = memorization_task()
    spec = task_spec("merge_concat", vocab_size, dim=8)

    with pytest.raises(CaptionForgeError) as exc:
        train(spec, [], examples, store, TrainingConfig())
    assert exc.value.reason == "EMPTY_DATASET"
    with pytest.raises(CaptionForgeError) as exc:
        train(spec, examples, [], store, TrainingConfig())
    assert exc.value.reason == "EMPTY_DATASET"
    with pytest.raises(CaptionForgeError) as exc:
        train(spec, examples, examples, EmbeddingStore(5), TrainingConfig())
    assert exc.value.reason == "DIMENSION_MISMATCH"


def test_learning_rate_decay() -> None:
    """Test the learning rate schedule at the start and after a million steps."""
    optimizer = OptimizerState(task_spec("merge_add", 8, dim=4), learning_rate=0.01, momentum=0.9, decay=1e-6)

    assert optimizer.learning_rate_at(0) == 0.01
    assert optimizer.learning_rate_at(10**6) == pytest.approx(0.005)


def test_nesterov_steps() -> None:
    """Test two updates with a constant unit gradient against the momentum recurrence."""
    spec = task_spec("merge_add", 8, dim=4)
    optimizer = OptimizerState(spec, learning_rate=0.1, momentum=0.5, decay=0.0)
    params = ModelParameters.zeros(spec)
    grads = ModelParameters({name: np.ones_like(array) for name, array in params})

    assert np.array_equal(optimizer.lookahead(params)["output_bias"], params["output_bias"])
    params = optimizer.step(params, grads)
    assert np.allclose(params["output_bias"], -0.1)
    assert np.allclose(optimizer.lookahead(params)["output_bias"], -0.15)
    params = optimizer.step(params, grads)
    assert np.allclose(params["output_bias"], -0.25)
    assert optimizer.iteration == 2


def test_early_stopping() -> None:
    """Test that patience counts epochs without improvement and zero disables stopping."""
    stopping = EarlyStopping(patience=2)
    stops = []
    for epoch, val_loss in enumerate([2.0, 1.5, 1.6, 1.7], start=1):
        stopping.update(epoch, val_loss)
        stops.append(stopping.should_stop)

    assert stops == [False, False, False, True]
    assert stopping.best_epoch == 2
    assert stopping.best_loss == 1.5

    never = EarlyStopping(patience=0)
    for epoch in range(1, 10):
        never.update(epoch, float(epoch))
    assert not never.should_stop


def test_write_loss_history(tmp_path: Path) -> None:
    """
    Test the CSV layout of the loss history.

    Args:
        tmp_path: Temporary directory provided by pytest.
    """
    path = tmp_path / "history.csv"
    write_loss_history(
        [LossRecord(epoch=1, train_loss=2.5, val_loss=2.25), LossRecord(epoch=2, train_loss=1.0, val_loss=1.125)],
        path,
    )

    assert path.read_text().splitlines() == [
        "epoch,train_loss,val_loss",
        "1,2.500000,2.250000",
        "2,1.000000,1.125000",
    ]
