"""This module defines the model training subcommands."""

import logging
from argparse import Namespace
from pathlib import Path

from caption_forge.core.dataset import load_examples
from caption_forge.core.embedding_store import load_store
from caption_forge.core.neural_lm import (
    build_model,
    load_word_vectors,
    make_spec,
    parameter_count,
    save_model,
)
from caption_forge.core.ngram_lm import save_ngram, train_ngram
from caption_forge.core.text_pipeline import Vocabulary, load_vocabulary, save_vocabulary
from caption_forge.core.training import TrainingConfig, train, write_loss_history
from caption_forge.utils.config import Settings
from caption_forge.utils.errors import ExitCode, TrainingErrors
from caption_forge.utils.io import read_caption_records

logger = logging.getLogger(__name__)


def save_model_vocabulary(vocab: Vocabulary, source: Path, model_path: Path) -> None:
    """Keep a copy of the vocabulary next to the model, where `caption` looks for it by default."""
    sibling = model_path.with_suffix(".vocab")
    if sibling.resolve() != source.resolve():
        save_vocabulary(vocab, sibling)


def train_ngram_model(args: Namespace, settings: Settings) -> int:
    records = read_caption_records(args.source)
    vocab = load_vocabulary(args.vocab)
    model = train_ngram((record.tokens for record in records), settings.ngram_order, vocab)
    save_ngram(model, args.out)
    save_model_vocabulary(vocab, args.vocab, args.out)
    print(f"{settings.ngram_order}-gram model with {len(model.counts)} contexts written to {args.out}")
    return ExitCode.OK


def train_neural_model(args: Namespace, settings: Settings) -> int:
    """
    Train an inject or merge caption model on cached examples.

    Args:
        args: Parsed flags with `train`, `validation`, `vocab`, `embeddings`, `out` and the
            optional `word_vectors` and `history` paths.
        settings: Run settings with architecture and optimizer values.

    Raises:
        CaptionForgeError: If an input is malformed, the architecture is invalid or training
            diverges.

    Returns:
        int: Exit code.
    """
    vocab = load_vocabulary(args.vocab)
    train_examples = load_examples(args.train)
    validation_examples = load_examples(args.validation)
    store = load_store(args.embeddings)
    if not train_examples:
        raise TrainingErrors.EMPTY_DATASET.error(split="training")

    embedding_dim, hidden_dim, dense_dim = settings.layer_dims()
    spec = make_spec(
        kind=settings.architecture,
        embedding_dim=embedding_dim,
        lstm_hidden_dim=hidden_dim,
        image_dense_dim=dense_dim,
        vocab_size=vocab.size,
        max_len=train_examples[0].prefix.max_len,
        image_input_dim=store.dim,
    )
    for name, count in parameter_count(spec).items():
        logger.info("%s: %d parameters", name, count)

    params = build_model(spec, settings.seed)
    if args.word_vectors is not None:
        params, _ = load_word_vectors(args.word_vectors, vocab, params, spec)

    params, history = train(
        spec, train_examples, validation_examples, store, TrainingConfig.from_settings(settings), params,
    )
    save_model(params, spec, args.out)
    save_model_vocabulary(vocab, args.vocab, args.out)
    if args.history is not None:
        write_loss_history(history, args.history)

    best = min(history, key=lambda record: record.val_loss)
    print(f"{spec.kind} model written to {args.out}; best validation loss {best.val_loss:.4f} at epoch {best.epoch}")
    return ExitCode.OK


def register(subparsers) -> None:
    parser = subparsers.add_parser("train-ngram", help="count an image-blind n-gram caption model")
    parser.add_argument("--in", dest="source", type=Path, required=True, help="token JSON-lines file")
    parser.add_argument("--vocab", type=Path, required=True)
    parser.add_argument("--out", type=Path, required=True)
    parser.add_argument("--order", dest="ngram_order", type=int)
    parser.set_defaults(handler=train_ngram_model)

    parser = subparsers.add_parser("train-neural", help="train an inject or merge LSTM caption model")
    parser.add_argument("--train", type=Path, required=True, help="NICD training examples")
    parser.add_argument("--validation", type=Path, required=True, help="NICD validation examples")
    parser.add_argument("--vocab", type=Path, required=True)
    parser.add_argument("--embeddings", type=Path, required=True, help="NICE embedding file")
    parser.add_argument("--out", type=Path, required=True, help="NICM model file")
    parser.add_argument("--history", type=Path, help="CSV file for the per-epoch losses")
    parser.add_argument("--word-vectors", dest="word_vectors", type=Path, help="token v1 ... vd table")
    parser.add_argument("--architecture", choices=["inject", "merge_concat", "merge_add"])
    parser.add_argument("--embedding-dim", dest="embedding_dim", type=int)
    parser.add_argument("--hidden-dim", dest="lstm_hidden_dim", type=int)
    parser.add_argument("--image-dense-dim", dest="image_dense_dim", type=int)
    parser.add_argument("--learning-rate", dest="learning_rate", type=float)
    parser.add_argument("--momentum", type=float)
    parser.add_argument("--decay", type=float)
    parser.add_argument("--batch-size", dest="batch_size", type=int)
    parser.add_argument("--max-epochs", dest="max_epochs", type=int)
    parser.add_argument("--patience", type=int, help="0 disables early stopping")
    parser.add_argument(
        "--freeze-word-embeddings",
        dest="train_word_embeddings",
        action="store_false",
        default=None,
    )
    parser.set_defaults(handler=train_neural_model)
