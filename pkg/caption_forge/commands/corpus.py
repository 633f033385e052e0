"""
This module defines the corpus preparation subcommands.

Captions are normalized into token records, split, expanded into next-token examples and paired
with image embeddings.
"""

import logging
from argparse import Namespace
from pathlib import Path

from caption_forge.core.dataset import expand_all, expansion_summary, save_examples, split
from caption_forge.core.embedding_store import EmbeddingStore, import_csv, mock_embed, save_store
from caption_forge.core.text_pipeline import build_vocabulary, load_vocabulary, save_vocabulary
from caption_forge.utils.config import Settings
from caption_forge.utils.errors import CorpusErrors, ExitCode
from caption_forge.utils.io import read_caption_records, write_token_records

logger = logging.getLogger(__name__)


def preprocess(args: Namespace, settings: Settings) -> int:
    """
    Normalize raw captions and build the vocabulary.

    Args:
        args: Parsed flags with `source`, `out` and optional `vocab`.
        settings: Run settings; `min_frequency` is used.

    Raises:
        CaptionForgeError: If the input is empty or malformed.

    Returns:
        int: Exit code.
    """
    records = read_caption_records(args.source)
    if not records:
        raise CorpusErrors.EMPTY_CORPUS.error()
    vocab = build_vocabulary((record.tokens for record in records), settings.min_frequency)
    vocab_path = args.vocab or args.out.with_suffix(".vocab")

    write_token_records(records, args.out)
    save_vocabulary(vocab, vocab_path)
    print(f"{len(records)} captions, vocabulary of {vocab.size} tokens written to {vocab_path}")
    return ExitCode.OK


def split_records(args: Namespace, settings: Settings) -> int:
    records = read_caption_records(args.source)
    train, validation = split(records, settings.validation_fraction, settings.seed)
    write_token_records(train, args.train)
    write_token_records(validation, args.validation)
    print(f"{len(train)} training and {len(validation)} validation records")
    return ExitCode.OK


def expand(args: Namespace, settings: Settings) -> int:
    """
    Expand token records into the `NICD` example cache.

    Args:
        args: Parsed flags with `source`, `vocab` and `out`.
        settings: Run settings; `max_len` is used.

    Returns:
        int: Exit code.
    """
    records = read_caption_records(args.source)
    vocab = load_vocabulary(args.vocab)
    examples = expand_all(records, vocab, settings.max_len)
    save_examples(examples, settings.max_len, args.out)

    summary = expansion_summary(records, examples)
    print(f"{summary.captions} captions expanded into {summary.examples} examples ({summary.ratio:.2f} per caption)")
    return ExitCode.OK


def mock_embeddings(args: Namespace, settings: Settings) -> int:
    records = read_caption_records(args.source)
    store = EmbeddingStore(settings.mock_dim)
    for photo_id in dict.fromkeys(record.photo_id for record in records):
        store.add(photo_id, mock_embed(photo_id, settings.mock_dim, settings.seed))
    save_store(store, args.out)
    print(f"{len(store)} mock embeddings of dimension {store.dim} written to {args.out}")
    return ExitCode.OK


def import_embeddings(args: Namespace, settings: Settings) -> int:
    store = import_csv(args.source)
    save_store(store, args.out)
    print(f"{len(store)} embeddings of dimension {store.dim} written to {args.out}")
    return ExitCode.OK


def register(subparsers) -> None:
    parser = subparsers.add_parser("preprocess", help="normalize captions and build the vocabulary")
    parser.add_argument("--in", dest="source", type=Path, required=True, help="caption JSON-lines file")
    parser.add_argument("--out", type=Path, required=True, help="token JSON-lines file")
    parser.add_argument("--vocab", type=Path, help="vocabulary file (default: OUT with .vocab suffix)")
    parser.add_argument("--min-freq", dest="min_frequency", type=int)
    parser.set_defaults(handler=preprocess)

    parser = subparsers.add_parser("split", help="random train/validation split of caption records")
    parser.add_argument("--in", dest="source", type=Path, required=True)
    parser.add_argument("--train", type=Path, required=True)
    parser.add_argument("--validation", type=Path, required=True)
    parser.add_argument("--fraction", dest="validation_fraction", type=float)
    parser.set_defaults(handler=split_records)

    parser = subparsers.add_parser("expand", help="expand captions into next-token examples")
    parser.add_argument("--in", dest="source", type=Path, required=True)
    parser.add_argument("--vocab", type=Path, required=True)
    parser.add_argument("--out", type=Path, required=True, help="NICD example cache")
    parser.add_argument("--max-len", dest="max_len", type=int)
    parser.set_defaults(handler=expand)

    parser = subparsers.add_parser("mock-embed", help="deterministic stand-in image embeddings")
    parser.add_argument("--in", dest="source", type=Path, required=True)
    parser.add_argument("--out", type=Path, required=True, help="NICE embedding file")
    parser.add_argument("--dim", dest="mock_dim", type=int)
    parser.set_defaults(handler=mock_embeddings)

    parser = subparsers.add_parser("import-embeddings", help="convert photo_id,v1,...,vd CSV rows to NICE")
    parser.add_argument("--in", dest="source", type=Path, required=True)
    parser.add_argument("--out", type=Path, required=True)
    parser.set_defaults(handler=import_embeddings)
