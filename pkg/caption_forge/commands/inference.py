"""This module defines the caption generation subcommands."""

from argparse import Namespace
from pathlib import Path

from caption_forge.core.decoder import BeamConfig, caption_store
from caption_forge.core.embedding_store import load_store
from caption_forge.core.neural_lm import MODEL_MAGIC, NeuralScorer, load_model
from caption_forge.core.ngram_lm import load_ngram
from caption_forge.core.scorer import Scorer
from caption_forge.core.synthetic import naive_agent_demo
from caption_forge.core.text_pipeline import Vocabulary, load_vocabulary
from caption_forge.utils.config import Settings
from caption_forge.utils.errors import ExitCode
from caption_forge.utils.io import Prediction, write_jsonl


def load_scorer(path: Path, vocab: Vocabulary) -> Scorer:
    """Open a `NICM` neural model or an `NGRAM v1` text model, told apart by the leading bytes."""
    with path.open("rb") as handle:
        magic = handle.read(len(MODEL_MAGIC))
    if magic == MODEL_MAGIC:
        params, spec = load_model(path)
        return NeuralScorer(params, spec, vocab)
    return load_ngram(path, vocab)


def caption(args: Namespace, settings: Settings) -> int:
    """
    Caption every photo of an embedding file.

    Args:
        args: Parsed flags with `model`, `embeddings`, `out` and the optional `vocab`, which
            defaults to the `.vocab` file next to the model.
        settings: Run settings with the beam values and `jobs`.

    Raises:
        CaptionForgeError: If a file is malformed or the embeddings do not fit the model.

    Returns:
        int: Exit code.
    """
    vocab = load_vocabulary(args.vocab or args.model.with_suffix(".vocab"))
    scorer = load_scorer(args.model, vocab)
    store = load_store(args.embeddings)
    config = BeamConfig(beta=settings.beta, kappa=settings.kappa, alpha=settings.alpha, max_len=settings.max_len)

    photo_ids = store.photo_ids()
    captions = caption_store(scorer, store, photo_ids, config, settings.jobs)
    write_jsonl(
        (
            Prediction(photo_id=photo_id, caption=result.text, score=result.score, omegas=result.omegas)
            for photo_id, result in zip(photo_ids, captions)
        ),
        args.out,
    )
    print(f"{len(captions)} captions written to {args.out}")
    return ExitCode.OK


def demo_naive_agent(args: Namespace, settings: Settings) -> int:
    demo = naive_agent_demo(beta=settings.beta, kappa=settings.kappa, alpha=settings.alpha)
    for line in demo.trace:
        print(line)
    print("final population:")
    for text in demo.population:
        print(f"  {text}")
    return ExitCode.OK


def register(subparsers) -> None:
    parser = subparsers.add_parser("caption", help="beam search captions for stored embeddings")
    parser.add_argument("--model", type=Path, required=True, help="NICM or NGRAM model file")
    parser.add_argument("--vocab", type=Path, help="vocabulary file; defaults to the model path with a .vocab suffix")
    parser.add_argument("--embeddings", type=Path, required=True)
    parser.add_argument("--out", type=Path, required=True, help="prediction JSON-lines file")
    parser.add_argument("--alpha", type=float)
    parser.add_argument("--beta", type=int)
    parser.add_argument("--kappa", type=int)
    parser.add_argument("--max-len", dest="max_len", type=int)
    parser.add_argument("--jobs", type=int)
    parser.set_defaults(handler=caption)

    parser = subparsers.add_parser("demo-naive-agent", help="trace the image-blind beam on a constructed corpus")
    parser.add_argument("--alpha", type=float)
    parser.add_argument("--beta", type=int, default=2)
    parser.add_argument("--kappa", type=int, default=2)
    parser.set_defaults(handler=demo_naive_agent)
