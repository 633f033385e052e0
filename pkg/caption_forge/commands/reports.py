"""This module defines the evaluation and corpus analysis subcommands."""

from argparse import Namespace
from pathlib import Path

from caption_forge.core.analysis import (
    format_table,
    label_frequency,
    phrase_frequency_report,
    term_frequency,
    write_table,
    zipf_fit,
)
from caption_forge.core.metrics import evaluate_run, format_report
from caption_forge.core.ngram_lm import context_tables, train_ngram
from caption_forge.core.text_pipeline import build_vocabulary
from caption_forge.utils.config import Settings
from caption_forge.utils.errors import ExitCode
from caption_forge.utils.io import Prediction, read_caption_records, read_jsonl


TABLE_NAMES = ("leading_words.csv", "bigram_table.csv", "trigram_table.csv")


def evaluate(args: Namespace, settings: Settings) -> int:
    report = evaluate_run(args.predictions, args.references, args.by_label, settings.rouge_mode, settings.jobs)
    print(format_report(report))
    if args.json is not None:
        args.json.write_text(report.model_dump_json(indent=2) + "\n", encoding="utf-8")
    return ExitCode.OK


def analyze(args: Namespace, settings: Settings) -> int:
    """
    Print term frequencies, the Zipf fit, label counts, the leading-word, bigram and trigram
    tables and optionally a phrase audit.

    Args:
        args: Parsed flags with `source`, `top`, `table_size` and the optional `context`,
            `predictions`, `phrase` and `csv_dir`.
        settings: Run settings.

    Raises:
        CaptionForgeError: If the corpus is empty or has fewer than 3 distinct tokens, or if
            the table context holds more than two words.

    Returns:
        int: Exit code.
    """
    records = read_caption_records(args.source)
    frequencies = term_frequency(record.tokens for record in records)
    fit = zipf_fit([count for _, count in frequencies])
    labels = label_frequency(records)
    trigrams = train_ngram(
        (record.tokens for record in records), 3, build_vocabulary((record.tokens for record in records), 1),
    )
    tables = context_tables(trigrams, args.context.split() if args.context else [], args.table_size)

    ranked = [(rank, token, count) for rank, (token, count) in enumerate(frequencies, start=1)]
    print(format_table(ranked[: args.top], ["rank", "token", "count"]))
    print(f"\nzipf fit: slope={fit.slope:.4f} intercept={fit.intercept:.4f} r2={fit.r_squared:.4f}")
    if labels:
        print()
        print(format_table(labels, ["label", "records"]))
    for context, rows in tables:
        title = f"after '{' '.join(context)}'" if context else "leading words"
        print(f"\n{title}")
        print(format_table(rows, ["token", "count"]))

    if args.predictions is not None:
        predictions = [prediction.caption.split() for prediction in read_jsonl(args.predictions, Prediction)]
        count, fraction = phrase_frequency_report(predictions, args.phrase.split())
        print(f"\n'{args.phrase}' appears in {count} of {len(predictions)} predictions ({fraction:.1%})")

    if args.csv_dir is not None:
        args.csv_dir.mkdir(parents=True, exist_ok=True)
        write_table(ranked, ["rank", "token", "count"], args.csv_dir / "term_frequency.csv")
        write_table(labels, ["label", "records"], args.csv_dir / "label_frequency.csv")
        for context, rows in tables:
            write_table(rows, ["token", "count"], args.csv_dir / TABLE_NAMES[len(context)])
    return ExitCode.OK


def register(subparsers) -> None:
    parser = subparsers.add_parser("evaluate", help="BLEU, ROUGE-L and diversity of predictions")
    parser.add_argument("--predictions", type=Path, required=True)
    parser.add_argument("--references", type=Path, required=True, help="caption JSON-lines file")
    parser.add_argument("--by-label", dest="by_label", action="store_true")
    parser.add_argument("--rouge-mode", dest="rouge_mode", choices=["recall", "f1"])
    parser.add_argument("--json", type=Path, help="write the report as JSON")
    parser.add_argument("--jobs", type=int)
    parser.set_defaults(handler=evaluate)

    parser = subparsers.add_parser("analyze", help="term frequencies, Zipf fit and phrase audit")
    parser.add_argument("--in", dest="source", type=Path, required=True)
    parser.add_argument("--predictions", type=Path)
    parser.add_argument("--phrase", default="chicken and waffles")
    parser.add_argument("--top", type=int, default=20)
    parser.add_argument("--context", help="up to two words; defaults to the top leading word and its top follower")
    parser.add_argument("--table-size", dest="table_size", type=int, default=10)
    parser.add_argument("--csv-dir", dest="csv_dir", type=Path)
    parser.set_defaults(handler=analyze)
