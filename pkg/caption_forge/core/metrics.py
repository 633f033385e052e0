"""Corpus BLEU, ROUGE-L and caption diversity of generated captions."""

import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Sequence

from pydantic import BaseModel

from caption_forge.core.analysis import format_table
from caption_forge.core.text_pipeline import normalize_caption
from caption_forge.utils.config import RougeMode
from caption_forge.utils.errors import MetricErrors
from caption_forge.utils.io import Prediction, RawCaption, read_jsonl

BLEU_ORDERS = (1, 2, 3, 4)

Tokens = Sequence[str]


def _ngrams(tokens: Tokens, n: int) -> Counter[tuple[str, ...]]:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _check_corpus(candidates: Sequence[Tokens], references: Sequence[Tokens]) -> None:
    if len(candidates) != len(references):
        raise MetricErrors.LENGTH_MISMATCH.error(candidates=len(candidates), references=len(references))
    if not candidates:
        raise MetricErrors.EMPTY_CORPUS.error()


def bleu_n(candidates: Sequence[Tokens], references: Sequence[Tokens], n: int) -> float:
    """
    Corpus BLEU-N with one reference per candidate and no smoothing.

    Args:
        candidates: Generated captions without markers.
        references: Reference captions without markers.
        n: Highest n-gram order, 1 to 4.

    Raises:
        CaptionForgeError: If n is out of range, the corpus is empty or the lists differ in length.

    Returns:
        float: Geometric mean of the clipped precisions times the brevity penalty.
    """
    if not 1 <= n <= 4:
        raise MetricErrors.BAD_ORDER.error(n=n)
    _check_corpus(candidates, references)

    log_precision = 0.0
    for order in range(1, n + 1):
        matched = total = 0
        for candidate, reference in zip(candidates, references):
            candidate_counts = _ngrams(candidate, order)
            reference_counts = _ngrams(reference, order)
            matched += sum(min(count, reference_counts[gram]) for gram, count in candidate_counts.items())
            total += sum(candidate_counts.values())
        if matched == 0:
            return 0.0
        log_precision += math.log(matched / total) / n

    c = sum(len(candidate) for candidate in candidates)
    r = sum(len(reference) for reference in references)
    brevity = min(1.0, math.exp(1.0 - r / c))
    return brevity * math.exp(log_precision)


def _lcs_length(a: Tokens, b: Tokens) -> int:
    previous = [0] * (len(b) + 1)
    for token in a:
        current = [0]
        for j, other in enumerate(b, start=1):
            current.append(previous[j - 1] + 1 if token == other else max(previous[j], current[j - 1]))
        previous = current
    return previous[-1]


def _rouge_pair(candidate: Tokens, reference: Tokens, mode: RougeMode) -> float:
    if not candidate or not reference:
        return 0.0
    lcs = _lcs_length(candidate, reference)
    recall = lcs / len(reference)
    if mode == "recall":
        return recall
    precision = lcs / len(candidate)
    if precision + recall == 0.0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def rouge_l(
    candidates: Sequence[Tokens], references: Sequence[Tokens], mode: RougeMode = "f1", jobs: int = 1,
) -> float:
    """
    Mean longest-common-subsequence score over candidate/reference pairs.

    Args:
        candidates: Generated captions without markers.
        references: Reference captions without markers.
        mode: `recall` or `f1` per pair.
        jobs: Worker threads for pair scoring.

    Raises:
        CaptionForgeError: If the corpus is empty or the lists differ in length.

    Returns:
        float: Score in [0, 1].
    """
    _check_corpus(candidates, references)
    modes = [mode] * len(candidates)
    if jobs <= 1:
        scores = list(map(_rouge_pair, candidates, references, modes))
    else:
        with ThreadPoolExecutor(max_workers=jobs) as executor:
            scores = list(executor.map(_rouge_pair, candidates, references, modes))
    return math.fsum(scores) / len(scores)


def diversity_stats(candidates: Sequence[Tokens]) -> tuple[int, float]:
    """Distinct tokens across all candidates and mean candidate length."""
    if not candidates:
        return 0, 0.0
    terms = {token for candidate in candidates for token in candidate}
    return len(terms), sum(len(candidate) for candidate in candidates) / len(candidates)


class EvaluationReport(BaseModel):
    """Quality and diversity of one prediction run."""

    captions: int
    bleu: dict[int, float]
    rouge_l: float
    rouge_mode: RougeMode
    terms_generated: int
    avg_caption_len: float
    per_label: dict[str, "EvaluationReport"] = {}


def score_corpus(
    candidates: Sequence[Tokens], references: Sequence[Tokens], rouge_mode: RougeMode = "f1", jobs: int = 1,
) -> EvaluationReport:
    terms, avg_len = diversity_stats(candidates)
    return EvaluationReport(
        captions=len(candidates),
        bleu={n: bleu_n(candidates, references, n) for n in BLEU_ORDERS},
        rouge_l=rouge_l(candidates, references, rouge_mode, jobs),
        rouge_mode=rouge_mode,
        terms_generated=terms,
        avg_caption_len=avg_len,
    )


def evaluate_run(
    predictions_path: Path,
    references_path: Path,
    group_by_label: bool = False,
    rouge_mode: RougeMode = "f1",
    jobs: int = 1,
) -> EvaluationReport:
    """
    Score a predictions file against raw reference captions.

    Args:
        predictions_path: JSON-lines written by the `caption` command.
        references_path: Caption input file; references are normalized before scoring.
        group_by_label: Add a sub-report per label present among the predictions.
        rouge_mode: ROUGE-L pair score.
        jobs: Worker threads for pair scoring.

    Raises:
        CaptionForgeError: If a prediction has no reference or there are no predictions.

    Returns:
        EvaluationReport: The report.
    """
    references = {row.photo_id: row for row in read_jsonl(references_path, RawCaption)}
    predictions = read_jsonl(predictions_path, Prediction)

    candidates, targets, labels = [], [], []
    for prediction in predictions:
        reference = references.get(prediction.photo_id)
        if reference is None:
            raise MetricErrors.MISSING_REFERENCE.error(photo_id=prediction.photo_id)
        candidates.append(prediction.caption.split())
        targets.append(normalize_caption(reference.caption).content())
        labels.append(reference.label)

    report = score_corpus(candidates, targets, rouge_mode, jobs)
    if group_by_label:
        for label in sorted({label for label in labels if label is not None}):
            chosen = [i for i, other in enumerate(labels) if other == label]
            report.per_label[label] = score_corpus(
                [candidates[i] for i in chosen], [targets[i] for i in chosen], rouge_mode, jobs,
            )
    return report


def format_report(report: EvaluationReport) -> str:
    """Render the report as an aligned text table, one row per group."""
    header = [
        "group",
        "captions",
        *(f"BLEU-{n}" for n in BLEU_ORDERS),
        f"ROUGE-L ({report.rouge_mode})",
        "terms",
        "avg len",
    ]
    groups = [("all", report), *sorted(report.per_label.items())]
    rows = [
        (
            name,
            str(sub.captions),
            *(f"{sub.bleu[n]:.4f}" for n in BLEU_ORDERS),
            f"{sub.rouge_l:.4f}",
            str(sub.terms_generated),
            f"{sub.avg_caption_len:.2f}",
        )
        for name, sub in groups
    ]
    return format_table(rows, header)
