"""Corpus statistics: term frequencies, Zipf fit and prediction pathology reports."""

import csv
import math
from collections import Counter
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from pydantic import BaseModel

from caption_forge.core.dataset import CaptionRecord, TrainingExample
from caption_forge.core.text_pipeline import TokenSequence
from caption_forge.utils.errors import AnalysisErrors


class ZipfFit(BaseModel):
    """
    Least-squares line through (log rank, log count).

    Attributes:
        slope: Close to -1 for a Zipfian corpus.
        intercept: Log count predicted at rank 1.
        r_squared: Coefficient of determination of the fit.
    """

    slope: float
    intercept: float
    r_squared: float


def term_frequency(corpus: Iterable[TokenSequence]) -> list[tuple[str, int]]:
    """
    Count caption tokens, markers excluded.

    Args:
        corpus: Normalized captions.

    Raises:
        CaptionForgeError: If the corpus is empty.

    Returns:
        list[tuple[str, int]]: (token, count) by descending count, ties in lexicographic order.
    """
    counts: Counter[str] = Counter()
    n_captions = 0
    for caption in corpus:
        counts.update(caption.content())
        n_captions += 1
    if n_captions == 0:
        raise AnalysisErrors.EMPTY_CORPUS.error()
    return sorted(counts.items(), key=lambda pair: (-pair[1], pair[0]))


def zipf_fit(frequencies: Sequence[int]) -> ZipfFit:
    """
    Least-squares line through (log rank, log count).

    Args:
        frequencies: Counts ordered by rank, starting at rank 1.

    Raises:
        CaptionForgeError: If fewer than 3 ranks are given.

    Returns:
        ZipfFit: Slope (about -1 for a Zipfian corpus), intercept and r squared.
    """
    if len(frequencies) < 3:
        raise AnalysisErrors.TOO_FEW_POINTS.error(points=len(frequencies))
    log_rank = np.log(np.arange(1, len(frequencies) + 1))
    log_count = np.log(np.asarray(frequencies, dtype=np.float64))
    slope, intercept = np.polyfit(log_rank, log_count, 1)

    residual = log_count - (slope * log_rank + intercept)
    total = np.sum((log_count - log_count.mean()) ** 2)
    r_squared = 1.0 if total == 0.0 else 1.0 - float(np.sum(residual**2)) / float(total)
    return ZipfFit(slope=float(slope), intercept=float(intercept), r_squared=r_squared)


def _contains(tokens: Sequence[str], phrase: Sequence[str]) -> bool:
    width = len(phrase)
    return any(list(tokens[i : i + width]) == list(phrase) for i in range(len(tokens) - width + 1))


def phrase_frequency_report(predictions: Sequence[Sequence[str]], phrase: Sequence[str]) -> tuple[int, float]:
    """
    How many predictions contain `phrase` as a contiguous run.

    Returns:
        tuple[int, float]: Count and fraction of the predictions; (0, 0.0) with no predictions.
    """
    if not predictions:
        return 0, 0.0
    count = sum(1 for tokens in predictions if _contains(tokens, phrase))
    return count, count / len(predictions)


def label_frequency(records: Iterable[CaptionRecord]) -> list[tuple[str, int]]:
    counts = Counter(record.label for record in records if record.label is not None)
    return sorted(counts.items(), key=lambda pair: (-pair[1], pair[0]))


def unigram_entropy(examples: Sequence[TrainingExample]) -> float:
    """
    Entropy in nats of the target distribution: the loss of a model that predicts target
    frequencies and ignores both the image and the prefix.
    """
    if not examples:
        raise AnalysisErrors.EMPTY_CORPUS.error()
    counts = Counter(example.target for example in examples)
    total = len(examples)
    return -math.fsum(count / total * math.log(count / total) for count in counts.values())


def write_table(rows: Iterable[tuple], header: Sequence[str], path: Path) -> None:
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        writer.writerows(rows)


def format_table(rows: Sequence[tuple], header: Sequence[str]) -> str:
    table = [list(map(str, header)), *([str(cell) for cell in row] for row in rows)]
    widths = [max(len(row[i]) for row in table) for i in range(len(header))]
    return "\n".join("  ".join(cell.ljust(width) for cell, width in zip(row, widths)).rstrip() for row in table)
