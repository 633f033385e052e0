"""Test suite for corpus statistics and the Zipf fit."""

import math
from pathlib import Path

import pytest

from caption_forge.core.analysis import (
    format_table,
    label_frequency,
    phrase_frequency_report,
    term_frequency,
    unigram_entropy,
    write_table,
    zipf_fit,
)
from caption_forge.core.dataset import CaptionRecord, expand_all
from caption_forge.core.text_pipeline import build_vocabulary
from caption_forge.utils.errors import CaptionForgeError


def test_zipf_fit_on_exact_power_law() -> None:
    """Test that counts proportional to 1/rank give a slope of -1."""
    fit = zipf_fit([round(10_000 / rank) for rank in range(1, 101)])

    assert fit.slope == pytest.approx(-1.0, abs=0.01)
    assert fit.r_squared > 0.99


def test_zipf_fit_on_constant_counts() -> None:
    """Test a flat frequency table: zero slope and a perfect fit."""
    fit = zipf_fit([7, 7, 7, 7])

    assert fit.slope == pytest.approx(0.0, abs=1e-12)
    assert fit.intercept == pytest.approx(math.log(7))
    assert fit.r_squared == 1.0


def test_zipf_fit_needs_three_ranks() -> None:
    """Test that two ranks are too few for a fit."""
    with pytest.raises(CaptionForgeError) as exc:
        zipf_fit([5, 3])
    assert exc.value.reason == "TOO_FEW_POINTS"


def test_term_frequency(naive_records: list[CaptionRecord]) -> None:
    """
    Test ranked token counts of the naive-agent corpus without the caption markers.

    Args:
        naive_records: The naive-agent caption records.
    """
    table = term_frequency(record.tokens for record in naive_records)

    assert table[:5] == [("the", 5), ("and", 3), ("chicken", 3), ("pizza", 2), ("rice", 2)]
    assert sum(count for _, count in table) == 5 * 2 + 3 * 3 + 2
    assert "<startseq>" not in dict(table)

    with pytest.raises(CaptionForgeError) as exc:
        term_frequency([])
    assert exc.value.reason == "EMPTY_CORPUS"


@pytest.mark.parametrize(
    ("predictions", "expected"),
    [
        ([["chicken", "and", "waffles"], ["chicken", "and", "rice"]], (1, 0.5)),
        ([["waffles", "and", "chicken"]], (0, 0.0)),
        ([["fried", "chicken", "and", "waffles", "today"]], (1, 1.0)),
        ([], (0, 0.0)),
    ],
)
def test_phrase_frequency_report(predictions: list[list[str]], expected: tuple[int, float]) -> None:
    """
    Test contiguous phrase matching.

    Args:
        predictions: Predicted captions as token lists.
        expected: Count and fraction.
    """
    assert phrase_frequency_report(predictions, ["chicken", "and", "waffles"]) == expected


def test_label_frequency(naive_records: list[CaptionRecord]) -> None:
    """
    Test that unlabelled records are left out of the label counts.

    Args:
        naive_records: The naive-agent caption records.
    """
    unlabelled = CaptionRecord(photo_id="x", tokens=naive_records[0].tokens)

    assert label_frequency([*naive_records, unlabelled]) == [("food", 10)]


def test_unigram_entropy(naive_records: list[CaptionRecord]) -> None:
    """
    Test the entropy of the target distribution against a uniform case and its bounds.

    Args:
        naive_records: The naive-agent caption records.
    """
    vocab = build_vocabulary((record.tokens for record in naive_records), 1)
    examples = expand_all(naive_records, vocab, 15)
    uniform = [example.model_copy(update={"target": 4 + i % 4}) for i, example in enumerate(examples[:8])]

    assert unigram_entropy(uniform) == pytest.approx(math.log(4))
    assert 0.0 < unigram_entropy(examples) < math.log(vocab.size)
    with pytest.raises(CaptionForgeError):
        unigram_entropy([])


def test_tables(tmp_path: Path) -> None:
    """
    Test the CSV writer and the aligned text table.

    Args:
        tmp_path: Temporary directory provided by pytest.
    """
    rows = [("the", 5), ("chicken", 3)]
    path = tmp_path / "terms.csv"
    write_table(rows, ["term", "count"], path)

    assert path.read_text().splitlines() == ["term,count", "the,5", "chicken,3"]
    assert format_table(rows, ["term", "count"]).splitlines() == [
        "term     count",
        "the      5",
        "chicken  3",
    ]
