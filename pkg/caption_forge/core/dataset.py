"""
Train/validation split and expansion of captions into next-token examples.

A caption of encoded length L becomes L - 1 examples: the t-th example sees the first t
tokens (padded) and predicts token t + 1.
"""

import logging
import math
import struct
from pathlib import Path
from typing import Annotated, Iterable, Literal, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from caption_forge.core.text_pipeline import (
    NULL,
    RESERVED,
    START,
    EncodedCaption,
    TokenSequence,
    Vocabulary,
    encode,
)
from caption_forge.utils.errors import DatasetErrors

logger = logging.getLogger(__name__)

NULL_INDEX = RESERVED.index(NULL)
START_INDEX = RESERVED.index(START)

CACHE_MAGIC = b"NICD"
CACHE_VERSION = 1
CACHE_HEADER = struct.Struct("<4sBHQ")

Label = Literal["food", "inside", "outside", "menu", "drink"]


class CaptionRecord(BaseModel):
    """One photo with its normalized caption."""

    model_config = ConfigDict(frozen=True)

    photo_id: Annotated[str, Field(min_length=1)]
    tokens: TokenSequence
    label: Label | None = None


class TrainingExample(BaseModel):
    """Covariates (photo, prefix) and response (target index) of one next-token prediction."""

    model_config = ConfigDict(frozen=True)

    photo_id: Annotated[str, Field(min_length=1)]
    prefix: EncodedCaption
    target: Annotated[int, Field(ge=0)]

    @model_validator(mode="after")
    def check_roles(self) -> "TrainingExample":
        if self.prefix.true_length < 1 or self.prefix.indices[0] != START_INDEX:
            raise ValueError("prefix must open with the start token")
        if self.target in (START_INDEX, NULL_INDEX):
            raise ValueError("start and padding tokens are never targets")
        return self


class ExpansionSummary(BaseModel):
    """Number of captions expanded and examples produced."""

    captions: int
    examples: int

    @property
    def ratio(self) -> float:
        return self.examples / self.captions if self.captions else 0.0


class ExampleTable:
    """
    Column arrays of an expanded dataset, the shape training consumes.

    Args:
        examples: Expanded examples, all encoded to the same length.
    """

    def __init__(self, examples: Sequence[TrainingExample]) -> None:
        self.photo_ids = [example.photo_id for example in examples]
        width = examples[0].prefix.max_len if examples else 0
        self.prefixes = np.array(
            [example.prefix.indices for example in examples], dtype=np.int64,
        ).reshape(len(examples), width)
        self.lengths = np.array([example.prefix.true_length for example in examples], dtype=np.int64)
        self.targets = np.array([example.target for example in examples], dtype=np.int64)

    def __len__(self) -> int:
        return len(self.photo_ids)


def split(
    records: Sequence[CaptionRecord], validation_fraction: float, seed: int,
) -> tuple[list[CaptionRecord], list[CaptionRecord]]:
    """
    Randomly partition records before expansion.

    The validation share is rounded up, so 100,807 records at 0.2 give 20,162 validation
    records.

    Args:
        records: Caption records.
        validation_fraction: Share of records held out, in (0, 1).
        seed: Permutation seed.

    Raises:
        CaptionForgeError: If records are empty or the fraction is out of range.

    Returns:
        tuple[list[CaptionRecord], list[CaptionRecord]]: Train and validation records, each in
        input order.
    """
    if not records:
        raise DatasetErrors.EMPTY_INPUT.error()
    if not 0.0 < validation_fraction < 1.0:
        raise DatasetErrors.BAD_FRACTION.error(fraction=validation_fraction)

    n_validation = math.ceil(validation_fraction * len(records) - 1e-9)
    order = np.random.default_rng(seed).permutation(len(records))
    held_out = set(order[:n_validation].tolist())
    train = [record for i, record in enumerate(records) if i not in held_out]
    validation = [record for i, record in enumerate(records) if i in held_out]
    return train, validation


def expand(record: CaptionRecord, vocab: Vocabulary, max_len: int) -> list[TrainingExample]:
    """
    Expand one caption into its next-token examples.

    Args:
        record: Caption record.
        vocab: Vocabulary for encoding.
        max_len: Encoded caption length; longer captions are truncated.

    Returns:
        list[TrainingExample]: `true_length - 1` examples, empty for degenerate captions.
    """
    encoded = encode(record.tokens, vocab, max_len)
    if encoded.true_length < 2:
        logger.debug("Caption of %s is too short to expand", record.photo_id)
        return []

    examples = []
    for t in range(1, encoded.true_length):
        prefix = EncodedCaption(
            indices=encoded.indices[:t] + [NULL_INDEX] * (max_len - t), true_length=t,
        )
        examples.append(
            TrainingExample(photo_id=record.photo_id, prefix=prefix, target=encoded.indices[t]),
        )
    return examples


def expand_all(
    records: Iterable[CaptionRecord], vocab: Vocabulary, max_len: int,
) -> list[TrainingExample]:
    """
    Expand every record, keeping record order.

    Args:
        records: Caption records.
        vocab: Vocabulary for encoding.
        max_len: Encoded caption length.

    Returns:
        list[TrainingExample]: Concatenated examples.
    """
    examples: list[TrainingExample] = []
    captions = 0
    for record in records:
        examples.extend(expand(record, vocab, max_len))
        captions += 1

    summary = ExpansionSummary(captions=captions, examples=len(examples))
    logger.info(
        "Expanded %d captions into %d examples (%.2f per caption)",
        summary.captions, summary.examples, summary.ratio,
    )
    return examples


def expansion_summary(records: Sequence[CaptionRecord], examples: Sequence[TrainingExample]) -> ExpansionSummary:
    """
    Summarize an expansion for reporting.

    Args:
        records: Expanded records.
        examples: Examples they produced.

    Returns:
        ExpansionSummary: Counts and their ratio.
    """
    return ExpansionSummary(captions=len(records), examples=len(examples))


def save_examples(examples: Sequence[TrainingExample], max_len: int, path: Path) -> None:
    """
    Write expanded examples to the `NICD` cache format.

    Args:
        examples: Examples encoded to `max_len`.
        max_len: Prefix length stored in the header.
        path: Destination file.
    """
    row = struct.Struct(f"<H{max_len}II")
    with path.open("wb") as handle:
        handle.write(CACHE_HEADER.pack(CACHE_MAGIC, CACHE_VERSION, max_len, len(examples)))
        for example in examples:
            encoded = example.photo_id.encode("utf-8")
            handle.write(struct.pack("<H", len(encoded)))
            handle.write(encoded)
            handle.write(row.pack(example.prefix.true_length, *example.prefix.indices, example.target))


def load_examples(path: Path) -> list[TrainingExample]:
    """
    Read examples written by `save_examples`.

    Args:
        path: Cache file.

    Raises:
        CaptionForgeError: If the header is wrong, a photo id is not UTF-8 or the file is cut short.

    Returns:
        list[TrainingExample]: The cached examples.
    """
    data = path.read_bytes()
    if len(data) < CACHE_HEADER.size or data[:4] != CACHE_MAGIC:
        raise DatasetErrors.BAD_CACHE.error(path=path, problem="bad magic bytes")
    _, version, max_len, count = CACHE_HEADER.unpack_from(data, 0)
    if version != CACHE_VERSION:
        raise DatasetErrors.BAD_CACHE.error(path=path, problem=f"version {version}")

    row = struct.Struct(f"<H{max_len}II")
    offset = CACHE_HEADER.size
    examples = []
    try:
        for _ in range(count):
            (id_length,) = struct.unpack_from("<H", data, offset)
            offset += 2
            photo_id = data[offset : offset + id_length].decode("utf-8")
            offset += id_length
            true_length, *indices, target = row.unpack_from(data, offset)
            offset += row.size
            examples.append(
                TrainingExample(
                    photo_id=photo_id,
                    prefix=EncodedCaption(indices=indices, true_length=true_length),
                    target=target,
                ),
            )
    except struct.error as exc:
        raise DatasetErrors.BAD_CACHE.error(path=path, problem="file is truncated") from exc
    except UnicodeDecodeError as exc:
        raise DatasetErrors.BAD_CACHE.error(path=path, problem="photo id is not valid UTF-8") from exc
    return examples
