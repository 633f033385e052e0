"""Test setup, fixtures and helper scorers for the caption toolkit."""

from pathlib import Path

import numpy as np
import pytest
import rstr
from faker import Faker
from faker.providers import BaseProvider

from caption_forge.core.dataset import CaptionRecord
from caption_forge.core.embedding_store import ImageEmbedding
from caption_forge.core.scorer import NextTokenDistribution, masked_softmax
from caption_forge.core.synthetic import naive_agent_corpus
from caption_forge.core.text_pipeline import (
    EncodedCaption,
    TokenSequence,
    Vocabulary,
    build_vocabulary,
    normalize_caption,
)
from caption_forge.utils.io import RawCaption, write_jsonl


class RegexGeneratorProvider(BaseProvider):
    """Provider for generating random strings based on regular expressions."""

    def generate_regex(self, pattern: str) -> str:
        """
        Generate a random string that matches the given regex pattern.

        Args:
            pattern: The regex pattern to generate a random string.

        Returns:
            str: A random string that matches the specified regex pattern.
        """
        return rstr.xeger(pattern)

    def caption_word(self) -> str:
        return self.generate_regex("^[a-z]{3,10}$")

    def website(self) -> str:
        """
        Generate a website domain with digits in it.

        Returns:
            str: A string that matches the pattern '^[a-z]{2,8}[0-9]{1,3}\\.(com|org|net)$'.
        """
        return self.generate_regex(r"^[a-z]{2,8}[0-9]{1,3}\.(com|org|net)$")

    def photo_id(self) -> str:
        return self.generate_regex("^[A-Za-z0-9_-]{22}$")


@pytest.fixture(scope="session", autouse=True)
def _setup_faker(faker: Faker) -> None:
    """
    Fixture to set up Faker with additional providers.

    Args:
        faker (Faker): Instance of Faker provided by pytest.
    """
    faker.add_provider(RegexGeneratorProvider)


@pytest.fixture(scope="session")
def faker(_session_faker: Faker) -> Faker:
    """
    Fixture to provide a session-scoped Faker instance.

    Args:
        _session_faker: Instance of Faker provided by pytest.

    Returns:
        Faker: Session-scoped instance of Faker.
    """
    return _session_faker


def make_vocab(*words: str) -> Vocabulary:
    """Vocabulary holding the reserved tokens plus `words`, in the given order."""
    captions = [TokenSequence(tokens=["<startseq>", *words[: i + 1], "<endseq>"]) for i in range(len(words))]
    return build_vocabulary(captions or [TokenSequence(tokens=["<startseq>", "<endseq>"])], 1)


def prefix_of(tokens: list[int], width: int = 16) -> EncodedCaption:
    """Encode raw token indices as a padded prefix."""
    return EncodedCaption(indices=tokens + [0] * (width - len(tokens)), true_length=len(tokens))


class TableScorer:
    """
    Random next-token model: the distribution is a seeded pure function of the prefix.

    Args:
        vocab: Vocabulary of the distribution.
        seed: Seed mixed with the prefix indices.
        sharpness: Scale of the random logits.
    """

    def __init__(self, vocab: Vocabulary, seed: int, sharpness: float = 2.0) -> None:
        self.vocab = vocab
        self.seed = seed
        self.sharpness = sharpness

    def predict_next(self, embedding: ImageEmbedding, prefix: EncodedCaption) -> NextTokenDistribution:
        rng = np.random.default_rng([self.seed, *prefix.prefix()])
        logits = rng.normal(size=(1, self.vocab.size)) * self.sharpness
        return NextTokenDistribution(probabilities=masked_softmax(logits)[0])


class ForcedScorer:
    """
    Scorer that predicts a fixed token sequence with probability 1, then `<endseq>`.

    Args:
        vocab: Vocabulary of the distribution.
        path: Token indices emitted one per step.
    """

    def __init__(self, vocab: Vocabulary, path: list[int]) -> None:
        self.vocab = vocab
        self.path = path

    def predict_next(self, embedding: ImageEmbedding, prefix: EncodedCaption) -> NextTokenDistribution:
        step = prefix.true_length - 1
        token = self.path[step] if step < len(self.path) else self.vocab.end_index
        probabilities = np.zeros(self.vocab.size)
        probabilities[token] = 1.0
        return NextTokenDistribution(probabilities=probabilities)


def write_captions(path: Path, records: list[tuple[str, str, str | None]]) -> None:
    """
    Write raw captions as JSON-lines.

    Args:
        path: Destination file.
        records: (photo_id, caption, label) triples.
    """
    write_jsonl((RawCaption(photo_id=p, caption=c, label=label) for p, c, label in records), path)


@pytest.fixture()
def embedding() -> ImageEmbedding:
    return ImageEmbedding(values=np.linspace(0.0, 1.0, 8))


@pytest.fixture(scope="session")
def naive_records() -> list[CaptionRecord]:
    return naive_agent_corpus()


@pytest.fixture()
def raw_captions(faker: Faker) -> list[tuple[str, str, str | None]]:
    """
    Fixture to generate a small raw caption corpus.

    Args:
        faker: Instance of Faker provided by pytest.

    Returns:
        list[tuple[str, str, str | None]]: (photo_id, caption, label) triples.
    """
    labels = ["food", "inside", "outside", "menu", "drink", None]
    return [
        (
            faker.unique.photo_id(),
            " ".join(faker.caption_word() for _ in range(faker.random_int(1, 6))),
            labels[i % len(labels)],
        )
        for i in range(30)
    ]


def normalized(text: str) -> list[str]:
    return normalize_caption(text).tokens
