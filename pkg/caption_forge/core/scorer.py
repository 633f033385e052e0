"""Next-token prediction contract shared by the n-gram and neural caption models."""

from typing import Protocol, runtime_checkable

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator

from caption_forge.core.dataset import NULL_INDEX, START_INDEX
from caption_forge.core.embedding_store import ImageEmbedding
from caption_forge.core.text_pipeline import EncodedCaption, Vocabulary
from caption_forge.utils.errors import ScorerErrors

MASKED = (NULL_INDEX, START_INDEX)


class NextTokenDistribution(BaseModel):
    """Probability of every vocabulary entry being the next token."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    probabilities: np.ndarray

    @field_validator("probabilities", mode="before")
    @classmethod
    def check_probabilities(cls, probabilities: np.ndarray) -> np.ndarray:
        probabilities = np.array(probabilities, dtype=np.float64)
        if probabilities.ndim != 1:
            raise ValueError("distribution must be a vector")
        if np.any(probabilities < 0.0) or abs(probabilities.sum() - 1.0) > 1e-6:
            raise ValueError("distribution must be non-negative and sum to 1")
        if any(probabilities[index] != 0.0 for index in MASKED):
            raise ValueError("padding and start tokens must have probability 0")
        probabilities.setflags(write=False)
        return probabilities

    def top(self, k: int) -> list[int]:
        """Indices of the `k` most probable tokens, lowest index first among ties."""
        return np.argsort(-self.probabilities, kind="stable")[:k].tolist()

    def __getitem__(self, index: int) -> float:
        return float(self.probabilities[index])


@runtime_checkable
class Scorer(Protocol):
    """Anything that predicts P(next token | prefix, image)."""

    vocab: Vocabulary

    def predict_next(
        self, embedding: ImageEmbedding, prefix: EncodedCaption,
    ) -> NextTokenDistribution: ...


def masked_softmax(logits: np.ndarray) -> np.ndarray:
    """
    Row-wise softmax with the padding and start columns forced to probability 0.

    Args:
        logits: Matrix of shape (batch, V).

    Returns:
        np.ndarray: Probabilities of the same shape.
    """
    logits = logits.copy()
    logits[:, list(MASKED)] = -np.inf
    logits -= logits.max(axis=1, keepdims=True)
    exp = np.exp(logits)
    return exp / exp.sum(axis=1, keepdims=True)


def predict_next(
    model: Scorer, embedding: ImageEmbedding, prefix: EncodedCaption,
) -> NextTokenDistribution:
    """
    Ask a scorer for the next-token distribution.

    Args:
        model: Any scorer.
        embedding: Image embedding; n-gram scorers ignore it.
        prefix: Encoded caption prefix holding at least the start token.

    Raises:
        CaptionForgeError: If the prefix is empty or the embedding does not fit the model.

    Returns:
        NextTokenDistribution: Valid distribution over the vocabulary.
    """
    if prefix.true_length < 1:
        raise ScorerErrors.EMPTY_PREFIX.error()
    return model.predict_next(embedding, prefix)
