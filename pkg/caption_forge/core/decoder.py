"""
Caption generation by greedy selection and by beam search.

Beam candidates are ranked by a discounted sum of their predicted token probabilities,
`sum(omega_t * alpha ** t)`, so `alpha` close to 1 favours longer captions.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Annotated, Callable, Sequence

from pydantic import BaseModel, ConfigDict, Field, model_validator

from caption_forge.core.embedding_store import EmbeddingStore, ImageEmbedding
from caption_forge.core.scorer import Scorer, predict_next
from caption_forge.core.text_pipeline import EncodedCaption, TokenSequence, Vocabulary
from caption_forge.utils.errors import DecoderErrors

logger = logging.getLogger(__name__)

Trace = Callable[[int, list["Candidate"]], None]


class BeamConfig(BaseModel):
    """
    Settings of one beam search.

    Attributes:
        beta: Population size kept after each iteration.
        kappa: Children expanded per unfinished candidate.
        alpha: Discount of later token probabilities, in (0, 1].
        max_len: Maximum number of tokens appended after the start token.
    """

    model_config = ConfigDict(frozen=True)

    beta: Annotated[int, Field(ge=1)] = 3
    kappa: Annotated[int, Field(ge=1)] = 3
    alpha: Annotated[float, Field(gt=0.0, le=1.0)] = 0.6
    max_len: Annotated[int, Field(ge=1)] = 15


def score_candidate(omegas: Sequence[float], alpha: float) -> float:
    """
    Discounted quality of a candidate.

    Args:
        omegas: Predicted probability of every token after `<startseq>`, each in (0, 1].
        alpha: Discount in (0, 1].

    Raises:
        CaptionForgeError: If alpha or a probability is out of range.

    Returns:
        float: `sum(omega_t * alpha ** t)` with t starting at 1.
    """
    if not 0.0 < alpha <= 1.0:
        raise DecoderErrors.BAD_ALPHA.error(alpha=alpha)
    total = 0.0
    for t, omega in enumerate(omegas, start=1):
        if not 0.0 < omega <= 1.0:
            raise DecoderErrors.BAD_OMEGA.error(omega=omega)
        total += omega * alpha**t
    return total


class Candidate(BaseModel):
    """
    Partial caption in the beam population.

    Attributes:
        tokens: Vocabulary indices, opened by the start index.
        omegas: Predicted probability of every appended token.
        finished_at: Iteration that appended `<endseq>`, None while unfinished.
        score: Cached `score_candidate(omegas, alpha)`.
    """

    model_config = ConfigDict(frozen=True)

    tokens: list[int]
    omegas: list[float]
    finished_at: int | None = None
    score: float = 0.0

    @model_validator(mode="after")
    def check_omegas(self) -> "Candidate":
        if len(self.omegas) != len(self.tokens) - 1:
            raise ValueError("every token after the start token needs one probability")
        if any(not 0.0 < omega <= 1.0 for omega in self.omegas):
            raise ValueError("probabilities must lie in (0, 1]")
        return self

    @property
    def finished(self) -> bool:
        return self.finished_at is not None

    def extend(self, token: int, omega: float, alpha: float, iteration: int, end_index: int) -> "Candidate":
        omegas = [*self.omegas, omega]
        return Candidate(
            tokens=[*self.tokens, token],
            omegas=omegas,
            finished_at=iteration if token == end_index else None,
            score=score_candidate(omegas, alpha),
        )

    def to_sequence(self, vocab: Vocabulary) -> TokenSequence:
        return TokenSequence(tokens=[vocab.token(index) for index in self.tokens])


class Caption(BaseModel):
    """Best caption of one image."""

    tokens: TokenSequence
    score: float
    omegas: list[float]

    @property
    def text(self) -> str:
        return " ".join(self.tokens.content())


def _rank(candidate: Candidate) -> tuple:
    finished_at = candidate.finished_at if candidate.finished_at is not None else float("inf")
    return (-candidate.score, finished_at, candidate.tokens)


def _as_prefix(tokens: list[int], max_len: int) -> EncodedCaption:
    width = max(max_len + 1, len(tokens))
    return EncodedCaption(indices=tokens + [0] * (width - len(tokens)), true_length=len(tokens))


def greedy_select(scorer: Scorer, embedding: ImageEmbedding, max_len: int) -> TokenSequence:
    """
    Append the most probable token until `<endseq>` or `max_len` appended tokens.

    Args:
        scorer: Next-token model.
        embedding: Image embedding.
        max_len: Maximum number of tokens after `<startseq>`.

    Returns:
        TokenSequence: Generated caption with markers.
    """
    vocab = scorer.vocab
    tokens = [vocab.start_index]
    while len(tokens) - 1 < max_len:
        distribution = predict_next(scorer, embedding, _as_prefix(tokens, max_len))
        token = distribution.top(1)[0]
        tokens.append(token)
        if token == vocab.end_index:
            break
    return TokenSequence(tokens=[vocab.token(index) for index in tokens])


def beam_search(
    scorer: Scorer, embedding: ImageEmbedding, config: BeamConfig, trace: Trace | None = None,
) -> list[Candidate]:
    """
    Beam search over captions.

    Every unfinished candidate is expanded by its `kappa` most probable next tokens; finished
    candidates stay in the population and compete with the children for the `beta` places.

    Args:
        scorer: Next-token model.
        embedding: Image embedding.
        config: Beam width, neighbourhood size, discount and length cap.
        trace: Called with the iteration number and the truncated population after every
            iteration.

    Returns:
        list[Candidate]: Final population, best first; ties go to the earlier finisher, then
        to the lexicographically smaller index sequence.
    """
    vocab = scorer.vocab
    kappa = config.kappa
    n_emittable = len(vocab.emittable())
    if kappa > n_emittable:
        logger.warning("Neighbourhood size %d exceeds the %d emittable tokens; clamping", kappa, n_emittable)
        kappa = n_emittable

    population = [Candidate(tokens=[vocab.start_index], omegas=[])]
    for iteration in range(1, config.max_len + 1):
        if all(candidate.finished for candidate in population):
            break
        pool: list[Candidate] = []
        for candidate in population:
            if candidate.finished:
                pool.append(candidate)
                continue
            distribution = predict_next(scorer, embedding, _as_prefix(candidate.tokens, config.max_len))
            for token in distribution.top(kappa):
                omega = distribution[token]
                if omega <= 0.0:
                    continue
                pool.append(candidate.extend(token, omega, config.alpha, iteration, vocab.end_index))
        population = sorted(pool, key=_rank)[: config.beta]
        if trace is not None:
            trace(iteration, population)
    return sorted(population, key=_rank)


def caption_image(scorer: Scorer, embedding: ImageEmbedding, config: BeamConfig) -> Caption:
    best = beam_search(scorer, embedding, config)[0]
    return Caption(tokens=best.to_sequence(scorer.vocab), score=best.score, omegas=best.omegas)


def caption_store(
    scorer: Scorer,
    store: EmbeddingStore,
    photo_ids: Sequence[str],
    config: BeamConfig,
    jobs: int = 1,
) -> list[Caption]:
    """
    Caption many images, optionally on a thread pool.

    Args:
        scorer: Next-token model.
        store: Embeddings to caption.
        photo_ids: Photos to caption, in output order.
        config: Beam settings.
        jobs: Worker threads.

    Returns:
        list[Caption]: One caption per photo id, in input order.
    """
    def _caption(photo_id: str) -> Caption:
        return caption_image(scorer, store.get(photo_id), config)

    if jobs <= 1:
        return [_caption(photo_id) for photo_id in photo_ids]
    with ThreadPoolExecutor(max_workers=jobs) as executor:
        return list(executor.map(_caption, photo_ids))
