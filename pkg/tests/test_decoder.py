"""Test suite for greedy selection, beam search and candidate scoring."""

import itertools
import logging

import numpy as np
import pytest

from caption_forge.core.decoder import (
    BeamConfig,
    Candidate,
    beam_search,
    caption_image,
    caption_store,
    greedy_select,
    score_candidate,
)
from caption_forge.core.embedding_store import EmbeddingStore, ImageEmbedding, mock_embed
from caption_forge.core.scorer import NextTokenDistribution
from caption_forge.core.synthetic import naive_agent_demo
from caption_forge.core.text_pipeline import END, START, EncodedCaption, Vocabulary
from caption_forge.utils.errors import CaptionForgeError

from conftest import ForcedScorer, TableScorer, make_vocab


class StopOrContinueScorer:
    """
    Two-way scorer: `<endseq>` with the probability stored in the first embedding value, `a` otherwise.

    Args:
        vocab: Vocabulary holding `a`.
    """

    def __init__(self, vocab: Vocabulary) -> None:
        self.vocab = vocab

    def predict_next(self, embedding: ImageEmbedding, prefix: EncodedCaption) -> NextTokenDistribution:
        stop = float(embedding.values[0])
        probabilities = np.zeros(self.vocab.size)
        probabilities[self.vocab.end_index] = stop
        probabilities[self.vocab.index("a")] = 1.0 - stop
        return NextTokenDistribution(probabilities=probabilities)


def brute_force_best(scorer: TableScorer, embedding: ImageEmbedding, alpha: float, max_len: int) -> list[int]:
    """
    Best caption by exhaustive enumeration, ranked like the beam.

    Args:
        scorer: Next-token model.
        embedding: Image embedding.
        alpha: Discount.
        max_len: Maximum number of appended tokens.

    Returns:
        list[int]: Token indices of the best caption.
    """
    vocab = scorer.vocab
    words = [index for index in vocab.emittable() if index != vocab.end_index]
    ranked = []
    for length in range(max_len + 1):
        for body in itertools.product(words, repeat=length):
            endings = [[vocab.end_index]] if length < max_len else [[]]
            for ending in endings:
                tokens = [vocab.start_index, *body, *ending]
                omegas = []
                for step in range(1, len(tokens)):
                    prefix = EncodedCaption(
                        indices=tokens[:step] + [0] * (max_len + 1 - step), true_length=step,
                    )
                    omegas.append(scorer.predict_next(embedding, prefix)[tokens[step]])
                finished_at = len(tokens) - 1 if ending else float("inf")
                ranked.append((-score_candidate(omegas, alpha), finished_at, tokens))
    return min(ranked)[2]


def test_score_candidate_hand_value() -> None:
    """Test the discounted score of a two-token caption and of an empty one."""
    assert score_candidate([0.9, 0.8], 0.6) == pytest.approx(0.828, abs=1e-12)
    assert score_candidate([], 0.6) == 0.0


def test_score_increases_with_alpha() -> None:
    """Test that a larger discount always raises the score of the same probabilities."""
    rng = np.random.default_rng(0)
    for _ in range(1000):
        omegas = rng.uniform(1e-6, 1.0, size=int(rng.integers(1, 16))).tolist()
        low, high = sorted(rng.uniform(0.01, 1.0, size=2))
        if low < high:
            assert score_candidate(omegas, low) < score_candidate(omegas, high)


@pytest.mark.parametrize("alpha", [0.0, -0.5, 1.5])
def test_score_rejects_bad_alpha(alpha: float) -> None:
    """
    Test discounts outside (0, 1].

    Args:
        alpha: Invalid discount.
    """
    with pytest.raises(CaptionForgeError) as exc:
        score_candidate([0.5], alpha)
    assert exc.value.reason == "BAD_ALPHA"


def test_score_rejects_bad_probability() -> None:
    """Test that a zero probability is rejected."""
    with pytest.raises(CaptionForgeError) as exc:
        score_candidate([0.5, 0.0], 0.6)
    assert exc.value.reason == "BAD_OMEGA"


def test_candidate_extension() -> None:
    """Test that extending a candidate records the end position and the running score."""
    root = Candidate(tokens=[1], omegas=[])
    child = root.extend(4, 0.9, 0.6, 1, end_index=2).extend(2, 0.8, 0.6, 2, end_index=2)

    assert child.tokens == [1, 4, 2]
    assert child.finished_at == 2
    assert child.score == pytest.approx(0.828)
    assert not root.finished
    with pytest.raises(ValueError):
        Candidate(tokens=[1, 4], omegas=[])


def test_greedy_follows_a_forced_path(embedding: ImageEmbedding) -> None:
    """
    Test greedy decoding on certain paths, including the length cap.

    Args:
        embedding: Image embedding fixture.
    """
    vocab = make_vocab("a", "b")
    a, b = vocab.index("a"), vocab.index("b")

    assert greedy_select(ForcedScorer(vocab, [a, b, a]), embedding, 15).tokens == [START, "a", "b", "a", END]
    assert greedy_select(ForcedScorer(vocab, []), embedding, 15).tokens == [START, END]
    assert greedy_select(ForcedScorer(vocab, [a] * 10), embedding, 3).tokens == [START, "a", "a", "a"]


def test_beam_of_one_is_greedy(embedding: ImageEmbedding) -> None:
    """
    Test that a beam of width one matches greedy decoding on 100 random models.

    Args:
        embedding: Image embedding fixture.
    """
    vocab = make_vocab("a", "b", "c", "d")
    for seed in range(100):
        scorer = TableScorer(vocab, seed=seed)
        greedy = greedy_select(scorer, embedding, 6)
        beam = beam_search(scorer, embedding, BeamConfig(beta=1, kappa=1, max_len=6))

        assert beam[0].to_sequence(vocab) == greedy


def test_exhaustive_beam_matches_brute_force(embedding: ImageEmbedding) -> None:
    """
    Test that a beam wide enough to keep every candidate returns the enumerated optimum.

    Args:
        embedding: Image embedding fixture.
    """
    rng = np.random.default_rng(42)
    for seed in range(60):
        vocab = make_vocab(*["a", "b", "c"][: int(rng.integers(1, 4))])
        max_len = int(rng.integers(1, 5))
        alpha = float(rng.uniform(0.1, 1.0))
        scorer = TableScorer(vocab, seed=seed, sharpness=float(rng.uniform(0.5, 3.0)))
        config = BeamConfig(beta=1000, kappa=len(vocab.emittable()), alpha=alpha, max_len=max_len)

        assert beam_search(scorer, embedding, config)[0].tokens == brute_force_best(
            scorer, embedding, alpha, max_len,
        )


def test_population_is_bounded_and_sorted(embedding: ImageEmbedding) -> None:
    """
    Test that no iteration keeps more than beta candidates and the result is sorted by score.

    Args:
        embedding: Image embedding fixture.
    """
    vocab = make_vocab("a", "b", "c", "d", "e")
    widths = []

    def _trace(iteration: int, population: list[Candidate]) -> None:
        widths.append(len(population))

    population = beam_search(TableScorer(vocab, seed=5), embedding, BeamConfig(beta=4, kappa=3, max_len=6), _trace)

    assert len(population) <= 4
    assert max(widths) <= 4
    assert [candidate.score for candidate in population] == sorted(
        (candidate.score for candidate in population), reverse=True,
    )
    for candidate in population:
        assert len(candidate.tokens) - 1 <= 6
        assert candidate.tokens[0] == vocab.start_index


def test_zero_probability_tokens_are_never_appended(embedding: ImageEmbedding) -> None:
    """
    Test that only tokens with positive probability spawn children.

    Args:
        embedding: Image embedding fixture.
    """
    vocab = make_vocab("a", "b")
    a = vocab.index("a")
    population = beam_search(ForcedScorer(vocab, [a, a]), embedding, BeamConfig(beta=5, kappa=4))

    assert [candidate.tokens for candidate in population] == [[vocab.start_index, a, a, vocab.end_index]]


def test_kappa_is_clamped(embedding: ImageEmbedding, caplog: pytest.LogCaptureFixture) -> None:
    """
    Test that kappa above the emittable vocabulary is clamped with a warning.

    Args:
        embedding: Image embedding fixture.
        caplog: Pytest log capture fixture.
    """
    vocab = make_vocab("a")
    with caplog.at_level(logging.WARNING, logger="caption_forge.core.decoder"):
        population = beam_search(TableScorer(vocab, seed=1), embedding, BeamConfig(beta=10, kappa=10, max_len=2))

    assert "clamping" in caplog.text
    assert population


def test_naive_agent_demo() -> None:
    """Test that the image-blind beam ends on chicken and waffles with the expected trace."""
    demo = naive_agent_demo()

    assert "chicken and waffles" in demo.population
    assert demo.population == ["chicken and rice", "chicken and waffles"]
    assert demo.trace[0] == "iteration 1: [the] 0.3000 | [chicken] 0.1800"
    assert len(demo.trace) == 4
    assert demo.trace[-1].endswith("(finished)")


def test_longer_captions_with_larger_alpha() -> None:
    """Test that the mean caption length over 120 images does not fall as alpha grows."""
    vocab = make_vocab("a")
    scorer = StopOrContinueScorer(vocab)
    rng = np.random.default_rng(7)
    embeddings = [ImageEmbedding(values=[stop, 0.0]) for stop in rng.uniform(0.3, 0.95, size=120)]

    means = []
    for alpha in (0.6, 0.7, 0.8):
        config = BeamConfig(beta=20, kappa=2, alpha=alpha, max_len=15)
        lengths = [len(caption_image(scorer, embedding, config).tokens.content()) for embedding in embeddings]
        means.append(np.mean(lengths))

    assert means == sorted(means)
    assert means[-1] > means[0]


def test_caption_store_keeps_order() -> None:
    """Test that threaded captioning returns the same captions in photo order."""
    vocab = make_vocab("a", "b", "c")
    store = EmbeddingStore(8)
    for i in range(6):
        store.add(f"photo-{i}", mock_embed(f"photo-{i}", 8, seed=0))
    scorer = ForcedScorer(vocab, [vocab.index("b"), vocab.index("c")])
    ids = list(reversed(store.photo_ids()))

    sequential = caption_store(scorer, store, ids, BeamConfig(), jobs=1)
    threaded = caption_store(scorer, store, ids, BeamConfig(), jobs=3)

    assert sequential == threaded
    assert [caption.text for caption in threaded] == ["b c"] * 6
    assert threaded[0].omegas == [1.0, 1.0, 1.0]
