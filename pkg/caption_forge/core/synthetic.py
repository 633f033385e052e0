"""
Constructed corpora: the naive-agent corpus and topic-clustered captions with matching mock
image embeddings.
"""

import numpy as np
from pydantic import BaseModel

from caption_forge.core.dataset import CaptionRecord, Label
from caption_forge.core.decoder import BeamConfig, Candidate, beam_search
from caption_forge.core.embedding_store import EmbeddingStore, ImageEmbedding
from caption_forge.core.ngram_lm import train_ngram
from caption_forge.core.text_pipeline import Vocabulary, build_vocabulary, normalize_caption

NAIVE_AGENT_CAPTIONS = (
    "the burger",
    "the pasta",
    "the salad",
    "the fries",
    "the cake",
    "chicken and rice",
    "chicken and rice",
    "chicken and waffles",
    "pizza",
    "pizza",
)

TOPIC_WORDS: dict[Label, tuple[str, ...]] = {
    "food": ("burger", "pasta", "salad", "fries", "cake", "chicken", "rice", "waffles", "pizza", "soup"),
    "inside": ("table", "chair", "booth", "bar", "counter", "wall", "lamp", "window", "floor", "kitchen"),
    "outside": ("patio", "street", "sign", "door", "parking", "sidewalk", "tree", "umbrella", "terrace", "garden"),
    "menu": ("board", "price", "list", "specials", "prices", "drinks", "dessert", "lunch", "dinner", "breakfast"),
    "drink": ("beer", "wine", "coffee", "tea", "cocktail", "juice", "soda", "latte", "water", "martini"),
}


class NaiveAgentDemo(BaseModel):
    trace: list[str]
    population: list[str]


def naive_agent_corpus() -> list[CaptionRecord]:
    """Ten food captions whose frequent trigrams make `chicken and waffles` a beam favourite."""
    return [
        CaptionRecord(photo_id=f"naive-{i}", tokens=normalize_caption(caption), label="food")
        for i, caption in enumerate(NAIVE_AGENT_CAPTIONS)
    ]


def _describe(candidate: Candidate, vocab: Vocabulary) -> str:
    words = " ".join(vocab.token(index) for index in candidate.tokens[1:])
    state = " (finished)" if candidate.finished else ""
    return f"[{words}] {candidate.score:.4f}{state}"


def naive_agent_demo(
    beta: int = 2, kappa: int = 2, alpha: float = 0.6, order: int = 3, max_len: int = 15,
) -> NaiveAgentDemo:
    """
    Train an n-gram model on the naive-agent corpus and beam search from it.

    The model never looks at the image, so the search reproduces the corpus' frequent phrases.

    Returns:
        NaiveAgentDemo: One trace line per iteration and the final population as text.
    """
    records = naive_agent_corpus()
    vocab = build_vocabulary((record.tokens for record in records), min_frequency=1)
    model = train_ngram((record.tokens for record in records), order, vocab)

    trace: list[str] = []

    def _record(iteration: int, population: list[Candidate]) -> None:
        trace.append(f"iteration {iteration}: " + " | ".join(_describe(c, vocab) for c in population))

    config = BeamConfig(beta=beta, kappa=kappa, alpha=alpha, max_len=max_len)
    population = beam_search(model, ImageEmbedding(values=[0.0]), config, trace=_record)
    return NaiveAgentDemo(
        trace=trace,
        population=[" ".join(c.to_sequence(vocab).content()) for c in population],
    )


def topic_corpus(n_captions: int, seed: int) -> list[CaptionRecord]:
    """
    Captions of 2 to 5 words drawn from one topic each, with Zipf-like word weights.

    Args:
        n_captions: Number of records.
        seed: Generator seed.

    Returns:
        list[CaptionRecord]: Records labelled with their topic.
    """
    rng = np.random.default_rng(seed)
    topics = list(TOPIC_WORDS)
    records = []
    for i in range(n_captions):
        topic = topics[int(rng.integers(len(topics)))]
        words = TOPIC_WORDS[topic]
        weights = 1.0 / np.arange(1, len(words) + 1)
        chosen = rng.choice(len(words), size=int(rng.integers(2, 6)), p=weights / weights.sum())
        caption = " ".join(words[j] for j in chosen)
        records.append(CaptionRecord(photo_id=f"topic-{i:04d}", tokens=normalize_caption(caption), label=topic))
    return records


def topic_embeddings(records: list[CaptionRecord], dim: int, seed: int, noise: float = 0.1) -> EmbeddingStore:
    """
    Mock image embeddings that encode each record's topic.

    Args:
        records: Records labelled by `topic_corpus`.
        dim: Embedding dimension, at least the number of topics.
        seed: Noise seed.
        noise: Standard deviation of the Gaussian noise.

    Returns:
        EmbeddingStore: One-hot topic vector plus noise per photo.
    """
    rng = np.random.default_rng(seed)
    topics = list(TOPIC_WORDS)
    store = EmbeddingStore(dim)
    for record in records:
        values = rng.normal(0.0, noise, size=dim)
        values[topics.index(record.label)] += 1.0
        store.add(record.photo_id, ImageEmbedding(values=values))
    return store
