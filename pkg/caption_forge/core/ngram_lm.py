"""
Maximum-likelihood n-gram caption model backing off to shorter contexts.

The model ignores the image entirely: it is the naive agent that reproduces frequent
caption n-grams such as `chicken and waffles` whatever the photo shows.
"""

from collections import Counter
from fractions import Fraction
from pathlib import Path
from typing import Iterable

import numpy as np

from caption_forge.core.embedding_store import ImageEmbedding
from caption_forge.core.scorer import NextTokenDistribution
from caption_forge.core.text_pipeline import END, EncodedCaption, TokenSequence, Vocabulary
from caption_forge.utils.errors import AnalysisErrors, CorpusErrors, ModelErrors

NGRAM_HEADER = "NGRAM v1"

Context = tuple[int, ...]


class NgramModel:
    """
    Counts of (context, next token) pairs for every context length 0..n-1.

    Args:
        n: Context order plus one (3 for a trigram model).
        vocab: Vocabulary the indices refer to.
        counts: Map from context to next-token counts.
    """

    def __init__(self, n: int, vocab: Vocabulary, counts: dict[Context, Counter[int]]) -> None:
        self.n = n
        self.vocab = vocab
        self.counts = counts

    def context_count(self, context: Context) -> int:
        return sum(self.counts.get(context, Counter()).values())

    def probability(self, context: Context, token: int) -> Fraction:
        """Exact MLE probability of `token` after `context`, 0 for unseen contexts."""
        total = self.context_count(context)
        if total == 0:
            return Fraction(0)
        return Fraction(self.counts[context][token], total)

    def _distribution(self, context: Context) -> np.ndarray:
        counter = self.counts[context]
        total = sum(counter.values())
        probabilities = np.zeros(self.vocab.size)
        for token, count in counter.items():
            probabilities[token] = count / total
        return probabilities

    def predict_next(
        self, embedding: ImageEmbedding | None, prefix: EncodedCaption,
    ) -> NextTokenDistribution:
        """
        Distribution after the longest trailing context seen in training.

        Args:
            embedding: Ignored.
            prefix: Encoded caption prefix.

        Returns:
            NextTokenDistribution: Backed-off MLE distribution, uniform over emittable tokens
            if even the empty context is unseen.
        """
        tokens = prefix.prefix()
        for order in range(min(self.n - 1, len(tokens)), -1, -1):
            context = tuple(tokens[len(tokens) - order :])
            if self.context_count(context) > 0:
                return NextTokenDistribution(probabilities=self._distribution(context))

        emittable = self.vocab.emittable()
        probabilities = np.zeros(self.vocab.size)
        probabilities[emittable] = 1.0 / len(emittable)
        return NextTokenDistribution(probabilities=probabilities)


def train_ngram(captions: Iterable[TokenSequence], n: int, vocab: Vocabulary) -> NgramModel:
    """
    Count every (context, next token) pair of the corpus.

    `<startseq>` anchors contexts and is never counted as a next token.

    Args:
        captions: Normalized captions.
        n: Model order, at least 1.
        vocab: Vocabulary for indexing; unknown tokens count as `<unk>`.

    Raises:
        CaptionForgeError: If n < 1 or the corpus is empty.

    Returns:
        NgramModel: The trained model.
    """
    if n < 1:
        raise ModelErrors.BAD_ORDER.error(n=n)

    counts: dict[Context, Counter[int]] = {}
    n_captions = 0
    for caption in captions:
        n_captions += 1
        indices = [vocab.index(token) for token in caption.tokens]
        for position in range(1, len(indices)):
            for order in range(min(n - 1, position) + 1):
                context = tuple(indices[position - order : position])
                counts.setdefault(context, Counter())[indices[position]] += 1
    if n_captions == 0:
        raise CorpusErrors.EMPTY_CORPUS.error()
    return NgramModel(n, vocab, counts)


def leading_ngram_table(model: NgramModel, context: list[str], k: int) -> list[tuple[str, int]]:
    """
    Most frequent continuations of a context.

    An empty context is read as the caption start, so it lists caption-leading words.

    Args:
        model: Trained model.
        context: Context tokens, shorter than the model order.
        k: Table size.

    Returns:
        list[tuple[str, int]]: Up to k (token, count) pairs by descending count, ties in
        lexicographic order; empty for unknown contexts.
    """
    if not context:
        key: Context = (model.vocab.start_index,)
    else:
        if any(token not in model.vocab.token_to_index for token in context):
            return []
        key = tuple(model.vocab.token_to_index[token] for token in context)
    if len(key) >= model.n or key not in model.counts:
        return []
    ranked = sorted(
        ((model.vocab.token(token), count) for token, count in model.counts[key].items()),
        key=lambda pair: (-pair[1], pair[0]),
    )
    return ranked[:k]


def context_tables(model: NgramModel, context: list[str], k: int) -> list[tuple[list[str], list[tuple[str, int]]]]:
    """
    Leading-word, bigram and trigram continuation tables along one context.

    Missing context words are filled in greedily: the most frequent leading word, then its most
    frequent follower other than the end marker. The chain stops early when a table has nothing
    to extend with or the model order is too short for it.

    Args:
        model: Trained model.
        context: Up to two context words.
        k: Size of each table.

    Raises:
        CaptionForgeError: If the context holds more than two words.

    Returns:
        list[tuple[list[str], list[tuple[str, int]]]]: (context, table) pairs for contexts of
        length 0, 1 and 2.
    """
    if len(context) > 2:
        raise AnalysisErrors.LONG_CONTEXT.error(context=" ".join(context))

    chain = list(context)
    tables = []
    for depth in range(min(3, model.n)):
        rows = leading_ngram_table(model, chain[:depth], k)
        tables.append((chain[:depth], rows))
        if depth == len(chain):
            follower = next((token for token, _ in rows if token != END), None)
            if follower is None:
                break
            chain.append(follower)
    return tables


def save_ngram(model: NgramModel, path: Path) -> None:
    """Write every (context, next token, count) triple under an `NGRAM v1` header."""
    lines = [f"{NGRAM_HEADER} {model.n}"]
    for context in sorted(model.counts, key=lambda ctx: (len(ctx), ctx)):
        context_text = " ".join(model.vocab.token(index) for index in context)
        for token, count in sorted(model.counts[context].items()):
            lines.append(f"{context_text}\t{model.vocab.token(token)}\t{count}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_ngram(path: Path, vocab: Vocabulary) -> NgramModel:
    """
    Read a model written by `save_ngram`.

    Args:
        path: Model file.
        vocab: Vocabulary the model was trained with.

    Raises:
        CaptionForgeError: If the header or a line is malformed or names an unknown token.

    Returns:
        NgramModel: The model.
    """
    lines = path.read_text(encoding="utf-8").splitlines()
    header = lines[0].split() if lines else []
    if len(header) != 3 or " ".join(header[:2]) != NGRAM_HEADER or not header[2].isdigit():
        raise ModelErrors.BAD_NGRAM.error(path=path, problem="missing NGRAM v1 header")

    counts: dict[Context, Counter[int]] = {}
    for line in lines[1:]:
        parts = line.split("\t")
        if len(parts) != 3 or not parts[2].isdigit():
            raise ModelErrors.BAD_NGRAM.error(path=path, problem=f"bad line {line!r}")
        names = [*parts[0].split(), parts[1]]
        unknown = [name for name in names if name not in vocab.token_to_index]
        if unknown:
            raise ModelErrors.BAD_NGRAM.error(path=path, problem=f"unknown tokens {unknown}")
        *context, token = (vocab.token_to_index[name] for name in names)
        counts.setdefault(tuple(context), Counter())[token] = int(parts[2])
    return NgramModel(int(header[2]), vocab, counts)
