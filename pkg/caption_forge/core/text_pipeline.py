"""
Caption cleanse, vocabulary construction and integer encoding.

The cleanse applies, in order: lowercase, newline removal, `&` to `and`, website domains to
`website`, tokens with digits to `num`, transliteration to ASCII, punctuation removal and
start/end markers.
"""

import re
from collections import Counter
from pathlib import Path
from typing import Annotated, Iterable

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from unidecode import unidecode

from caption_forge.utils.errors import CorpusErrors

NULL = "<null>"
START = "<startseq>"
END = "<endseq>"
UNK = "<unk>"
RESERVED = (NULL, START, END, UNK)

WEBSITE_PATTERN = re.compile(r"[a-z\:\/\.0-9]+\.(org|com|net)")
NON_TOKEN_CHARS = re.compile(r"[^a-z0-9 ]")
TOKEN_PATTERN = re.compile(r"^[a-z]+$")

VOCAB_HEADER = "VOCAB v1"


class TokenSequence(BaseModel):
    """Ordered caption tokens opened by `<startseq>` and closed by at most one `<endseq>`."""

    model_config = ConfigDict(frozen=True)

    tokens: list[str]

    @field_validator("tokens")
    @classmethod
    def check_tokens(cls, tokens: list[str]) -> list[str]:
        if not tokens or tokens[0] != START:
            raise ValueError(f"first token must be {START}")
        if tokens.count(START) != 1:
            raise ValueError(f"{START} must occur exactly once")
        if tokens.count(END) > 1:
            raise ValueError(f"{END} may occur at most once")
        for token in tokens:
            if token not in RESERVED and not TOKEN_PATTERN.match(token):
                raise ValueError(f"token {token!r} is outside the caption alphabet")
        return tokens

    def content(self) -> list[str]:
        """Tokens without start/end markers and padding."""
        return [token for token in self.tokens if token not in (START, END, NULL)]

    def __len__(self) -> int:
        return len(self.tokens)


class Vocabulary(BaseModel):
    """Bidirectional token/index map with corpus frequencies."""

    model_config = ConfigDict(frozen=True)

    token_to_index: dict[str, int]
    index_to_token: list[str]
    frequency: dict[str, int]
    min_frequency: Annotated[int, Field(ge=1)]

    @model_validator(mode="after")
    def check_maps(self) -> "Vocabulary":
        if len(self.token_to_index) != len(self.index_to_token):
            raise ValueError("token maps differ in size")
        for index, token in enumerate(self.index_to_token):
            if self.token_to_index.get(token) != index:
                raise ValueError(f"token {token!r} is not mapped back to index {index}")
        for token in RESERVED:
            if token not in self.token_to_index:
                raise ValueError(f"reserved token {token} is missing")
        if self.token_to_index[NULL] != 0:
            raise ValueError(f"{NULL} must map to index 0")
        return self

    @property
    def size(self) -> int:
        return len(self.index_to_token)

    @property
    def null_index(self) -> int:
        return self.token_to_index[NULL]

    @property
    def start_index(self) -> int:
        return self.token_to_index[START]

    @property
    def end_index(self) -> int:
        return self.token_to_index[END]

    @property
    def unk_index(self) -> int:
        return self.token_to_index[UNK]

    def index(self, token: str) -> int:
        """Index of a token, `<unk>` for tokens outside the vocabulary."""
        return self.token_to_index.get(token, self.unk_index)

    def token(self, index: int) -> str:
        if not 0 <= index < self.size:
            raise CorpusErrors.INDEX_OUT_OF_RANGE.error(index=index, size=self.size)
        return self.index_to_token[index]

    def emittable(self) -> list[int]:
        """Indices a model may predict: everything except `<null>` and `<startseq>`."""
        return [i for i in range(self.size) if i not in (self.null_index, self.start_index)]


class EncodedCaption(BaseModel):
    """Fixed-length index sequence, padded with the `<null>` index after `true_length`."""

    model_config = ConfigDict(frozen=True)

    indices: list[int]
    true_length: Annotated[int, Field(ge=0)]

    @model_validator(mode="after")
    def check_padding(self) -> "EncodedCaption":
        if self.true_length > len(self.indices):
            raise ValueError("true_length exceeds the encoded length")
        if any(index != 0 for index in self.indices[self.true_length:]):
            raise ValueError("positions after true_length must hold the padding index")
        return self

    @property
    def max_len(self) -> int:
        return len(self.indices)

    def prefix(self) -> list[int]:
        return self.indices[: self.true_length]


def _numeric_to_num(text: str) -> str:
    return " ".join(
        "num" if any(ch.isdigit() for ch in token) else token for token in text.split()
    )


def normalize_caption(raw: str) -> TokenSequence:
    """
    Apply the caption cleanse.

    Args:
        raw: Arbitrary caption text, possibly empty.

    Returns:
        TokenSequence: Cleansed tokens wrapped with start/end markers.
    """
    text = raw.lower()
    text = text.replace("\r\n", " ").replace("\n", " ").replace("\r", " ")
    text = text.replace("&", " and ")
    text = WEBSITE_PATTERN.sub(" website ", text)
    text = _numeric_to_num(text)
    # unidecode may emit capitals or digits for some symbols
    text = unidecode(text).lower()
    text = NON_TOKEN_CHARS.sub("", text)
    tokens = ["num" if any(ch.isdigit() for ch in token) else token for token in text.split()]
    return TokenSequence(tokens=[START, *tokens, END])


def build_vocabulary(captions: Iterable[TokenSequence], min_frequency: int) -> Vocabulary:
    """
    Build a deterministic vocabulary from normalized captions.

    Reserved tokens come first (`<null>` at 0), then tokens seen at least `min_frequency`
    times ordered by descending count with lexicographic tie-break.

    Args:
        captions: Normalized captions.
        min_frequency: Minimum corpus count of a kept token.

    Raises:
        CaptionForgeError: If the caption collection is empty.

    Returns:
        Vocabulary: The vocabulary.
    """
    counts: Counter[str] = Counter()
    n_captions = 0
    for caption in captions:
        counts.update(caption.tokens)
        n_captions += 1
    if n_captions == 0:
        raise CorpusErrors.EMPTY_CORPUS.error()

    content = sorted(
        (token for token, count in counts.items() if token not in RESERVED and count >= min_frequency),
        key=lambda token: (-counts[token], token),
    )
    index_to_token = [*RESERVED, *content]
    return Vocabulary(
        token_to_index={token: index for index, token in enumerate(index_to_token)},
        index_to_token=index_to_token,
        frequency={token: counts.get(token, 0) for token in index_to_token},
        min_frequency=min_frequency,
    )


def encode(tokens: TokenSequence, vocab: Vocabulary, max_len: int) -> EncodedCaption:
    """
    Map tokens to indices, truncating or padding to exactly `max_len` entries.

    Args:
        tokens: Normalized caption.
        vocab: Vocabulary; unknown tokens map to `<unk>`.
        max_len: Encoded length, at least 2.

    Returns:
        EncodedCaption: The encoded caption.
    """
    kept = [vocab.index(token) for token in tokens.tokens[:max_len]]
    return EncodedCaption(
        indices=kept + [vocab.null_index] * (max_len - len(kept)), true_length=len(kept),
    )


def decode(encoded: EncodedCaption, vocab: Vocabulary) -> list[str]:
    """
    Map indices back to tokens, dropping padding.

    Args:
        encoded: Encoded caption.
        vocab: Vocabulary used for encoding.

    Raises:
        CaptionForgeError: If an index lies outside the vocabulary.

    Returns:
        list[str]: Tokens; empty for an all-pad input.
    """
    return [vocab.token(index) for index in encoded.indices if index != vocab.null_index]


def save_vocabulary(vocab: Vocabulary, path: Path) -> None:
    """
    Write a vocabulary as a `VOCAB v1` header and one tab-separated token, index, count line
    per entry.

    Args:
        vocab: Vocabulary to write.
        path: Destination file.
    """
    lines = [f"{VOCAB_HEADER} {vocab.size} {vocab.min_frequency}"]
    for index, token in enumerate(vocab.index_to_token):
        lines.append(f"{token}\t{index}\t{vocab.frequency.get(token, 0)}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_vocabulary(path: Path) -> Vocabulary:
    """
    Read a vocabulary written by `save_vocabulary`.

    Args:
        path: Vocabulary file.

    Raises:
        CaptionForgeError: If the header or a line is malformed.

    Returns:
        Vocabulary: The vocabulary.
    """
    lines = path.read_text(encoding="utf-8").splitlines()
    header = lines[0].split() if lines else []
    if len(header) != 4 or " ".join(header[:2]) != VOCAB_HEADER:
        raise CorpusErrors.BAD_VOCABULARY.error(path=path, problem="missing VOCAB v1 header")
    if not (header[2].isdigit() and header[3].isdigit()):
        raise CorpusErrors.BAD_VOCABULARY.error(path=path, problem="header sizes are not integers")
    size, min_frequency = int(header[2]), int(header[3])

    index_to_token = [""] * size
    frequency = {}
    for line in lines[1:]:
        parts = line.split("\t")
        if len(parts) != 3 or not parts[1].isdigit() or not parts[2].isdigit():
            raise CorpusErrors.BAD_VOCABULARY.error(path=path, problem=f"bad line {line!r}")
        token, index, count = parts[0], int(parts[1]), int(parts[2])
        if not 0 <= index < size:
            raise CorpusErrors.BAD_VOCABULARY.error(path=path, problem=f"index {index} out of range")
        index_to_token[index] = token
        frequency[token] = count
    try:
        return Vocabulary(
            token_to_index={token: index for index, token in enumerate(index_to_token)},
            index_to_token=index_to_token,
            frequency=frequency,
            min_frequency=min_frequency,
        )
    except ValueError as exc:
        raise CorpusErrors.BAD_VOCABULARY.error(path=path, problem=str(exc)) from exc
