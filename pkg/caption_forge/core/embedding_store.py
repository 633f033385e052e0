"""
Storage and lookup of precomputed image embeddings.

Binary layout (little endian): magic `NICE`, version u8, dim u32, record count u64, then per
record a u16 photo id length, the UTF-8 id and `dim` float32 values.
"""

import csv
import hashlib
import struct
from pathlib import Path
from typing import Iterator

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator

from caption_forge.utils.errors import EmbeddingErrors

MAGIC = b"NICE"
VERSION = 1
HEADER = struct.Struct("<4sBIQ")
ID_LENGTH = struct.Struct("<H")


class ImageEmbedding(BaseModel):
    """Fixed-length float32 vector encoding one image."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    values: np.ndarray

    @field_validator("values", mode="before")
    @classmethod
    def check_values(cls, values: np.ndarray) -> np.ndarray:
        values = np.array(values, dtype=np.float32)
        if values.ndim != 1 or values.size == 0:
            raise ValueError("embedding must be a non-empty vector")
        if not np.all(np.isfinite(values)):
            raise ValueError("embedding holds non-finite values")
        values.setflags(write=False)
        return values

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])


class EmbeddingStore:
    """
    Ordered map from photo id to embedding, all of one dimension.

    Args:
        dim: Dimension every stored embedding must have.
    """

    def __init__(self, dim: int) -> None:
        self.dim = dim
        self._embeddings: dict[str, ImageEmbedding] = {}

    def add(self, photo_id: str, embedding: ImageEmbedding) -> None:
        if embedding.dim != self.dim:
            raise EmbeddingErrors.DIMENSION_MISMATCH.error(
                photo_id=photo_id, actual=embedding.dim, expected=self.dim,
            )
        if photo_id in self._embeddings:
            raise EmbeddingErrors.DUPLICATE_ID.error(photo_id=photo_id)
        self._embeddings[photo_id] = embedding

    def get(self, photo_id: str) -> ImageEmbedding:
        try:
            return self._embeddings[photo_id]
        except KeyError:
            raise EmbeddingErrors.MISSING.error(photo_id=photo_id) from None

    def matrix(self, photo_ids: list[str]) -> np.ndarray:
        """Stack the embeddings of `photo_ids` into a float64 matrix."""
        if not photo_ids:
            return np.zeros((0, self.dim))
        return np.stack([self.get(photo_id).values for photo_id in photo_ids]).astype(np.float64)

    def photo_ids(self) -> list[str]:
        return list(self._embeddings)

    def __contains__(self, photo_id: object) -> bool:
        return photo_id in self._embeddings

    def __len__(self) -> int:
        return len(self._embeddings)

    def __iter__(self) -> Iterator[tuple[str, ImageEmbedding]]:
        return iter(self._embeddings.items())


def save_store(store: EmbeddingStore, path: Path) -> None:
    """
    Write a store in the binary embedding format.

    Args:
        store: Store to write.
        path: Destination file.
    """
    with path.open("wb") as handle:
        handle.write(HEADER.pack(MAGIC, VERSION, store.dim, len(store)))
        for photo_id, embedding in store:
            encoded = photo_id.encode("utf-8")
            handle.write(ID_LENGTH.pack(len(encoded)))
            handle.write(encoded)
            handle.write(embedding.values.astype("<f4").tobytes())


def load_store(path: Path) -> EmbeddingStore:
    """
    Read a store written by `save_store`.

    Args:
        path: Embedding file.

    Raises:
        CaptionForgeError:
            - If the magic bytes or version do not match.
            - If a record is cut short or its photo id is not UTF-8.
            - If a record holds non-finite values or a duplicated id.

    Returns:
        EmbeddingStore: The loaded store.
    """
    data = path.read_bytes()
    if len(data) < HEADER.size or data[:4] != MAGIC:
        raise EmbeddingErrors.BAD_MAGIC.error(path=path, magic=data[:4])
    _, version, dim, count = HEADER.unpack_from(data, 0)
    if version != VERSION:
        raise EmbeddingErrors.UNSUPPORTED_VERSION.error(version=version)

    store = EmbeddingStore(dim)
    offset = HEADER.size
    vector_size = 4 * dim
    for record in range(count):
        if offset + ID_LENGTH.size > len(data):
            raise EmbeddingErrors.TRUNCATED_RECORD.error(path=path, record=record)
        (id_length,) = ID_LENGTH.unpack_from(data, offset)
        offset += ID_LENGTH.size
        if offset + id_length + vector_size > len(data):
            raise EmbeddingErrors.TRUNCATED_RECORD.error(path=path, record=record)
        try:
            photo_id = data[offset : offset + id_length].decode("utf-8")
        except UnicodeDecodeError as exc:
            raise EmbeddingErrors.CORRUPT_RECORD.error(path=path, record=record) from exc
        offset += id_length
        values = np.frombuffer(data, dtype="<f4", count=dim, offset=offset).astype(np.float32)
        offset += vector_size
        if not np.all(np.isfinite(values)):
            raise EmbeddingErrors.NON_FINITE.error(photo_id=photo_id)
        store.add(photo_id, ImageEmbedding(values=values))
    return store


def mock_embed(photo_id: str, dim: int, seed: int) -> ImageEmbedding:
    """
    Deterministic stand-in for CNN features.

    Args:
        photo_id: Photo identifier hashed into the generator seed.
        dim: Vector length.
        seed: Global seed mixed into the hash.

    Returns:
        ImageEmbedding: Vector with entries in [0, 1).
    """
    digest = hashlib.blake2b(f"{seed}:{photo_id}".encode("utf-8"), digest_size=8).digest()
    rng = np.random.default_rng(int.from_bytes(digest, "little"))
    return ImageEmbedding(values=rng.random(dim, dtype=np.float32))


def import_csv(path: Path) -> EmbeddingStore:
    """
    Build a store from `photo_id,v1,...,vdim` rows.

    Args:
        path: CSV file without header.

    Raises:
        CaptionForgeError: If rows disagree on the dimension.

    Returns:
        EmbeddingStore: Store in row order.
    """
    store: EmbeddingStore | None = None
    with path.open(newline="", encoding="utf-8") as handle:
        for row in csv.reader(handle):
            if not row:
                continue
            photo_id, values = row[0], np.array([float(v) for v in row[1:]], dtype=np.float32)
            if store is None:
                store = EmbeddingStore(values.size)
            if values.size != store.dim:
                raise EmbeddingErrors.DIMENSION_MISMATCH.error(
                    photo_id=photo_id, actual=values.size, expected=store.dim,
                )
            if not np.all(np.isfinite(values)):
                raise EmbeddingErrors.NON_FINITE.error(photo_id=photo_id)
            store.add(photo_id, ImageEmbedding(values=values))
    if store is None:
        raise EmbeddingErrors.EMPTY_CSV.error(path=path)
    return store
