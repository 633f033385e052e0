"""
Toy inject / merge-concat / merge-add caption models written directly in numpy.

Inject: the projected image is the first "word" of the LSTM input sequence and the final
hidden state feeds the softmax layer. Merge: the LSTM reads only the words; its final hidden
state is concatenated with (or added to) the rectified image projection before the softmax
layer.

LSTM gates are stacked in the order input, forget, output, cell candidate.
"""

import logging
import struct
from pathlib import Path
from typing import Annotated, Iterator, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from caption_forge.core.dataset import ExampleTable, TrainingExample
from caption_forge.core.embedding_store import EmbeddingStore, ImageEmbedding
from caption_forge.core.scorer import NextTokenDistribution, masked_softmax
from caption_forge.core.text_pipeline import EncodedCaption, Vocabulary
from caption_forge.utils.config import ArchitectureKind
from caption_forge.utils.errors import ModelErrors, ScorerErrors, TrainingErrors

logger = logging.getLogger(__name__)

PARAMETER_ORDER = (
    "word_embedding",
    "image_weight",
    "image_bias",
    "lstm_weight",
    "lstm_bias",
    "output_weight",
    "output_bias",
)
KIND_CODES: dict[str, int] = {"inject": 0, "merge_concat": 1, "merge_add": 2}

MODEL_MAGIC = b"NICM"
MODEL_VERSION = 1
MODEL_HEADER = struct.Struct("<4sBB6I")

Dim = Annotated[int, Field(ge=1)]


class ArchitectureSpec(BaseModel):
    """Layer sizes of one caption model."""

    model_config = ConfigDict(frozen=True)

    kind: ArchitectureKind
    embedding_dim: Dim
    lstm_hidden_dim: Dim
    image_dense_dim: Dim
    vocab_size: Annotated[int, Field(ge=5)]
    max_len: Annotated[int, Field(ge=2)] = 15
    image_input_dim: Dim = 4096

    @model_validator(mode="after")
    def check_dims(self) -> "ArchitectureSpec":
        if self.kind == "inject" and not (
            self.image_dense_dim == self.embedding_dim == self.lstm_hidden_dim
        ):
            raise ValueError("inject needs equal image dense, word embedding and LSTM sizes")
        if self.kind == "merge_add" and self.image_dense_dim != self.lstm_hidden_dim:
            raise ValueError("merge_add needs equal image dense and LSTM sizes")
        return self

    @property
    def combined_dim(self) -> int:
        if self.kind == "merge_concat":
            return self.image_dense_dim + self.lstm_hidden_dim
        return self.lstm_hidden_dim


def parameter_shapes(spec: ArchitectureSpec) -> dict[str, tuple[int, ...]]:
    hidden = spec.lstm_hidden_dim
    return {
        "word_embedding": (spec.vocab_size, spec.embedding_dim),
        "image_weight": (spec.image_input_dim, spec.image_dense_dim),
        "image_bias": (spec.image_dense_dim,),
        "lstm_weight": (spec.embedding_dim + hidden, 4 * hidden),
        "lstm_bias": (4 * hidden,),
        "output_weight": (spec.combined_dim, spec.vocab_size),
        "output_bias": (spec.vocab_size,),
    }


def parameter_count(spec: ArchitectureSpec) -> dict[str, int]:
    """Number of entries of every parameter matrix."""
    return {name: int(np.prod(shape)) for name, shape in parameter_shapes(spec).items()}


class ModelParameters:
    """
    Named float64 parameter arrays of a caption model; also used for gradients and velocities.

    Args:
        arrays: Arrays keyed by the names of PARAMETER_ORDER.
    """

    def __init__(self, arrays: dict[str, np.ndarray]) -> None:
        self.arrays = {name: arrays[name] for name in PARAMETER_ORDER}

    @classmethod
    def zeros(cls, spec: ArchitectureSpec) -> "ModelParameters":
        return cls({name: np.zeros(shape) for name, shape in parameter_shapes(spec).items()})

    def __getitem__(self, name: str) -> np.ndarray:
        return self.arrays[name]

    def __iter__(self) -> Iterator[tuple[str, np.ndarray]]:
        return iter(self.arrays.items())

    def copy(self) -> "ModelParameters":
        return ModelParameters({name: array.copy() for name, array in self})

    def combine(self, other: "ModelParameters", scale: float) -> "ModelParameters":
        """Return `self + scale * other`."""
        return ModelParameters({name: array + scale * other[name] for name, array in self})

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(array)) for _, array in self)


def build_model(spec: ArchitectureSpec, seed: int) -> ModelParameters:
    """
    Initialize parameters: Glorot-uniform matrices, zero biases, forget-gate bias 1.

    Args:
        spec: Architecture.
        seed: Generator seed.

    Returns:
        ModelParameters: Fresh parameters.
    """
    rng = np.random.default_rng(seed)
    arrays = {}
    for name, shape in parameter_shapes(spec).items():
        if len(shape) == 2:
            limit = np.sqrt(6.0 / (shape[0] + shape[1]))
            arrays[name] = rng.uniform(-limit, limit, size=shape)
        else:
            arrays[name] = np.zeros(shape)
    hidden = spec.lstm_hidden_dim
    arrays["lstm_bias"][hidden : 2 * hidden] = 1.0
    return ModelParameters(arrays)


def make_spec(**fields: object) -> ArchitectureSpec:
    """
    Validate architecture fields, reporting violations as model errors.

    Raises:
        CaptionForgeError: If a dimension constraint is violated.
    """
    try:
        return ArchitectureSpec(**fields)
    except ValidationError as exc:
        problems = "; ".join(err["msg"] for err in exc.errors())
        raise ModelErrors.BAD_ARCHITECTURE.error(problem=problems) from exc


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _forward(
    params: ModelParameters,
    spec: ArchitectureSpec,
    images: np.ndarray,
    prefixes: np.ndarray,
    lengths: np.ndarray,
) -> tuple[np.ndarray, dict]:
    batch = images.shape[0]
    hidden = spec.lstm_hidden_dim
    steps = int(lengths.max())

    image_pre = images @ params["image_weight"] + params["image_bias"]
    word_vectors = params["word_embedding"][prefixes[:, :steps]]
    inputs = [word_vectors[:, t] for t in range(steps)]
    masks = [(lengths > t).astype(np.float64)[:, None] for t in range(steps)]
    if spec.kind == "inject":
        image_act = image_pre
        inputs.insert(0, image_pre)
        masks.insert(0, np.ones((batch, 1)))
    else:
        image_act = np.maximum(image_pre, 0.0)

    weight, bias = params["lstm_weight"], params["lstm_bias"]
    h = np.zeros((batch, hidden))
    c = np.zeros((batch, hidden))
    step_cache = []
    for x, m in zip(inputs, masks):
        xh = np.concatenate([x, h], axis=1)
        z = xh @ weight + bias
        i = _sigmoid(z[:, :hidden])
        f = _sigmoid(z[:, hidden : 2 * hidden])
        o = _sigmoid(z[:, 2 * hidden : 3 * hidden])
        g = np.tanh(z[:, 3 * hidden :])
        c_new = f * c + i * g
        tanh_c = np.tanh(c_new)
        step_cache.append((xh, m, i, f, o, g, c, tanh_c))
        # padded positions carry the previous state through unchanged
        c = m * c_new + (1.0 - m) * c
        h = m * (o * tanh_c) + (1.0 - m) * h

    if spec.kind == "inject":
        combined = h
    elif spec.kind == "merge_concat":
        combined = np.concatenate([h, image_act], axis=1)
    else:
        combined = h + image_act
    probabilities = masked_softmax(combined @ params["output_weight"] + params["output_bias"])

    cache = {
        "images": images,
        "prefixes": prefixes[:, :steps],
        "image_pre": image_pre,
        "steps": step_cache,
        "combined": combined,
        "probabilities": probabilities,
    }
    return probabilities, cache


def _backward(
    params: ModelParameters, spec: ArchitectureSpec, cache: dict, targets: np.ndarray,
) -> ModelParameters:
    grads = ModelParameters.zeros(spec)
    hidden = spec.lstm_hidden_dim
    batch = targets.shape[0]

    dlogits = cache["probabilities"].copy()
    dlogits[np.arange(batch), targets] -= 1.0
    dlogits /= batch
    grads["output_weight"][...] = cache["combined"].T @ dlogits
    grads["output_bias"][...] = dlogits.sum(axis=0)
    dcombined = dlogits @ params["output_weight"].T

    if spec.kind == "merge_concat":
        dh, dimage_act = dcombined[:, :hidden], dcombined[:, hidden:]
    elif spec.kind == "merge_add":
        dh, dimage_act = dcombined, dcombined
    else:
        dh, dimage_act = dcombined, None

    weight = params["lstm_weight"]
    input_dim = weight.shape[0] - hidden
    dc = np.zeros_like(dh)
    dinputs: list[np.ndarray] = [np.empty(0)] * len(cache["steps"])
    for t in reversed(range(len(cache["steps"]))):
        xh, m, i, f, o, g, c_prev, tanh_c = cache["steps"][t]
        dh_new = m * dh
        dc_new = m * dc + dh_new * o * (1.0 - tanh_c**2)
        dz = np.concatenate(
            [
                dc_new * g * i * (1.0 - i),
                dc_new * c_prev * f * (1.0 - f),
                dh_new * tanh_c * o * (1.0 - o),
                dc_new * i * (1.0 - g**2),
            ],
            axis=1,
        )
        grads["lstm_weight"][...] += xh.T @ dz
        grads["lstm_bias"][...] += dz.sum(axis=0)
        dxh = dz @ weight.T
        dinputs[t] = dxh[:, :input_dim]
        dh = dxh[:, input_dim:] + (1.0 - m) * dh
        dc = dc_new * f + (1.0 - m) * dc

    offset = 1 if spec.kind == "inject" else 0
    prefixes = cache["prefixes"]
    for t in range(prefixes.shape[1]):
        np.add.at(grads["word_embedding"], prefixes[:, t], dinputs[t + offset])

    if spec.kind == "inject":
        dimage_pre = dinputs[0]
    else:
        dimage_pre = dimage_act * (cache["image_pre"] > 0.0)
    grads["image_weight"][...] = cache["images"].T @ dimage_pre
    grads["image_bias"][...] = dimage_pre.sum(axis=0)
    return grads


def _cross_entropy(probabilities: np.ndarray, targets: np.ndarray) -> float:
    picked = probabilities[np.arange(targets.shape[0]), targets]
    with np.errstate(divide="ignore"):
        return float(-np.mean(np.log(picked)))


def batch_loss(
    params: ModelParameters,
    spec: ArchitectureSpec,
    images: np.ndarray,
    prefixes: np.ndarray,
    lengths: np.ndarray,
    targets: np.ndarray,
) -> float:
    probabilities, _ = _forward(params, spec, images, prefixes, lengths)
    return _cross_entropy(probabilities, targets)


def batch_loss_and_gradient(
    params: ModelParameters,
    spec: ArchitectureSpec,
    images: np.ndarray,
    prefixes: np.ndarray,
    lengths: np.ndarray,
    targets: np.ndarray,
) -> tuple[float, ModelParameters]:
    """
    Mean cross-entropy of a batch and its gradient by backpropagation through time.

    Args:
        params: Model parameters.
        spec: Architecture.
        images: Image rows, shape (batch, image_input_dim).
        prefixes: Prefix indices, shape (batch, width).
        lengths: True prefix lengths, each at least 1.
        targets: Target indices.

    Returns:
        tuple[float, ModelParameters]: Loss and gradient.
    """
    probabilities, cache = _forward(params, spec, images, prefixes, lengths)
    return _cross_entropy(probabilities, targets), _backward(params, spec, cache, targets)


def _batch_arrays(
    spec: ArchitectureSpec, batch: Sequence[TrainingExample], store: EmbeddingStore,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    if not batch:
        raise TrainingErrors.EMPTY_BATCH.error()
    if store.dim != spec.image_input_dim:
        raise ScorerErrors.DIMENSION_MISMATCH.error(actual=store.dim, expected=spec.image_input_dim)
    table = ExampleTable(batch)
    return store.matrix(table.photo_ids), table.prefixes, table.lengths, table.targets


def forward(
    params: ModelParameters,
    spec: ArchitectureSpec,
    embedding: ImageEmbedding,
    prefix: EncodedCaption,
) -> NextTokenDistribution:
    """
    Next-token distribution for one image and prefix.

    Args:
        params: Model parameters.
        spec: Architecture.
        embedding: Image embedding of dimension `spec.image_input_dim`.
        prefix: Encoded prefix; only its first `true_length` tokens are read.

    Raises:
        CaptionForgeError: If the prefix is empty or the embedding dimension does not match.

    Returns:
        NextTokenDistribution: Softmax output with reserved tokens masked.
    """
    if embedding.dim != spec.image_input_dim:
        raise ScorerErrors.DIMENSION_MISMATCH.error(actual=embedding.dim, expected=spec.image_input_dim)
    if prefix.true_length < 1:
        raise ScorerErrors.EMPTY_PREFIX.error()
    probabilities, _ = _forward(
        params,
        spec,
        embedding.values.astype(np.float64)[None, :],
        np.array([prefix.indices], dtype=np.int64),
        np.array([prefix.true_length]),
    )
    return NextTokenDistribution(probabilities=probabilities[0])


def loss(
    params: ModelParameters,
    spec: ArchitectureSpec,
    batch: Sequence[TrainingExample],
    store: EmbeddingStore,
) -> float:
    """
    Mean negative log-likelihood of the batch targets.

    Args:
        params: Model parameters.
        spec: Architecture.
        batch: Non-empty list of examples.
        store: Embeddings of every photo in the batch.

    Raises:
        CaptionForgeError: If the batch is empty or a photo has no embedding.

    Returns:
        float: Loss, at least 0.
    """
    return batch_loss(params, spec, *_batch_arrays(spec, batch, store))


def gradient(
    params: ModelParameters,
    spec: ArchitectureSpec,
    batch: Sequence[TrainingExample],
    store: EmbeddingStore,
) -> ModelParameters:
    """Analytic gradient of `loss` with respect to every parameter."""
    _, grads = batch_loss_and_gradient(params, spec, *_batch_arrays(spec, batch, store))
    return grads


class NeuralScorer:
    """
    Trained parameters bound to their architecture and vocabulary.

    Args:
        params: Model parameters.
        spec: Architecture.
        vocab: Vocabulary of the output layer.
    """

    def __init__(self, params: ModelParameters, spec: ArchitectureSpec, vocab: Vocabulary) -> None:
        if vocab.size != spec.vocab_size:
            raise ModelErrors.BAD_ARCHITECTURE.error(
                problem=f"vocabulary has {vocab.size} tokens, model expects {spec.vocab_size}",
            )
        self.params = params
        self.spec = spec
        self.vocab = vocab

    def predict_next(self, embedding: ImageEmbedding, prefix: EncodedCaption) -> NextTokenDistribution:
        return forward(self.params, self.spec, embedding, prefix)


def save_model(params: ModelParameters, spec: ArchitectureSpec, path: Path) -> None:
    """
    Write a model in the `NICM` binary format.

    Args:
        params: Model parameters, stored as float32.
        spec: Architecture written into the header.
        path: Destination file.
    """
    with path.open("wb") as handle:
        handle.write(
            MODEL_HEADER.pack(
                MODEL_MAGIC,
                MODEL_VERSION,
                KIND_CODES[spec.kind],
                spec.embedding_dim,
                spec.lstm_hidden_dim,
                spec.image_dense_dim,
                spec.vocab_size,
                spec.max_len,
                spec.image_input_dim,
            ),
        )
        for _, array in params:
            handle.write(array.astype("<f4").tobytes())


def load_model(path: Path) -> tuple[ModelParameters, ArchitectureSpec]:
    """
    Read a model written by `save_model`.

    Args:
        path: Model file.

    Raises:
        CaptionForgeError: If the header is wrong or the file is truncated.

    Returns:
        tuple[ModelParameters, ArchitectureSpec]: Parameters (float64) and architecture.
    """
    data = path.read_bytes()
    if len(data) < MODEL_HEADER.size or data[:4] != MODEL_MAGIC:
        raise ModelErrors.BAD_MAGIC.error(path=path)
    _, version, kind_code, *dims = MODEL_HEADER.unpack_from(data, 0)
    kinds = {code: kind for kind, code in KIND_CODES.items()}
    if version != MODEL_VERSION or kind_code not in kinds:
        raise ModelErrors.BAD_MAGIC.error(path=path)
    embedding_dim, hidden_dim, dense_dim, vocab_size, max_len, image_dim = dims
    spec = make_spec(
        kind=kinds[kind_code],
        embedding_dim=embedding_dim,
        lstm_hidden_dim=hidden_dim,
        image_dense_dim=dense_dim,
        vocab_size=vocab_size,
        max_len=max_len,
        image_input_dim=image_dim,
    )

    arrays = {}
    offset = MODEL_HEADER.size
    for name, shape in parameter_shapes(spec).items():
        count = int(np.prod(shape))
        if offset + 4 * count > len(data):
            raise ModelErrors.TRUNCATED.error(path=path)
        arrays[name] = (
            np.frombuffer(data, dtype="<f4", count=count, offset=offset).astype(np.float64).reshape(shape)
        )
        offset += 4 * count
    return ModelParameters(arrays), spec


def load_word_vectors(
    path: Path, vocab: Vocabulary, params: ModelParameters, spec: ArchitectureSpec,
) -> tuple[ModelParameters, int]:
    """
    Overwrite word-embedding rows with vectors from a `token v1 ... vd` text table.

    Args:
        path: Table file; tokens outside the vocabulary are skipped.
        vocab: Model vocabulary.
        params: Parameters whose embedding rows are replaced.
        spec: Architecture; vectors must have `embedding_dim` values.

    Raises:
        CaptionForgeError: If a line has the wrong number of values.

    Returns:
        tuple[ModelParameters, int]: Updated parameters and number of rows replaced.
    """
    updated = params.copy()
    loaded = 0
    for line_no, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        parts = line.split()
        if not parts:
            continue
        if len(parts) != spec.embedding_dim + 1:
            raise ModelErrors.BAD_WORD_VECTORS.error(
                path=path, problem=f"line {line_no} has {len(parts) - 1} values",
            )
        if parts[0] in vocab.token_to_index:
            updated["word_embedding"][vocab.token_to_index[parts[0]]] = [float(v) for v in parts[1:]]
            loaded += 1
    logger.info("Loaded %d word vectors from %s", loaded, path)
    return updated, loaded
