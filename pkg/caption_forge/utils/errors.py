"""This module defines the error catalogs of the toolkit."""

from enum import Enum, IntEnum
from typing import Any


class ExitCode(IntEnum):
    """Process exit codes of the command-line interface."""

    OK = 0
    USAGE = 1
    DATA = 2


class CaptionForgeError(Exception):
    """
    Expected failure carrying the exit code the CLI reports for it.

    Attributes:
        exit_code: Exit code of the process when the error reaches the CLI.
        detail: Human readable description.
        reason: Name of the catalog member the error was raised from.
    """

    def __init__(self, exit_code: int, detail: str, reason: str | None = None) -> None:
        super().__init__(detail)
        self.exit_code = exit_code
        self.detail = detail
        self.reason = reason


class Errors(CaptionForgeError, Enum):
    """
    Custom enumeration class for defining error catalogs.

    This class extends both CaptionForgeError and Enum: every member holds an exit code and a
    detail template. Raising code calls `error` on a member to format the template with context.

    Attributes:
        value (CaptionForgeError): The base error associated with each member.
    """

    value: CaptionForgeError

    def error(self, **context: Any) -> CaptionForgeError:
        """
        Build a raisable error from this catalog member.

        Args:
            context: Values substituted into the detail template.

        Returns:
            CaptionForgeError: Error with the formatted detail and this member's name as reason.
        """
        return CaptionForgeError(
            self.value.exit_code, self.value.detail.format(**context), reason=self.name,
        )

    @classmethod
    def describe(cls) -> list[str]:
        lines = []
        for member in cls.__members__.values():
            lines.append(f"{member.value.exit_code}  {member.name.lower()}: {member.value.detail}")
        return lines


class ConfigErrors(Errors):
    UNKNOWN_KEY = (ExitCode.USAGE, "Unknown configuration key '{key}' in {path}")
    MALFORMED_LINE = (ExitCode.USAGE, "Malformed configuration line {line_no} in {path}")
    INVALID_VALUE = (ExitCode.USAGE, "Invalid configuration: {problem}")
    MISSING_OPTION = (ExitCode.USAGE, "Option {option} is required")


class CorpusErrors(Errors):
    EMPTY_CORPUS = (ExitCode.DATA, "Caption corpus is empty")
    BAD_RECORD = (ExitCode.DATA, "Malformed caption record at {path}:{line_no}: {problem}")
    BAD_VOCABULARY = (ExitCode.DATA, "Malformed vocabulary file {path}: {problem}")
    INDEX_OUT_OF_RANGE = (ExitCode.DATA, "Token index {index} is outside vocabulary of size {size}")


class EmbeddingErrors(Errors):
    BAD_MAGIC = (ExitCode.DATA, "{path} is not an embedding file (magic bytes {magic!r})")
    UNSUPPORTED_VERSION = (ExitCode.DATA, "Embedding file version {version} is not supported")
    DIMENSION_MISMATCH = (
        ExitCode.DATA,
        "Embedding '{photo_id}' has dimension {actual}, expected {expected}",
    )
    TRUNCATED_RECORD = (ExitCode.DATA, "Embedding file {path} ends inside record {record}")
    CORRUPT_RECORD = (ExitCode.DATA, "Embedding file {path} holds a non-UTF-8 photo id in record {record}")
    DUPLICATE_ID = (ExitCode.DATA, "Photo id '{photo_id}' is stored twice")
    NON_FINITE = (ExitCode.DATA, "Embedding '{photo_id}' holds non-finite values")
    MISSING = (ExitCode.DATA, "No embedding stored for photo id '{photo_id}'")
    EMPTY_CSV = (ExitCode.DATA, "CSV file {path} holds no embedding rows")


class DatasetErrors(Errors):
    EMPTY_INPUT = (ExitCode.DATA, "Cannot split an empty record collection")
    BAD_FRACTION = (ExitCode.USAGE, "Validation fraction must lie in (0, 1), got {fraction}")
    BAD_CACHE = (ExitCode.DATA, "Malformed example cache {path}: {problem}")


class ScorerErrors(Errors):
    EMPTY_PREFIX = (ExitCode.DATA, "Prefix must hold at least the start token")
    DIMENSION_MISMATCH = (
        ExitCode.DATA,
        "Embedding dimension {actual} does not match model input dimension {expected}",
    )


class ModelErrors(Errors):
    BAD_ARCHITECTURE = (ExitCode.USAGE, "Invalid architecture: {problem}")
    BAD_MAGIC = (ExitCode.DATA, "{path} is not a caption model file")
    TRUNCATED = (ExitCode.DATA, "Model file {path} is truncated")
    BAD_NGRAM = (ExitCode.DATA, "Malformed n-gram model {path}: {problem}")
    BAD_ORDER = (ExitCode.USAGE, "N-gram order must be at least 1, got {n}")
    BAD_WORD_VECTORS = (ExitCode.DATA, "Malformed word vector table {path}: {problem}")


class TrainingErrors(Errors):
    EMPTY_DATASET = (ExitCode.DATA, "Training needs non-empty {split} examples")
    EMPTY_BATCH = (ExitCode.DATA, "Loss is undefined for an empty batch")
    DIVERGED = (
        ExitCode.DATA,
        "Training diverged at epoch {epoch}, iteration {iteration}: loss is {loss}",
    )


class DecoderErrors(Errors):
    BAD_ALPHA = (ExitCode.USAGE, "Alpha must lie in (0, 1], got {alpha}")
    BAD_OMEGA = (ExitCode.DATA, "Predicted probability {omega} is outside (0, 1]")


class MetricErrors(Errors):
    EMPTY_CORPUS = (ExitCode.DATA, "Cannot score an empty corpus")
    LENGTH_MISMATCH = (
        ExitCode.DATA,
        "{candidates} candidates were given for {references} references",
    )
    BAD_ORDER = (ExitCode.USAGE, "BLEU order must lie in [1, 4], got {n}")
    MISSING_REFERENCE = (ExitCode.DATA, "No reference caption for photo id '{photo_id}'")


class AnalysisErrors(Errors):
    EMPTY_CORPUS = (ExitCode.DATA, "Cannot analyse an empty corpus")
    TOO_FEW_POINTS = (ExitCode.DATA, "Zipf fit needs at least 3 ranks, got {points}")
    LONG_CONTEXT = (ExitCode.USAGE, "A frequency table context holds at most 2 words, got '{context}'")
