"""This module is responsible for loading environment variables and run settings."""

import os
from pathlib import Path
from typing import Annotated, Any, Literal

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from caption_forge.utils.errors import ConfigErrors

load_dotenv()

CAPTION_FORGE_SEED = os.environ.get("CAPTION_FORGE_SEED")
CAPTION_FORGE_LOG_LEVEL = os.environ.get("CAPTION_FORGE_LOG_LEVEL", "INFO")

ArchitectureKind = Literal["inject", "merge_concat", "merge_add"]
RougeMode = Literal["recall", "f1"]

Probability = Annotated[float, Field(gt=0.0, lt=1.0)]
PositiveInt = Annotated[int, Field(ge=1)]


class Settings(BaseModel):
    """Every tunable of the pipeline with its built-in default."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    seed: Annotated[int, Field(ge=0)] = 0
    max_len: Annotated[int, Field(ge=2)] = 15
    min_frequency: PositiveInt = 1
    validation_fraction: Probability = 0.2
    ngram_order: PositiveInt = 3

    alpha: Annotated[float, Field(gt=0.0, le=1.0)] = 0.6
    beta: PositiveInt = 3
    kappa: PositiveInt = 3

    architecture: ArchitectureKind = "inject"
    embedding_dim: PositiveInt | None = None
    lstm_hidden_dim: PositiveInt | None = None
    image_dense_dim: PositiveInt | None = None
    learning_rate: Annotated[float, Field(gt=0.0)] = 0.01
    momentum: Annotated[float, Field(ge=0.0, lt=1.0)] = 0.9
    decay: Annotated[float, Field(ge=0.0)] = 1e-6
    batch_size: PositiveInt = 64
    max_epochs: PositiveInt = 30
    patience: Annotated[int, Field(ge=0)] = 2
    train_word_embeddings: bool = True

    mock_dim: PositiveInt = 4096
    rouge_mode: RougeMode = "f1"
    jobs: PositiveInt = 1

    def layer_dims(self) -> tuple[int, int, int]:
        """
        Resolve the layer sizes, falling back to 300 for inject and 256 for merge models.

        Returns:
            tuple[int, int, int]: Word embedding, LSTM hidden and image dense dimensions.
        """
        default = 300 if self.architecture == "inject" else 256
        return (
            self.embedding_dim or default,
            self.lstm_hidden_dim or default,
            self.image_dense_dim or default,
        )


def read_config_file(path: Path) -> dict[str, str]:
    """
    Parse a `key = value` configuration file.

    Args:
        path: Location of the file. Blank lines and lines starting with `#` are skipped.

    Raises:
        CaptionForgeError: If a line has no `=` or names a key Settings does not know.

    Returns:
        dict[str, str]: Raw values keyed by setting name.
    """
    values: dict[str, str] = {}
    for line_no, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigErrors.MALFORMED_LINE.error(line_no=line_no, path=path)
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in Settings.model_fields:
            raise ConfigErrors.UNKNOWN_KEY.error(key=key, path=path)
        values[key] = value
    return values


def load_settings(config_path: Path | None = None, overrides: dict[str, Any] | None = None) -> Settings:
    """
    Merge flags, config file, environment and defaults into validated settings.

    Args:
        config_path: Optional `key = value` file.
        overrides: Values given on the command line; None entries are ignored.

    Raises:
        CaptionForgeError: If a value fails validation.

    Returns:
        Settings: The merged settings.
    """
    merged: dict[str, Any] = {}
    env_seed = os.environ.get("CAPTION_FORGE_SEED", CAPTION_FORGE_SEED)
    if env_seed is not None:
        merged["seed"] = env_seed
    if config_path is not None:
        merged.update(read_config_file(config_path))
    for key, value in (overrides or {}).items():
        if value is not None:
            merged[key] = value

    try:
        return Settings(**merged)
    except ValidationError as exc:
        problems = "; ".join(
            f"{'.'.join(str(part) for part in err['loc'])}: {err['msg']}" for err in exc.errors()
        )
        raise ConfigErrors.INVALID_VALUE.error(problem=problems) from exc
