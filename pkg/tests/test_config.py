"""Test suite for settings resolution and the error catalogs."""

from pathlib import Path

import pytest

from caption_forge.utils.config import Settings, load_settings, read_config_file
from caption_forge.utils.errors import CaptionForgeError, ConfigErrors, DecoderErrors, ExitCode


@pytest.fixture()
def config_file(tmp_path: Path) -> Path:
    """
    Fixture with a configuration file setting the seed, alpha and the architecture.

    Args:
        tmp_path: Temporary directory provided by pytest.

    Returns:
        Path: The file.
    """
    path = tmp_path / "run.conf"
    path.write_text(
        "# run settings\nseed = 5\n\nalpha = 0.8\narchitecture = merge-add\ntrain-word-embeddings = false\n",
    )
    return path


def test_defaults(monkeypatch: pytest.MonkeyPatch) -> None:
    """
    Test the default settings and the architecture-dependent layer sizes.

    Args:
        monkeypatch: Pytest monkeypatch fixture.
    """
    monkeypatch.delenv("CAPTION_FORGE_SEED", raising=False)
    settings = load_settings()

    assert settings == Settings()
    assert settings.layer_dims() == (300, 300, 300)
    assert Settings(architecture="merge_concat", lstm_hidden_dim=64).layer_dims() == (256, 64, 256)


def test_precedence(config_file: Path, monkeypatch: pytest.MonkeyPatch) -> None:
    """
    Test that flags beat the file, the file beats the environment and the environment beats defaults.

    Args:
        config_file: Configuration file fixture.
        monkeypatch: Pytest monkeypatch fixture.
    """
    config_file.write_text(config_file.read_text().replace("merge-add", "merge_add"))
    monkeypatch.setenv("CAPTION_FORGE_SEED", "3")

    assert load_settings().seed == 3
    from_file = load_settings(config_file)
    assert from_file.seed == 5
    assert from_file.alpha == 0.8
    assert from_file.architecture == "merge_add"
    assert from_file.train_word_embeddings is False

    flagged = load_settings(config_file, {"seed": 7, "alpha": None, "beta": 4})
    assert flagged.seed == 7
    assert flagged.alpha == 0.8
    assert flagged.beta == 4


def test_config_file_errors(tmp_path: Path) -> None:
    """
    Test unknown keys and lines without an equals sign.

    Args:
        tmp_path: Temporary directory provided by pytest.
    """
    path = tmp_path / "bad.conf"

    path.write_text("beam_width = 3\n")
    with pytest.raises(CaptionForgeError) as exc:
        read_config_file(path)
    assert exc.value.reason == "UNKNOWN_KEY"
    assert exc.value.exit_code == ExitCode.USAGE

    path.write_text("seed 3\n")
    with pytest.raises(CaptionForgeError) as exc:
        read_config_file(path)
    assert exc.value.reason == "MALFORMED_LINE"


def test_invalid_values_are_reported(config_file: Path) -> None:
    """
    Test that out-of-range values from the file or the flags name the offending setting.

    Args:
        config_file: Configuration file fixture.
    """
    with pytest.raises(CaptionForgeError) as exc:
        load_settings(config_file)
    assert exc.value.reason == "INVALID_VALUE"
    assert "architecture" in exc.value.detail

    with pytest.raises(CaptionForgeError) as exc:
        load_settings(overrides={"alpha": 1.5})
    assert "alpha" in exc.value.detail


def test_error_catalog() -> None:
    """Test that catalog members build errors carrying exit code, reason and message."""
    error = DecoderErrors.BAD_ALPHA.error(alpha=2.0)

    assert isinstance(error, CaptionForgeError)
    assert error.exit_code == ExitCode.USAGE
    assert error.reason == "BAD_ALPHA"
    assert str(error) == "Alpha must lie in (0, 1], got 2.0"
    assert ConfigErrors.describe()[0].startswith("1  unknown_key: ")
