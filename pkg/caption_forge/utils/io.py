"""JSON-lines readers and writers for captions, token records and predictions."""

from pathlib import Path
from typing import Annotated, Iterable, TypeVar

from pydantic import BaseModel, Field, TypeAdapter, ValidationError

from caption_forge.core.dataset import CaptionRecord, Label
from caption_forge.core.text_pipeline import TokenSequence, normalize_caption
from caption_forge.utils.errors import CorpusErrors

Row = TypeVar("Row", bound=BaseModel)


class RawCaption(BaseModel):
    """One line of the caption input file."""

    photo_id: Annotated[str, Field(min_length=1)]
    caption: str
    label: Label | None = None


class TokenRecord(BaseModel):
    """One line of a normalized token file."""

    photo_id: Annotated[str, Field(min_length=1)]
    tokens: list[str]
    label: Label | None = None


CAPTION_LINE: TypeAdapter[TokenRecord | RawCaption] = TypeAdapter(TokenRecord | RawCaption)


class Prediction(BaseModel):
    """One generated caption."""

    photo_id: str
    caption: str
    score: float
    omegas: list[float]


def read_jsonl(path: Path, model: type[Row]) -> list[Row]:
    """
    Validate every non-blank line of a JSON-lines file against a model.

    Args:
        path: Input file.
        model: Pydantic model of one line.

    Raises:
        CaptionForgeError: If a line is not valid JSON or fails validation.

    Returns:
        list[Row]: Parsed rows in file order.
    """
    rows = []
    with path.open(encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                rows.append(model.model_validate_json(line))
            except ValidationError as exc:
                problem = "; ".join(err["msg"] for err in exc.errors())
                raise CorpusErrors.BAD_RECORD.error(path=path, line_no=line_no, problem=problem) from exc
    return rows


def write_jsonl(rows: Iterable[BaseModel], path: Path) -> None:
    with path.open("w", encoding="utf-8") as handle:
        for row in rows:
            handle.write(row.model_dump_json(exclude_none=True) + "\n")


def read_caption_records(path: Path) -> list[CaptionRecord]:
    """
    Read captions as normalized records.

    Lines holding a `tokens` list (the output of `preprocess`) are taken as already normalized;
    lines holding a raw `caption` string are normalized here.

    Args:
        path: JSON-lines file of raw captions or token records.

    Raises:
        CaptionForgeError: If a line is malformed or its tokens break the caption alphabet.

    Returns:
        list[CaptionRecord]: Records in file order.
    """
    records = []
    with path.open(encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                row = CAPTION_LINE.validate_json(line)
                if isinstance(row, TokenRecord):
                    tokens = TokenSequence(tokens=row.tokens)
                else:
                    tokens = normalize_caption(row.caption)
                records.append(CaptionRecord(photo_id=row.photo_id, tokens=tokens, label=row.label))
            except ValidationError as exc:
                problem = "; ".join(err["msg"] for err in exc.errors())
                raise CorpusErrors.BAD_RECORD.error(path=path, line_no=line_no, problem=problem) from exc
    return records


def write_token_records(records: Iterable[CaptionRecord], path: Path) -> None:
    write_jsonl(
        (TokenRecord(photo_id=r.photo_id, tokens=r.tokens.tokens, label=r.label) for r in records), path,
    )
