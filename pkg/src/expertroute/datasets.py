"""Loaders that normalise benchmark files into canonical :class:`QueryRecord` lists.

Supported source schemas (all JSON-lines, one item per line):

``canonical``
    ``{"id", "stem", "options": {letter: text}, "gold"?, "dept"?, "diff"?, "subject"?}``
``medqa``
    ``{"question", "options": {letter: text}, "answer_idx", "answer"?, "meta_info"?, "id"?}``
``mmlupro``
    ``{"question_id", "question", "options": [text, ...], "answer", "answer_index"?, "src"?, "category"?}``
``nejm``
    ``{"id", "question", "options": {letter: text} | [text, ...], "answer", "subject"?}``

A ``.json`` file holding a top-level list is also accepted; item ``n`` is then
reported as line ``n`` in errors.
"""

from __future__ import annotations

import json
import re
from pathlib import Path
from typing import Any, Callable, Iterator

from .errors import ExpertRouteError, SchemaViolation
from .taxonomy import OPTION_LETTERS, QueryRecord

SCHEMAS = ("canonical", "medqa", "mmlupro", "nejm")


def _items(path: Path) -> Iterator[tuple[int, Any]]:
    text = path.read_text(encoding="utf-8")
    if text.lstrip().startswith("["):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SchemaViolation(exc.lineno, f"invalid JSON: {exc.msg}") from None
        yield from enumerate(data, start=1)
        return
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            yield line_no, json.loads(line)
        except json.JSONDecodeError as exc:
            raise SchemaViolation(line_no, f"invalid JSON: {exc.msg}") from None


def _require(obj: Any, line_no: int, *keys: str) -> None:
    if not isinstance(obj, dict):
        raise SchemaViolation(line_no, "expected a JSON object")
    for k in keys:
        if k not in obj or obj[k] is None:
            raise SchemaViolation(line_no, f"missing required field {k!r}")


def _letter_options(raw: Any, line_no: int) -> dict[str, str]:
    if isinstance(raw, list):
        if len(raw) > len(OPTION_LETTERS):
            raise SchemaViolation(line_no, f"{len(raw)} options exceeds the {len(OPTION_LETTERS)}-option cap")
        return {OPTION_LETTERS[i]: str(t) for i, t in enumerate(raw)}
    if isinstance(raw, dict):
        return {str(k).strip().upper(): str(v) for k, v in raw.items()}
    raise SchemaViolation(line_no, "options must be an object or a list")


def _gold_letter(raw: Any, line_no: int) -> str:
    if not isinstance(raw, str) or not re.fullmatch(r"\s*[A-Za-z]\s*", raw):
        raise SchemaViolation(line_no, f"answer must be a single option letter, got {raw!r}")
    return raw.strip().upper()


def _record(line_no: int, **kw) -> QueryRecord:
    try:
        return QueryRecord(**kw)
    except ExpertRouteError as exc:
        raise SchemaViolation(line_no, str(exc)) from None


def _canonical(obj: Any, line_no: int) -> QueryRecord:
    _require(obj, line_no, "id", "stem", "options")
    try:
        return QueryRecord.from_json(obj)
    except ExpertRouteError as exc:
        raise SchemaViolation(line_no, str(exc)) from None
    except (TypeError, ValueError, AttributeError) as exc:
        raise SchemaViolation(line_no, f"bad field: {exc}") from None


def _medqa(obj: Any, line_no: int) -> QueryRecord:
    _require(obj, line_no, "question", "options", "answer_idx")
    return _record(
        line_no,
        id=str(obj.get("id", f"medqa-{line_no}")),
        stem=obj["question"],
        options=_letter_options(obj["options"], line_no),
        gold=_gold_letter(obj["answer_idx"], line_no),
        subject=obj.get("meta_info"),
    )


def _subject_from_src(src: str | None) -> str | None:
    if not src:
        return None
    return re.sub(r"^(ori_mmlu|stemez|scibench|theoremqa)-", "", src)


def _mmlupro(obj: Any, line_no: int) -> QueryRecord:
    _require(obj, line_no, "question_id", "question", "options", "answer")
    return _record(
        line_no,
        id=str(obj["question_id"]),
        stem=obj["question"],
        options=_letter_options(obj["options"], line_no),
        gold=_gold_letter(obj["answer"], line_no),
        subject=_subject_from_src(obj.get("src")) or obj.get("category"),
    )


def _nejm(obj: Any, line_no: int) -> QueryRecord:
    _require(obj, line_no, "id", "question", "options", "answer")
    return _record(
        line_no,
        id=str(obj["id"]),
        stem=obj["question"],
        options=_letter_options(obj["options"], line_no),
        gold=_gold_letter(obj["answer"], line_no),
        subject=obj.get("subject"),
    )


_LOADERS: dict[str, Callable[[Any, int], QueryRecord]] = {
    "canonical": _canonical,
    "medqa": _medqa,
    "mmlupro": _mmlupro,
    "nejm": _nejm,
}


def ingest(source_path: str | Path, schema: str = "canonical") -> list[QueryRecord]:
    """Load and normalise a dataset file; ids must be unique."""
    if schema not in _LOADERS:
        raise ValueError(f"unknown schema {schema!r}; expected one of {SCHEMAS}")
    load = _LOADERS[schema]
    records: list[QueryRecord] = []
    seen: set[str] = set()
    for line_no, obj in _items(Path(source_path)):
        rec = load(obj, line_no)
        if rec.id in seen:
            raise SchemaViolation(line_no, f"duplicate id {rec.id!r}")
        seen.add(rec.id)
        records.append(rec)
    return records
