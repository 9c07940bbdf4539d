"""Reading and writing frames as CSV (RFC 4180) or JSON Lines.

CSV conventions: the header row is mandatory, a null cell is an unquoted empty
field and an empty string is written as ``""``. CSV carries no types, so
:func:`write_frame` also writes a ``<file>.schema.json`` sidecar with the
column types and row ids. Without a sidecar every CSV column is read as text
and row ids are ``0..n-1``.

JSONL: one object per row; ``null`` or an absent key is a null cell.
"""

from __future__ import annotations

import json
import os
import re
from pathlib import Path
from typing import Any

from ._fs import atomic_write_bytes
from .errors import IoError, ParseError, TypeMismatch
from .frame import Column, Frame

FORMATS = ("csv", "jsonl")
SIDECAR_SUFFIX = ".schema.json"

_QUOTED = re.compile(r'"([^"]*(?:""[^"]*)*)"')
_BARE = re.compile(r'[^,"\r\n]*')
_NEEDS_QUOTES = re.compile(r'[,"\r\n]')


def detect_format(path: str | os.PathLike) -> str:
    suffix = Path(path).suffix.lower().lstrip(".")
    if suffix in ("jsonl", "ndjson"):
        return "jsonl"
    if suffix == "csv":
        return "csv"
    raise ValueError(f"cannot infer frame format from {str(path)!r}; pass format='csv' or 'jsonl'")


# -- CSV --------------------------------------------------------------------


def _quote(text: str) -> str:
    if text == "" or _NEEDS_QUOTES.search(text):
        return '"' + text.replace('"', '""') + '"'
    return text


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, int):
        return str(value)
    return _quote(value)


def dumps_csv(frame: Frame) -> str:
    lines = [",".join(_quote(name) for name in frame.column_names)]
    cols = [c.cells for c in frame.columns]
    for i in range(frame.num_rows):
        lines.append(",".join(_format_cell(col[i]) for col in cols))
    return "\r\n".join(lines) + "\r\n"


def _tokenize_csv(text: str, path=None) -> list[tuple[int, list[tuple[str, bool]]]]:
    """Split CSV text into records of ``(value, was_quoted)`` fields."""
    records = []
    pos, n, line = 0, len(text), 1
    while pos < n:
        fields: list[tuple[str, bool]] = []
        record_line = line
        field_no = 1
        while True:
            if text.startswith('"', pos):
                m = _QUOTED.match(text, pos)
                if m is None:
                    raise ParseError("unterminated quoted field", line, field_no, path)
                raw = m.group(1)
                line += raw.count("\n")
                fields.append((raw.replace('""', '"'), True))
            else:
                m = _BARE.match(text, pos)
                fields.append((m.group(0), False))
            pos = m.end()
            if pos >= n:
                break
            ch = text[pos]
            if ch == ",":
                pos += 1
                field_no += 1
                continue
            if ch == "\r" or ch == "\n":
                pos += 2 if text.startswith("\r\n", pos) else 1
                line += 1
                break
            raise ParseError(f"unexpected {ch!r} after field", line, field_no, path)
        records.append((record_line, fields))
    return records


def _parse_typed(value: str, quoted: bool, dtype: str, line: int, col: int, path) -> Any:
    if not quoted and value == "":
        return None
    try:
        if dtype == "str":
            return value
        if quoted:
            raise ValueError("quoted field in a non-text column")
        if dtype == "int":
            return int(value)
        if dtype == "float":
            return float(value)
        if dtype == "bool":
            if value not in ("true", "false"):
                raise ValueError(f"expected true/false, got {value!r}")
            return value == "true"
        raise ValueError(f"non-null value {value!r} in an all-null column")
    except ValueError as exc:
        raise ParseError(str(exc), line, col, path) from None


def loads_csv(text: str, schema: dict | None = None, path=None) -> Frame:
    records = _tokenize_csv(text, path)
    if not records:
        raise ParseError("missing header row", 1, None, path)
    header_line, header = records[0]
    names = [value for value, _ in header]
    width = len(names)
    body = records[1:]
    for line, fields in body:
        if len(fields) != width:
            raise ParseError(f"expected {width} fields, found {len(fields)}", line, None, path)
    if schema is None:
        dtypes = ["str"] * width
        row_ids = None
    else:
        declared = [name for name, _ in schema["columns"]]
        if declared != names:
            raise ParseError(f"header {names} does not match schema {declared}", header_line, None, path)
        dtypes = [dtype for _, dtype in schema["columns"]]
        row_ids = schema.get("row_ids")
        if row_ids is not None and len(row_ids) != len(body):
            raise ParseError(f"schema lists {len(row_ids)} row ids for {len(body)} rows", header_line, None, path)
    columns = []
    for j, name in enumerate(names):
        dtype = dtypes[j]
        cells = [_parse_typed(fields[j][0], fields[j][1], dtype, line, j + 1, path) for line, fields in body]
        columns.append(Column(name, cells))
    return Frame(columns, row_ids)


# -- JSONL ------------------------------------------------------------------


def dumps_jsonl(frame: Frame) -> str:
    return "".join(json.dumps(rec, ensure_ascii=False, allow_nan=False) + "\n" for rec in frame.records())


def loads_jsonl(text: str, schema: dict | None = None, path=None) -> Frame:
    records = []
    for lineno, raw in enumerate(text.split("\n"), start=1):
        if not raw.strip():
            continue
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ParseError(exc.msg, lineno, exc.colno, path) from None
        if not isinstance(obj, dict):
            raise ParseError("expected a JSON object", lineno, 1, path)
        for key, value in obj.items():
            if isinstance(value, (dict, list)):
                raise ParseError(f"nested value for {key!r} is not a scalar cell", lineno, None, path)
        records.append(obj)
    columns = None
    row_ids = None
    if schema is not None:
        columns = [name for name, _ in schema["columns"]]
        row_ids = schema.get("row_ids")
        if row_ids is not None and len(row_ids) != len(records):
            raise ParseError(f"schema lists {len(row_ids)} row ids for {len(records)} rows", 1, None, path)
    try:
        frame = Frame.from_records(records, columns=columns, row_ids=row_ids)
    except TypeMismatch as exc:
        raise ParseError(str(exc), 0, None, path) from None
    if schema is not None:
        for (name, dtype), col in zip(schema["columns"], frame.columns):
            if col.dtype not in (dtype, "null"):
                raise ParseError(f"column {name!r} holds {col.dtype} cells, schema says {dtype}", 0, None, path)
    return frame


# -- files ------------------------------------------------------------------


def frame_schema(frame: Frame) -> dict:
    return {"format_version": 1, "columns": frame.schema(), "row_ids": list(frame.row_ids)}


def dumps_frame(frame: Frame, format: str) -> str:
    if format == "csv":
        return dumps_csv(frame)
    if format == "jsonl":
        return dumps_jsonl(frame)
    raise ValueError(f"unknown frame format {format!r}; expected one of {FORMATS}")


def loads_frame(text: str, format: str, schema: dict | None = None, path=None) -> Frame:
    if format == "csv":
        return loads_csv(text, schema, path)
    if format == "jsonl":
        return loads_jsonl(text, schema, path)
    raise ValueError(f"unknown frame format {format!r}; expected one of {FORMATS}")


def write_frame(frame: Frame, path: str | os.PathLike, format: str | None = None, *, sidecar: bool = True) -> None:
    format = format or detect_format(path)
    data = dumps_frame(frame, format).encode("utf-8")
    try:
        atomic_write_bytes(path, data)
        if sidecar:
            sidecar_data = json.dumps(frame_schema(frame), ensure_ascii=False).encode("utf-8")
            atomic_write_bytes(str(path) + SIDECAR_SUFFIX, sidecar_data)
    except OSError as exc:
        raise IoError(f"cannot write frame to {path}: {exc}") from exc


def read_frame(path: str | os.PathLike, format: str | None = None, *, sidecar: bool | None = None) -> Frame:
    """Read a frame; ``sidecar=None`` uses the schema sidecar when it exists."""
    format = format or detect_format(path)
    sidecar_path = Path(str(path) + SIDECAR_SUFFIX)
    schema = None
    try:
        # newline="" keeps CR/LF inside quoted fields intact
        with open(path, encoding="utf-8", newline="") as fh:
            text = fh.read()
        if sidecar or (sidecar is None and sidecar_path.exists()):
            schema = json.loads(sidecar_path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise IoError(f"cannot read frame from {path}: {exc}") from exc
    if text.startswith("\ufeff"):
        text = text[1:]
    return loads_frame(text, format, schema, path)
