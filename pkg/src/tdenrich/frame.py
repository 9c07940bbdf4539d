"""Columnar, nullable frame: the dataset that flows through a pipeline.

A :class:`Frame` is an immutable, ordered collection of named columns over a
sequence of stable row identifiers. Cells are scalars (``str``, ``int``,
``float``, ``bool``) or ``None`` for a missing value; ``None`` and ``""`` are
different things. Every column is homogeneous apart from nulls.
"""

from __future__ import annotations

import math
from typing import Any, Iterable, Iterator, Mapping, Sequence, Union

from .canonical import digest as _digest
from .errors import DuplicateColumn, LengthMismatch, TypeMismatch, UnknownColumn

Cell = Union[str, int, float, bool, None]

INT64_MIN = -(2**63)
INT64_MAX = 2**63 - 1

DTYPES = ("str", "int", "float", "bool", "null")


def normalize_cell(value: Any) -> Cell:
    """Coerce numpy scalars to Python scalars and check the cell domain."""
    if value is None or isinstance(value, str):
        return value
    if hasattr(value, "item") and not isinstance(value, (bool, int, float)):
        value = value.item()
    if isinstance(value, bool):
        return value
    if isinstance(value, int):
        if not INT64_MIN <= value <= INT64_MAX:
            raise TypeMismatch(f"integer {value} outside the signed 64-bit range")
        return value
    if isinstance(value, float):
        if not math.isfinite(value):
            raise TypeMismatch(f"non-finite float {value!r} is not a valid cell")
        return value
    raise TypeMismatch(f"unsupported cell type {type(value).__name__}: {value!r}")


def cell_dtype(value: Cell) -> str:
    if value is None:
        return "null"
    if isinstance(value, bool):
        return "bool"
    if isinstance(value, int):
        return "int"
    if isinstance(value, float):
        return "float"
    return "str"


class Column:
    """A named, immutable sequence of cells."""

    __slots__ = ("name", "cells", "_dtype")

    def __init__(self, name: str, cells: Iterable[Any] = ()):
        if not isinstance(name, str) or not name:
            raise ValueError("column name must be a non-empty string")
        normalized = tuple(normalize_cell(v) for v in cells)
        kinds = {cell_dtype(v) for v in normalized} - {"null"}
        if len(kinds) > 1:
            raise TypeMismatch(f"column {name!r} mixes cell types {sorted(kinds)}")
        object.__setattr__(self, "name", name)
        object.__setattr__(self, "cells", normalized)
        object.__setattr__(self, "_dtype", kinds.pop() if kinds else "null")

    @property
    def dtype(self) -> str:
        """Cell type shared by all non-null cells, ``"null"`` if there are none."""
        return self._dtype

    def __len__(self) -> int:
        return len(self.cells)

    def __iter__(self) -> Iterator[Cell]:
        return iter(self.cells)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Column):
            return NotImplemented
        return self.name == other.name and _strict_eq(self.cells, other.cells)

    def __hash__(self) -> int:
        return hash((self.name, len(self.cells)))

    def __setattr__(self, key, value):
        raise AttributeError("Column is immutable")

    def __repr__(self) -> str:
        return f"Column({self.name!r}, {list(self.cells)!r})"


def _strict_eq(a: Sequence[Cell], b: Sequence[Cell]) -> bool:
    # 1 == 1.0 == True in Python; cells of different types must not compare equal
    if len(a) != len(b):
        return False
    return all(type(x) is type(y) and x == y for x, y in zip(a, b))


class Frame:
    """Immutable table of named, nullable columns over stable row ids."""

    __slots__ = ("_columns", "_index", "_row_ids")

    def __init__(self, columns: Iterable[Column] = (), row_ids: Iterable[int] | None = None):
        cols = tuple(columns)
        index: dict[str, int] = {}
        for i, col in enumerate(cols):
            if col.name in index:
                raise DuplicateColumn(col.name)
            index[col.name] = i
        if row_ids is None:
            n = len(cols[0]) if cols else 0
            ids = tuple(range(n))
        else:
            ids = tuple(int(r) for r in row_ids)
            if len(set(ids)) != len(ids):
                raise ValueError("row ids must be unique")
        for col in cols:
            if len(col) != len(ids):
                raise LengthMismatch(col.name, len(ids), len(col))
        self._columns = cols
        self._index = index
        self._row_ids = ids

    # -- construction -------------------------------------------------------

    @classmethod
    def from_dict(cls, data: Mapping[str, Iterable[Any]], row_ids: Iterable[int] | None = None) -> Frame:
        return cls((Column(name, cells) for name, cells in data.items()), row_ids)

    @classmethod
    def from_records(
        cls,
        records: Iterable[Mapping[str, Any]],
        columns: Sequence[str] | None = None,
        row_ids: Iterable[int] | None = None,
    ) -> Frame:
        """Build a frame from row dicts; absent keys become null cells."""
        records = list(records)
        if columns is None:
            seen: dict[str, None] = {}
            for rec in records:
                for key in rec:
                    seen.setdefault(key, None)
            columns = list(seen)
        cols = [Column(name, (rec.get(name) for rec in records)) for name in columns]
        return cls(cols, row_ids if row_ids is not None else range(len(records)))

    # -- accessors ----------------------------------------------------------

    @property
    def column_names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self._columns)

    @property
    def columns(self) -> tuple[Column, ...]:
        return self._columns

    @property
    def row_ids(self) -> tuple[int, ...]:
        return self._row_ids

    @property
    def num_rows(self) -> int:
        return len(self._row_ids)

    def __len__(self) -> int:
        return len(self._row_ids)

    def __contains__(self, name: object) -> bool:
        return name in self._index

    def column(self, name: str) -> Column:
        try:
            return self._columns[self._index[name]]
        except KeyError:
            raise UnknownColumn(name) from None

    def __getitem__(self, name: str) -> tuple:
        return self.column(name).cells

    def records(self) -> Iterator[dict[str, Cell]]:
        names = self.column_names
        cells = [c.cells for c in self._columns]
        for i in range(self.num_rows):
            yield {name: col[i] for name, col in zip(names, cells)}

    def to_dict(self) -> dict[str, list[Cell]]:
        return {c.name: list(c.cells) for c in self._columns}

    def schema(self) -> list[list[str]]:
        return [[c.name, c.dtype] for c in self._columns]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Frame):
            return NotImplemented
        return self._row_ids == other._row_ids and self._columns == other._columns

    def __repr__(self) -> str:
        return f"Frame(rows={self.num_rows}, columns={list(self.column_names)})"

    # -- derivation ---------------------------------------------------------

    def add_column(self, column: Column) -> Frame:
        if column.name in self._index:
            raise DuplicateColumn(column.name)
        if len(column) != self.num_rows:
            raise LengthMismatch(column.name, self.num_rows, len(column))
        return Frame(self._columns + (column,), self._row_ids)

    def replace_column(self, column: Column) -> Frame:
        """Swap in a new column under an existing name (privacy transforms only)."""
        pos = self._index.get(column.name)
        if pos is None:
            raise UnknownColumn(column.name)
        if len(column) != self.num_rows:
            raise LengthMismatch(column.name, self.num_rows, len(column))
        cols = list(self._columns)
        cols[pos] = column
        return Frame(cols, self._row_ids)

    def drop_columns(self, names: Iterable[str]) -> Frame:
        names = set(names)
        missing = names - set(self._index)
        if missing:
            raise UnknownColumn(sorted(missing))
        return Frame((c for c in self._columns if c.name not in names), self._row_ids)

    def take(self, positions: Sequence[int]) -> Frame:
        """Sub-view of the given row positions, keeping their row ids."""
        cols = [Column(c.name, (c.cells[p] for p in positions)) for c in self._columns]
        return Frame(cols, (self._row_ids[p] for p in positions))

    def digest(self) -> str:
        """SHA-256 over the canonical JSON form: names, typed cells and row ids."""
        return _digest(
            {
                "columns": [[c.name, list(c.cells)] for c in self._columns],
                "row_ids": list(self._row_ids),
            }
        )


def add_column(frame: Frame, column: Column) -> Frame:
    return frame.add_column(column)


def non_null_positions(frame: Frame, required: Iterable[str]) -> list[int]:
    required = list(required)
    missing = [name for name in required if name not in frame]
    if missing:
        raise UnknownColumn(missing)
    cols = [frame[name] for name in required]
    return [i for i in range(frame.num_rows) if all(col[i] is not None for col in cols)]


def project_non_null(frame: Frame, required: Iterable[str]) -> tuple[Frame, tuple[int, ...]]:
    """Rows where every ``required`` column is non-null.

    Returns the sub-view and its alignment: ``alignment[i]`` is the original
    row id of sub-view row ``i``.
    """
    positions = non_null_positions(frame, required)
    if len(positions) == frame.num_rows:
        return frame, frame.row_ids
    view = frame.take(positions)
    return view, view.row_ids
