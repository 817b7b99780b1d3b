"""Columnar data frames and the tidy-pipeline operators.

A :class:`Frame` is an ordered set of equal-length typed columns plus
optional (non-unique) row labels. Frames are immutable; every operation
returns a new one. :class:`GroupedFrame` carries a partition of the rows and
drives split-apply-combine, bootstrap replication and factorial inflation.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
import os
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator, Mapping, Sequence

import numpy as np

from .errors import (
    ArgumentError,
    ColumnTypeError,
    CombineError,
    FitError,
    GroupFitError,
    ParseError,
    SchemaError,
)
from .rng import Xoshiro256

KINDS = ("float", "int", "text", "bool")

_FILL = {"float": np.nan, "int": 0, "text": "", "bool": False}
_DTYPE = {"float": np.float64, "int": np.int64, "text": object, "bool": np.bool_}


def _kind_of_dtype(dtype):
    k = np.dtype(dtype).kind
    if k == "f":
        return "float"
    if k in "iu":
        return "int"
    if k == "b":
        return "bool"
    if k in "USO":
        return "text"
    raise ColumnTypeError(f"unsupported column dtype {dtype}")


def _kind_of_scalars(values):
    if all(isinstance(v, (bool, np.bool_)) for v in values):
        return "bool"
    if all(isinstance(v, (int, np.integer)) and not isinstance(v, (bool, np.bool_)) for v in values):
        return "int"
    if all(isinstance(v, (int, float, np.integer, np.floating)) and not isinstance(v, (bool, np.bool_))
           for v in values):
        return "float"
    if all(isinstance(v, str) for v in values):
        return "text"
    raise ColumnTypeError("column mixes incompatible value types")


def _coerce(values, kind=None):
    """Turn array-like ``values`` into ``(array, mask)``; mask is None when no nulls."""
    if isinstance(values, np.ndarray) and values.dtype.kind in "fiub" and kind in (None, _kind_of_dtype(values.dtype)):
        k = _kind_of_dtype(values.dtype)
        arr = np.array(values, dtype=_DTYPE[k]).reshape(-1)
        arr.setflags(write=False)
        return k, arr, None
    items = list(np.asarray(values, dtype=object).reshape(-1)) if isinstance(values, np.ndarray) else list(values)
    null = [v is None for v in items]
    present = [v for v in items if v is not None]
    if kind is None:
        kind = _kind_of_scalars(present) if present else "text"
    fill = _FILL[kind]
    try:
        if kind == "text":
            filled = [fill if v is None else str(v) for v in items]
        else:
            filled = [fill if v is None else v for v in items]
        arr = np.empty(len(items), dtype=object) if kind == "text" else None
        if kind == "text":
            arr[:] = filled
        else:
            arr = np.array(filled, dtype=_DTYPE[kind])
    except (TypeError, ValueError) as exc:
        raise ColumnTypeError(f"cannot store values as {kind}: {exc}") from None
    arr.setflags(write=False)
    mask = np.array(null, dtype=bool) if any(null) else None
    if mask is not None:
        mask.setflags(write=False)
    return kind, arr, mask


@dataclass(frozen=True, eq=False)
class Column:
    name: str
    kind: str
    values: np.ndarray
    mask: np.ndarray | None = None

    @classmethod
    def build(cls, name, values, kind=None):
        if not isinstance(name, str) or not name:
            raise SchemaError("column names must be non-empty strings")
        kind, arr, mask = _coerce(values, kind)
        return cls(name, kind, arr, mask)

    def __len__(self):
        return len(self.values)

    @property
    def is_numeric(self):
        return self.kind in ("float", "int")

    def is_null(self, i):
        return self.mask is not None and bool(self.mask[i])

    def take(self, idx):
        vals = self.values[idx]
        vals.setflags(write=False)
        mask = None
        if self.mask is not None:
            mask = self.mask[idx]
            mask = mask if mask.any() else None
        return Column(self.name, self.kind, vals, mask)

    def renamed(self, name):
        return Column(name, self.kind, self.values, self.mask)

    def to_list(self):
        out = self.values.tolist()
        if self.mask is not None:
            out = [None if m else v for v, m in zip(out, self.mask)]
        return out

    def same_as(self, other):
        if self.name != other.name or self.kind != other.kind or len(self) != len(other):
            return False
        m1 = self.mask if self.mask is not None else np.zeros(len(self), bool)
        m2 = other.mask if other.mask is not None else np.zeros(len(other), bool)
        if not np.array_equal(m1, m2):
            return False
        a, b = self.values[~m1], other.values[~m2]
        if self.kind == "float":
            return bool(np.all((a == b) | (np.isnan(a) & np.isnan(b))))
        return bool(np.all(a == b))


class Frame:
    """Ordered, named, equal-length typed columns.

    ``columns`` is a mapping of name to values (lists or numpy arrays, ``None``
    for nulls) or an iterable of :class:`Column`.
    """

    def __init__(self, columns=None, row_labels=None, n_rows=None):
        cols = []
        if columns is None:
            columns = {}
        if isinstance(columns, Mapping):
            cols = [v if isinstance(v, Column) and v.name == k else Column.build(k, v)
                    for k, v in columns.items()]
        else:
            cols = list(columns)
        names = [c.name for c in cols]
        dup = {n for n in names if names.count(n) > 1}
        if dup:
            raise SchemaError(f"duplicate column names: {sorted(dup)}")
        lengths = {len(c) for c in cols}
        if len(lengths) > 1:
            raise SchemaError(f"columns have unequal lengths {sorted(lengths)}")
        if lengths:
            n = lengths.pop()
            if n_rows is not None and n_rows != n:
                raise SchemaError("n_rows disagrees with column length")
        else:
            n = 0 if n_rows is None else n_rows
            if row_labels is not None:
                n = len(row_labels)
        if row_labels is not None:
            labels = np.empty(len(row_labels), dtype=object)
            labels[:] = [str(v) for v in row_labels]
            if len(labels) != n:
                raise SchemaError(f"{len(labels)} row labels for {n} rows")
            labels.setflags(write=False)
            row_labels = labels
        self._cols = {c.name: c for c in cols}
        self._n = n
        self.row_labels = row_labels

    # -- basic access -------------------------------------------------------

    @property
    def names(self) -> list[str]:
        return list(self._cols)

    @property
    def n_rows(self) -> int:
        return self._n

    @property
    def columns(self) -> list[Column]:
        return list(self._cols.values())

    @property
    def kinds(self) -> dict[str, str]:
        return {n: c.kind for n, c in self._cols.items()}

    def __len__(self):
        return self._n

    def __contains__(self, name):
        return name in self._cols

    def column(self, name) -> Column:
        try:
            return self._cols[name]
        except KeyError:
            raise SchemaError(f"no column named {name!r}; have {self.names}") from None

    def __getitem__(self, name) -> np.ndarray:
        return self.column(name).values

    def numeric(self, name) -> np.ndarray:
        """Column as float64, refusing text/bool columns and nulls."""
        col = self.column(name)
        if not col.is_numeric:
            raise ColumnTypeError(f"column {name!r} is {col.kind}, not numeric")
        if col.mask is not None:
            bad = int(np.flatnonzero(col.mask)[0])
            raise ColumnTypeError(f"column {name!r} has a null at row {bad + 1}")
        return col.values.astype(np.float64)

    def __repr__(self):
        return f"<Frame {self._n} x {len(self._cols)}>\n{self.to_text(max_rows=10)}"

    def to_text(self, max_rows=None):
        shown = self if max_rows is None or self._n <= max_rows else self.take(np.arange(max_rows))
        header = ([".rownames"] if self.row_labels is not None else []) + self.names
        body = []
        for i in range(shown.n_rows):
            row = [shown.row_labels[i]] if shown.row_labels is not None else []
            for c in shown.columns:
                v = None if c.is_null(i) else c.values[i]
                row.append("NA" if v is None else (f"{v:.7g}" if c.kind == "float" else str(v)))
            body.append(row)
        widths = [max([len(h)] + [len(r[j]) for r in body]) for j, h in enumerate(header)]
        lines = [" ".join(h.rjust(w) for h, w in zip(header, widths))]
        lines += [" ".join(v.rjust(w) for v, w in zip(r, widths)) for r in body]
        if shown.n_rows < self._n:
            lines.append(f"... {self._n - shown.n_rows} more rows")
        return "\n".join(lines)

    def to_records(self, include_row_labels=False) -> list[dict]:
        cols = [(c.name, c.to_list()) for c in self.columns]
        out = []
        for i in range(self._n):
            rec = {}
            if include_row_labels and self.row_labels is not None:
                rec[".rownames"] = self.row_labels[i]
            for name, vals in cols:
                rec[name] = vals[i]
            out.append(rec)
        return out

    def equals(self, other) -> bool:
        if not isinstance(other, Frame) or self.names != other.names or self._n != other._n:
            return False
        if (self.row_labels is None) != (other.row_labels is None):
            return False
        if self.row_labels is not None and list(self.row_labels) != list(other.row_labels):
            return False
        return all(a.same_as(b) for a, b in zip(self.columns, other.columns))

    # -- derivation -----------------------------------------------------------

    def take(self, idx) -> Frame:
        idx = np.asarray(idx, dtype=np.int64)
        labels = None if self.row_labels is None else self.row_labels[idx]
        return Frame([c.take(idx) for c in self.columns], row_labels=labels, n_rows=len(idx))

    def head(self, n=6) -> Frame:
        return self.take(np.arange(min(n, self._n)))

    def select(self, names: Sequence[str]) -> Frame:
        return Frame([self.column(n) for n in names], row_labels=self.row_labels, n_rows=self._n)

    def drop(self, names: Iterable[str]) -> Frame:
        names = set(names)
        return Frame([c for c in self.columns if c.name not in names], row_labels=self.row_labels, n_rows=self._n)

    def with_column(self, name, values, kind=None, first=False) -> Frame:
        """Add or replace a column (appended, or prepended with ``first``)."""
        if np.isscalar(values) or values is None:
            values = [values] * self._n
        col = Column.build(name, values, kind)
        if len(col) != self._n:
            raise SchemaError(f"column {name!r} has {len(col)} values for {self._n} rows")
        rest = [c for c in self.columns if c.name != name]
        if name in self._cols and not first:
            cols = [col if c.name == name else c for c in self.columns]
        else:
            cols = [col] + rest if first else rest + [col]
        return Frame(cols, row_labels=self.row_labels, n_rows=self._n)

    def without_row_labels(self) -> Frame:
        return Frame(self.columns, n_rows=self._n)

    def sort_by(self, names, descending=False) -> Frame:
        """Stable sort on one or more columns; nulls sort as the largest value."""
        if isinstance(names, str):
            names = [names]
        codes = [_sort_codes(self.column(n)) for n in names]
        if descending:
            # negate codes rather than reversing the order, to stay stable
            codes = [-c for c in codes]
        order = np.lexsort(codes[::-1]) if codes else np.arange(self._n)
        return self.take(order)

    @staticmethod
    def concat(frames: Sequence[Frame]) -> Frame:
        frames = list(frames)
        if not frames:
            return Frame()
        names = frames[0].names
        kinds = frames[0].kinds
        for i, f in enumerate(frames[1:], start=1):
            if f.names != names or f.kinds != kinds:
                raise CombineError(f"frame {i} has schema {f.kinds}, expected {kinds}")
        cols = []
        for name in names:
            parts = [f.column(name) for f in frames]
            vals = np.concatenate([p.values for p in parts]) if parts else np.array([])
            if kinds[name] == "text":
                vals = vals.astype(object)
            if any(p.mask is not None for p in parts):
                mask = np.concatenate([p.mask if p.mask is not None else np.zeros(len(p), bool) for p in parts])
            else:
                mask = None
            vals.setflags(write=False)
            cols.append(Column(name, kinds[name], vals, mask))
        labels = None
        if all(f.row_labels is not None for f in frames):
            labels = np.concatenate([f.row_labels for f in frames])
        return Frame(cols, row_labels=labels, n_rows=sum(f.n_rows for f in frames))


def _sort_codes(col: Column) -> np.ndarray:
    """Integer codes that sort like the column values; nulls sort last."""
    if col.kind == "text":
        uniq, inv = np.unique(col.values.astype(str), return_inverse=True)
    else:
        uniq, inv = np.unique(col.values, return_inverse=True)
    inv = inv.reshape(-1).astype(np.int64)
    if col.mask is not None:
        inv = np.where(col.mask, len(uniq), inv)
    return inv


# ---------------------------------------------------------------------------
# CSV / JSON-lines I/O
# ---------------------------------------------------------------------------

NULL_TOKENS = {"", "NA"}
_INT_RE = re.compile(r"^[+-]?\d+$")
_FLOAT_RE = re.compile(r"^[+-]?(\d+\.?\d*([eE][+-]?\d+)?|\.\d+([eE][+-]?\d+)?|Inf|inf|NaN|nan)$")
_BOOL = {"TRUE": True, "FALSE": False, "true": True, "false": False, "True": True, "False": False}


def _infer_kind(tokens):
    present = [t for t in tokens if t not in NULL_TOKENS]
    if not present:
        return "text"
    if all(t in _BOOL for t in present):
        return "bool"
    if all(_INT_RE.match(t) and -(2 ** 63) <= int(t) < 2 ** 63 for t in present):
        return "int"
    if all(_FLOAT_RE.match(t) for t in present):
        return "float"
    return "text"


def _parse_token(tok, kind):
    if tok in NULL_TOKENS:
        return None
    if kind == "int":
        return int(tok)
    if kind == "float":
        return float(tok)
    if kind == "bool":
        return _BOOL[tok]
    return tok


def _open_text(source):
    if isinstance(source, (str, os.PathLike)):
        return open(source, newline="", encoding="utf-8"), True
    if isinstance(source, (bytes, bytearray)):
        return io.StringIO(bytes(source).decode("utf-8"), newline=""), True
    if isinstance(source, io.TextIOBase) or hasattr(source, "encoding"):
        return source, False
    return io.TextIOWrapper(source, encoding="utf-8", newline=""), False


def read_csv(source, delimiter=",", header=True, rownames=None) -> Frame:
    """Read delimited text into a Frame.

    ``source`` is a path, raw bytes, or a text/binary file object. Column types
    are inferred per column (int, then float, then text; ``TRUE``/``FALSE``
    columns become bool). Empty fields and ``NA`` are nulls. ``rownames`` names
    a column to move into the row labels; a blank first header is treated the
    same way (R's ``write.csv`` layout).
    """
    fh, close = _open_text(source)
    try:
        rows = [r for r in csv.reader(fh, delimiter=delimiter) if r]
    except csv.Error as exc:
        raise ParseError(str(exc)) from None
    finally:
        if close:
            fh.close()
    if header:
        if not rows:
            raise ParseError("no header line")
        names, rows = rows[0], rows[1:]
        if names and names[0] == "" and rownames is None:
            names = [".rownames"] + names[1:]
            rownames = ".rownames"
    else:
        width = len(rows[0]) if rows else 0
        names = [f"V{j + 1}" for j in range(width)]
    width = len(names)
    for i, r in enumerate(rows):
        if len(r) != width:
            raise ParseError(f"expected {width} fields, found {len(r)}", row=i + 1 + int(header))
    if any(n == "" for n in names):
        raise SchemaError("empty column name in header")
    dup = sorted({n for n in names if names.count(n) > 1})
    if dup:
        raise SchemaError(f"duplicate header names: {dup}")
    if rownames is not None and rownames not in names:
        raise SchemaError(f"row-name column {rownames!r} not found in header")
    cols, labels = [], None
    for j, name in enumerate(names):
        tokens = [r[j] for r in rows]
        if name == rownames:
            labels = tokens
            continue
        kind = _infer_kind(tokens)
        cols.append(Column.build(name, [_parse_token(t, kind) for t in tokens], kind))
    return Frame(cols, row_labels=labels, n_rows=len(rows))


def format_float(v) -> str:
    """17-significant-digit rendering that always reads back as a float."""
    if math.isnan(v):
        return "NaN"
    if math.isinf(v):
        return "Inf" if v > 0 else "-Inf"
    s = format(v, ".17g")
    if not any(ch in s for ch in ".e"):
        s += ".0"
    return s


def _cell_strings(col: Column):
    vals = col.values
    if col.kind == "float":
        out = [format_float(v) for v in vals.tolist()]
    elif col.kind == "bool":
        out = ["TRUE" if v else "FALSE" for v in vals.tolist()]
    else:
        out = [str(v) for v in vals.tolist()]
    if col.mask is not None:
        out = ["" if m else s for s, m in zip(out, col.mask)]
    return out


def write_csv(frame: Frame, dest=None, include_row_labels=False, delimiter=",") -> str | None:
    """Serialize ``frame``; returns the text when ``dest`` is None.

    Nulls are written as empty fields. Row labels become a leading
    ``.rownames`` column when requested.
    """
    buf = io.StringIO()
    w = csv.writer(buf, delimiter=delimiter, lineterminator="\n")
    labels = include_row_labels and frame.row_labels is not None
    w.writerow(([".rownames"] if labels else []) + frame.names)
    cells = [_cell_strings(c) for c in frame.columns]
    for i in range(frame.n_rows):
        w.writerow(([frame.row_labels[i]] if labels else []) + [c[i] for c in cells])
    text = buf.getvalue()
    if dest is None:
        return text
    if isinstance(dest, (str, os.PathLike)):
        with open(dest, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        dest.write(text)
    return None


def _json_value(v):
    if isinstance(v, float):
        if math.isnan(v):
            return "NaN"
        if math.isinf(v):
            return "Inf" if v > 0 else "-Inf"
    return v


def write_jsonl(frame: Frame, dest=None) -> str | None:
    """One JSON object per row; ``.rownames`` leads when labels exist.

    Non-finite floats, which JSON cannot carry, are written as the strings
    ``"NaN"``, ``"Inf"`` and ``"-Inf"``; nulls as ``null``.
    """
    lines = [
        json.dumps({k: _json_value(v) for k, v in rec.items()})
        for rec in frame.to_records(include_row_labels=True)
    ]
    text = "".join(line + "\n" for line in lines)
    if dest is None:
        return text
    dest.write(text)
    return None


# ---------------------------------------------------------------------------
# Grouping and split-apply-combine
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GroupedFrame:
    base: Frame
    keys: tuple
    groups: tuple  # of (key-values tuple, row-index array)

    def __len__(self):
        return len(self.groups)

    def __iter__(self) -> Iterator[tuple[dict, Frame]]:
        for key, idx in self.groups:
            yield dict(zip(self.keys, key)), self.base.take(idx)

    @property
    def sizes(self) -> list[int]:
        return [len(idx) for _, idx in self.groups]

    def describe(self, i) -> str:
        key = self.groups[i][0]
        return ", ".join(f"{k}={v}" for k, v in zip(self.keys, key))


def _scalar(col: Column, i):
    if col.is_null(i):
        return None
    return col.values[i].item() if hasattr(col.values[i], "item") else col.values[i]


def group_by(frame: Frame, keys: Sequence[str]) -> GroupedFrame:
    """Partition rows by distinct key tuples, groups sorted by key values."""
    if isinstance(keys, str):
        keys = [keys]
    keys = tuple(keys)
    cols = [frame.column(k) for k in keys]
    n = frame.n_rows
    if n == 0:
        return GroupedFrame(frame, keys, ())
    if not keys:
        return GroupedFrame(frame, keys, (((), np.arange(n)),))
    codes = [_sort_codes(c) for c in cols]
    order = np.lexsort(codes[::-1])
    stacked = np.stack([c[order] for c in codes], axis=1)
    change = np.any(stacked[1:] != stacked[:-1], axis=1)
    starts = np.concatenate([[0], np.flatnonzero(change) + 1, [n]])
    groups = []
    for a, b in zip(starts[:-1], starts[1:]):
        idx = order[a:b]
        idx.setflags(write=False)
        first = int(idx[0])
        groups.append((tuple(_scalar(c, first) for c in cols), idx))
    return GroupedFrame(frame, keys, tuple(groups))


def _key_columns(grouped: GroupedFrame, key, n):
    cols = []
    for name, value in zip(grouped.keys, key):
        kind = grouped.base.column(name).kind
        cols.append(Column.build(name, [value] * n, kind))
    return cols


def _prepend_keys(grouped, key, out: Frame) -> Frame:
    rest = [c for c in out.columns if c.name not in grouped.keys]
    return Frame(_key_columns(grouped, key, out.n_rows) + rest, row_labels=out.row_labels, n_rows=out.n_rows)


def apply_combine(grouped: GroupedFrame, f: Callable[[Frame], Frame], workers: int | None = None) -> Frame:
    """Run ``f`` on each group's sub-frame and stack the results.

    The group's key columns are prepended to each result (replacing any
    same-named column ``f`` returned). Output order follows group order even
    when ``workers > 1`` spreads groups over threads. A fit failure in any
    group aborts the whole run with :class:`GroupFitError` naming the group.
    """

    def run(i):
        key, idx = grouped.groups[i]
        try:
            out = f(grouped.base.take(idx))
        except FitError as exc:
            label = grouped.describe(i) or "all rows"
            raise GroupFitError(f"group {label}: {exc}", group=dict(zip(grouped.keys, key))) from exc
        if not isinstance(out, Frame):
            raise CombineError(f"group {grouped.describe(i)}: function returned {type(out).__name__}, not Frame")
        return _prepend_keys(grouped, key, out)

    n = len(grouped.groups)
    if workers and workers > 1 and n > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, range(n)))
    else:
        parts = [run(i) for i in range(n)]
    if not parts:
        return Frame()
    ref = parts[0]
    for i, p in enumerate(parts[1:], start=1):
        if p.names != ref.names or p.kinds != ref.kinds:
            raise CombineError(
                f"group {grouped.describe(i)} returned columns {p.kinds}; group {grouped.describe(0)} returned {ref.kinds}"
            )
    return Frame.concat(parts)


def _grid_kind(values):
    try:
        return _kind_of_scalars(values)
    except ColumnTypeError:
        raise ArgumentError(f"grid values mix types: {values!r}") from None


def inflate(frame: Frame, grid: Mapping[str, Sequence]) -> GroupedFrame:
    """Repeat ``frame`` once per factorial combination of the grid values.

    Grid columns come first; the first grid entry varies slowest. Each value
    list is taken in sorted order so rows line up with the (sorted) groups.
    """
    grid = dict(grid)
    clash = [k for k in grid if k in frame]
    if clash:
        raise SchemaError(f"grid names collide with existing columns: {clash}")
    levels = {}
    for name, vals in grid.items():
        vals = list(vals)
        if not vals:
            raise ArgumentError(f"grid entry {name!r} has no values")
        if len(set(vals)) != len(vals):
            raise ArgumentError(f"grid entry {name!r} repeats a value")
        kind = _grid_kind(vals)
        levels[name] = (kind, sorted(vals))
    combos = list(itertools.product(*[lv for _, lv in levels.values()]))
    n = frame.n_rows
    idx = np.tile(np.arange(n), len(combos))
    body = frame.take(idx)
    grid_cols = [
        Column.build(name, [c[j] for c in combos for _ in range(n)], kind)
        for j, (name, (kind, _)) in enumerate(levels.items())
    ]
    base = Frame(grid_cols + body.columns, row_labels=body.row_labels, n_rows=len(idx))
    return group_by(base, list(grid))


def bootstrap_replicates(frame: Frame, B: int, seed: int = 2014) -> GroupedFrame:
    """``B`` resamples (with replacement) of the rows, grouped by ``replicate``.

    Draws come from :class:`~tidyfit.rng.Xoshiro256` seeded with ``seed``:
    replicate 1's indices first, then replicate 2's, and so on.
    """
    if B < 1:
        raise ArgumentError("B must be at least 1")
    n = frame.n_rows
    if n < 1:
        raise ArgumentError("cannot bootstrap an empty frame")
    if "replicate" in frame:
        raise SchemaError("frame already has a 'replicate' column")
    rng = Xoshiro256(seed)
    idx = np.array([rng.bounded(n) for _ in range(B * n)], dtype=np.int64)
    body = frame.take(idx)
    rep = np.repeat(np.arange(1, B + 1, dtype=np.int64), n)
    base = Frame([Column.build("replicate", rep)] + body.columns, row_labels=body.row_labels, n_rows=B * n)
    groups = []
    for b in range(B):
        rows = np.arange(b * n, (b + 1) * n)
        rows.setflags(write=False)
        groups.append(((b + 1,), rows))
    return GroupedFrame(base, ("replicate",), tuple(groups))


# ---------------------------------------------------------------------------
# Summaries
# ---------------------------------------------------------------------------


def quantile_type7(values, p) -> float:
    """Sample quantile with linear interpolation between order statistics (R type 7)."""
    v = np.sort(np.asarray(values, dtype=np.float64).reshape(-1))
    if v.size == 0:
        raise ArgumentError("quantile of an empty vector")
    if not np.all(np.isfinite(v)):
        raise ArgumentError("quantile input contains non-finite values")
    if not 0.0 <= p <= 1.0:
        raise ArgumentError(f"probability {p} outside [0, 1]")
    n = v.size
    h = (n - 1) * p
    r = round(h)
    if abs(h - r) <= 4 * np.finfo(float).eps * max(1.0, h):
        h = float(r)
    lo = int(math.floor(h))
    frac = h - lo
    if lo >= n - 1:
        return float(v[-1])
    a, b = float(v[lo]), float(v[lo + 1])
    if frac == 0.0:
        return a
    return min(max(a + frac * (b - a), a), b)


_REDUCERS = {
    "median": lambda x: quantile_type7(x, 0.5),
    "mean": lambda x: float(np.mean(x)),
    "sum": lambda x: float(np.sum(x)),
    "max": lambda x: float(np.max(x)),
    "min": lambda x: float(np.min(x)),
}
_QUANTILE_RE = re.compile(r"^quantile\(\s*([^)]+?)\s*\)$")


def quantile(p):
    """Reducer spec for :func:`aggregate`: ``("quantile", p)``."""
    return ("quantile", float(p))


def _resolve_reducer(reducer):
    if isinstance(reducer, tuple) and reducer[0] == "quantile":
        p = float(reducer[1])
        if not 0 <= p <= 1:
            raise ArgumentError(f"quantile probability {p} outside [0, 1]")
        return lambda x: quantile_type7(x, p)
    if isinstance(reducer, str):
        m = _QUANTILE_RE.match(reducer)
        if m:
            return _resolve_reducer(("quantile", float(m.group(1))))
        if reducer in _REDUCERS:
            return _REDUCERS[reducer]
        if reducer == "count":
            return None
    raise ArgumentError(f"unknown reducer {reducer!r}")


def aggregate(grouped: GroupedFrame, specs: Sequence[tuple]) -> Frame:
    """One row per group: key columns, then one column per ``(out, column, reducer)``.

    Reducers: ``"median"``, ``"mean"``, ``"sum"``, ``"max"``, ``"min"``,
    ``"count"`` and ``quantile(p)`` (or the string ``"quantile(0.025)"``).
    """
    resolved = []
    for out, col, red in specs:
        fn = _resolve_reducer(red)
        if fn is not None:
            c = grouped.base.column(col)
            if not c.is_numeric:
                raise ColumnTypeError(f"reducer {red!r} needs a numeric column; {col!r} is {c.kind}")
            if c.mask is not None:
                raise ColumnTypeError(f"column {col!r} has nulls")
        elif col is not None:
            grouped.base.column(col)
        resolved.append((out, col, fn))
    n = len(grouped.groups)
    out_cols = {}
    for out, col, fn in resolved:
        if fn is None:
            out_cols[out] = Column.build(out, np.array([len(idx) for _, idx in grouped.groups], dtype=np.int64))
        else:
            vals = grouped.base[col].astype(np.float64)
            out_cols[out] = Column.build(out, np.array([fn(vals[idx]) for _, idx in grouped.groups], dtype=np.float64))
    key_cols = [
        Column.build(k, [g[0][j] for g in grouped.groups], grouped.base.column(k).kind)
        for j, k in enumerate(grouped.keys)
    ]
    return Frame(key_cols + list(out_cols.values()), n_rows=n)
