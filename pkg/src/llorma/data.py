"""Sparse rating matrices: ingestion, splitting and the observed-entry projection."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .exceptions import (
    DuplicateError,
    EmptyInputError,
    ParseError,
    RangeError,
    ShapeError,
)

FORMATS = ("movielens-dat", "tsv", "csv")


class RatingTriple(NamedTuple):
    row: int
    col: int
    value: float


@dataclass(frozen=True)
class RatingScale:
    min: float = 1.0
    max: float = 5.0
    default: float = 3.0

    def __post_init__(self):
        if not (self.min <= self.default <= self.max):
            raise ValueError(
                f"rating scale needs min <= default <= max, got {self.min}, {self.default}, {self.max}"
            )

    def clip(self, values):
        return np.clip(values, self.min, self.max)

    def contains(self, values) -> bool:
        values = np.asarray(values, dtype=float)
        return bool(np.all((values >= self.min) & (values <= self.max)))


MOVIELENS_SCALE = RatingScale(1.0, 5.0, 3.0)
UNBOUNDED_SCALE = RatingScale(-math.inf, math.inf, 0.0)


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype, copy=True).reshape(-1)
    a.flags.writeable = False
    return a


class ObservedMatrix:
    """Immutable set of observed ``(row, col, value)`` entries of an
    ``n_rows x n_cols`` matrix.

    Entries are stored as three parallel arrays. Per-row and per-column
    indices are built lazily and cached; all arrays are read-only so an
    instance can be shared between threads.

    ``row_ids`` / ``col_ids`` optionally hold the external identifiers of
    each dense index (as strings) so results can be written back in the
    original id space.
    """

    def __init__(
        self,
        rows,
        cols,
        values,
        n_rows: int,
        n_cols: int,
        scale: RatingScale = MOVIELENS_SCALE,
        row_ids: Sequence[str] | None = None,
        col_ids: Sequence[str] | None = None,
    ):
        self.rows = _frozen(rows, np.int64)
        self.cols = _frozen(cols, np.int64)
        self.values = _frozen(values, np.float64)
        self.n_rows = int(n_rows)
        self.n_cols = int(n_cols)
        self.scale = scale
        self.row_ids = tuple(row_ids) if row_ids is not None else None
        self.col_ids = tuple(col_ids) if col_ids is not None else None
        self._row_index = None
        self._col_index = None
        self._validate()

    def _validate(self):
        m = len(self.rows)
        if len(self.cols) != m or len(self.values) != m:
            raise ShapeError("rows, cols and values must have the same length")
        if self.n_rows < 0 or self.n_cols < 0:
            raise ShapeError("matrix dimensions must be non-negative")
        if m > self.n_rows * self.n_cols:
            raise ShapeError("more entries than matrix cells")
        if m:
            if self.rows.min() < 0 or self.rows.max() >= self.n_rows:
                raise ShapeError("row index out of range")
            if self.cols.min() < 0 or self.cols.max() >= self.n_cols:
                raise ShapeError("col index out of range")
            if not np.all(np.isfinite(self.values)):
                raise RangeError("rating values must be finite")
            if not self.scale.contains(self.values):
                bad = int(np.flatnonzero(
                    (self.values < self.scale.min) | (self.values > self.scale.max))[0])
                raise RangeError(
                    f"rating {self.values[bad]} at ({self.rows[bad]}, {self.cols[bad]}) "
                    f"outside [{self.scale.min}, {self.scale.max}]"
                )
            keys = self.rows * self.n_cols + self.cols
            uniq, counts = np.unique(keys, return_counts=True)
            if len(uniq) != m:
                dup = int(uniq[np.argmax(counts > 1)])
                raise DuplicateError(f"duplicate entry ({dup // self.n_cols}, {dup % self.n_cols})")
        if self.row_ids is not None and len(self.row_ids) != self.n_rows:
            raise ShapeError("row_ids length must equal n_rows")
        if self.col_ids is not None and len(self.col_ids) != self.n_cols:
            raise ShapeError("col_ids length must equal n_cols")

    @classmethod
    def from_triples(cls, triples: Iterable, n_rows=None, n_cols=None, **kwargs) -> ObservedMatrix:
        triples = [tuple(t) for t in triples]
        rows = [int(t[0]) for t in triples]
        cols = [int(t[1]) for t in triples]
        values = [float(t[2]) for t in triples]
        if n_rows is None:
            n_rows = max(rows) + 1 if rows else 0
        if n_cols is None:
            n_cols = max(cols) + 1 if cols else 0
        return cls(rows, cols, values, n_rows, n_cols, **kwargs)

    @classmethod
    def from_dense(cls, dense, mask=None, **kwargs) -> ObservedMatrix:
        """Observe ``dense`` at every cell where ``mask`` is true (all cells by default)."""
        dense = np.asarray(dense, dtype=float)
        if dense.ndim != 2:
            raise ShapeError("dense matrix must be 2-D")
        if mask is None:
            mask = np.ones(dense.shape, dtype=bool)
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != dense.shape:
            raise ShapeError("mask shape must match matrix shape")
        rows, cols = np.nonzero(mask)
        return cls(rows, cols, dense[rows, cols], dense.shape[0], dense.shape[1], **kwargs)

    # -- views -------------------------------------------------------------

    @property
    def shape(self):
        return self.n_rows, self.n_cols

    @property
    def nnz(self) -> int:
        return len(self.values)

    def __len__(self):
        return self.nnz

    def __repr__(self):
        return f"ObservedMatrix(shape={self.shape}, nnz={self.nnz})"

    @property
    def entries(self) -> list[RatingTriple]:
        return [RatingTriple(int(r), int(c), float(v))
                for r, c, v in zip(self.rows, self.cols, self.values)]

    def _build_index(self, key, other, n):
        order = np.argsort(key, kind="stable")
        bounds = np.searchsorted(key[order], np.arange(n + 1))
        return [
            (other[order[bounds[i]:bounds[i + 1]]], self.values[order[bounds[i]:bounds[i + 1]]])
            for i in range(n)
        ]

    @property
    def row_index(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """Per row: ``(cols, values)`` of its observed entries."""
        if self._row_index is None:
            self._row_index = self._build_index(self.rows, self.cols, self.n_rows)
        return self._row_index

    @property
    def col_index(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """Per column: ``(rows, values)`` of its observed entries."""
        if self._col_index is None:
            self._col_index = self._build_index(self.cols, self.rows, self.n_cols)
        return self._col_index

    def row_counts(self) -> np.ndarray:
        return np.bincount(self.rows, minlength=self.n_rows)

    def col_counts(self) -> np.ndarray:
        return np.bincount(self.cols, minlength=self.n_cols)

    def mask(self) -> np.ndarray:
        out = np.zeros(self.shape, dtype=bool)
        out[self.rows, self.cols] = True
        return out

    def to_dense(self, fill: float = 0.0) -> np.ndarray:
        out = np.full(self.shape, fill, dtype=float)
        out[self.rows, self.cols] = self.values
        return out

    def subset(self, idx) -> ObservedMatrix:
        """Matrix with the same dimensions, scale and ids holding only entries ``idx``."""
        idx = np.asarray(idx, dtype=np.int64)
        return ObservedMatrix(
            self.rows[idx], self.cols[idx], self.values[idx], self.n_rows, self.n_cols,
            scale=self.scale, row_ids=self.row_ids, col_ids=self.col_ids,
        )

    def with_values(self, values) -> ObservedMatrix:
        return ObservedMatrix(
            self.rows, self.cols, values, self.n_rows, self.n_cols,
            scale=self.scale, row_ids=self.row_ids, col_ids=self.col_ids,
        )


# -- parsing -------------------------------------------------------------------


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def _records(text: str, fmt: str):
    if fmt == "movielens-dat":
        for lineno, line in enumerate(text.splitlines(), 1):
            if line.strip():
                yield lineno, line.strip().split("::")
    elif fmt == "tsv":
        for lineno, line in enumerate(text.splitlines(), 1):
            if line.strip():
                yield lineno, line.strip().split("\t")
    elif fmt == "csv":
        reader = csv.reader(io.StringIO(text))
        first = True
        for fields in reader:
            lineno = reader.line_num
            if not fields or not any(f.strip() for f in fields):
                continue
            if first:
                first = False
                if not _is_number(fields[0].strip()):
                    continue  # header
            yield lineno, [f.strip() for f in fields]
    else:
        raise ValueError(f"unknown format {fmt!r}; expected one of {FORMATS}")


def parse_ratings(stream, fmt: str = "movielens-dat", scale: RatingScale = MOVIELENS_SCALE) -> ObservedMatrix:
    """Read ``user, item, rating[, timestamp]`` records into an :class:`ObservedMatrix`.

    ``stream`` may be ``bytes``, ``str`` or a readable file object (text or
    binary). External ids are mapped to dense indices in order of first
    appearance and kept on the result as ``row_ids`` / ``col_ids``.
    """
    if fmt not in FORMATS:
        raise ValueError(f"unknown format {fmt!r}; expected one of {FORMATS}")
    if hasattr(stream, "read"):
        stream = stream.read()
    if isinstance(stream, (bytes, bytearray)):
        stream = bytes(stream).decode("utf-8-sig")
    text = stream

    row_map: dict[str, int] = {}
    col_map: dict[str, int] = {}
    seen: dict[tuple[int, int], int] = {}
    rows, cols, values = [], [], []
    for lineno, fields in _records(text, fmt):
        if len(fields) not in (3, 4):
            raise ParseError(f"expected 3 or 4 fields, got {len(fields)}", lineno)
        user, item, raw = fields[0].strip(), fields[1].strip(), fields[2].strip()
        if not user or not item:
            raise ParseError("empty user or item id", lineno)
        try:
            value = float(raw)
        except ValueError:
            raise ParseError(f"non-numeric rating {raw!r}", lineno) from None
        if not math.isfinite(value):
            raise ParseError(f"non-finite rating {raw!r}", lineno)
        if not (scale.min <= value <= scale.max):
            raise RangeError(f"line {lineno}: rating {value} outside [{scale.min}, {scale.max}]")
        r = row_map.setdefault(user, len(row_map))
        c = col_map.setdefault(item, len(col_map))
        if (r, c) in seen:
            raise DuplicateError(
                f"line {lineno}: duplicate rating for user {user!r}, item {item!r} "
                f"(first seen on line {seen[r, c]})"
            )
        seen[r, c] = lineno
        rows.append(r)
        cols.append(c)
        values.append(value)

    return ObservedMatrix(
        rows, cols, values, len(row_map), len(col_map), scale=scale,
        row_ids=list(row_map), col_ids=list(col_map),
    )


def read_ratings(path, fmt: str = "movielens-dat", scale: RatingScale = MOVIELENS_SCALE) -> ObservedMatrix:
    with open(path, "rb") as fh:
        return parse_ratings(fh, fmt, scale)


def format_ratings(matrix: ObservedMatrix, fmt: str = "movielens-dat") -> str:
    """Serialize entries back to ``fmt`` using the retained external ids."""
    row_ids = matrix.row_ids or [str(i) for i in range(matrix.n_rows)]
    col_ids = matrix.col_ids or [str(j) for j in range(matrix.n_cols)]
    sep = {"movielens-dat": "::", "tsv": "\t", "csv": ","}[fmt]
    lines = [
        sep.join((row_ids[r], col_ids[c], repr(float(v))))
        for r, c, v in zip(matrix.rows, matrix.cols, matrix.values)
    ]
    return "".join(line + "\n" for line in lines)


# -- splitting and projection ------------------------------------------------


def split_train_test(matrix: ObservedMatrix, test_fraction: float = 0.1, seed=0):
    """Randomly partition the observed entries into ``(train, test)``.

    The test half receives ``round(m * test_fraction)`` entries (halves
    round up). Both halves keep the original dimensions, scale and ids.
    """
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    m = matrix.nnz
    if m == 0:
        raise EmptyInputError("cannot split an empty matrix")
    n_test = int(math.floor(m * test_fraction + 0.5))
    perm = np.random.default_rng(seed).permutation(m)
    test_idx = np.sort(perm[:n_test])
    train_idx = np.sort(perm[n_test:])
    return matrix.subset(train_idx), matrix.subset(test_idx)


def project_observed(dense, observed) -> np.ndarray:
    """Keep ``dense`` on observed cells and zero it elsewhere.

    ``observed`` is an :class:`ObservedMatrix`, a boolean mask, or an
    iterable of ``(row, col)`` pairs.
    """
    dense = np.asarray(dense, dtype=float)
    if dense.ndim != 2:
        raise ShapeError("expected a 2-D matrix")
    if isinstance(observed, ObservedMatrix):
        if observed.shape != dense.shape:
            raise ShapeError(f"matrix shape {dense.shape} != observed shape {observed.shape}")
        mask = observed.mask()
    elif isinstance(observed, np.ndarray) and observed.dtype == bool:
        if observed.shape != dense.shape:
            raise ShapeError(f"matrix shape {dense.shape} != mask shape {observed.shape}")
        mask = observed
    else:
        pairs = np.asarray(list(observed), dtype=np.int64).reshape(-1, 2)
        mask = np.zeros(dense.shape, dtype=bool)
        if len(pairs):
            if (pairs < 0).any() or (pairs[:, 0] >= dense.shape[0]).any() or (pairs[:, 1] >= dense.shape[1]).any():
                raise ShapeError("observed index outside matrix")
            mask[pairs[:, 0], pairs[:, 1]] = True
    return np.where(mask, dense, 0.0)
