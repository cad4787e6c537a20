"""Response matrices, dichotomization, extreme-score filtering and CSV ingestion."""

import csv
import hashlib
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence, Tuple, Union

import numpy as np

__all__ = [
    "DataError",
    "ResponseMatrix",
    "FilterReport",
    "dichotomize",
    "filter_extremes",
    "read_csv",
    "VERBAL_AGGRESSION_ITEMS",
    "VERBAL_AGGRESSION_SHA256",
    "load_verbal_aggression",
    "verbal_aggression_path",
]


class DataError(ValueError):
    """Malformed or unusable input data."""


@dataclass(frozen=True)
class ResponseMatrix:
    """Binary persons x items responses.

    ``person_ids`` keep the identity of each row through filtering so that
    posterior class memberships can be reported against the input.
    """

    entries: np.ndarray
    item_names: Tuple[str, ...] = ()
    person_ids: Optional[np.ndarray] = None
    weights: Optional[np.ndarray] = None
    scores: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        y = np.asarray(self.entries)
        if y.ndim != 2:
            raise DataError("responses must be a 2-d array")
        n, m = y.shape
        if m < 2:
            raise DataError("need at least two items")
        if not np.all((y == 0) | (y == 1)):
            i, j = np.argwhere((y != 0) & (y != 1))[0]
            raise DataError(f"non-binary response {y[i, j]!r} at row {i}, column {j}")
        y = y.astype(np.int8)
        y.setflags(write=False)
        object.__setattr__(self, "entries", y)
        names = tuple(self.item_names) or tuple(f"item{j + 1}" for j in range(m))
        if len(names) != m:
            raise DataError(f"{len(names)} item names for {m} columns")
        object.__setattr__(self, "item_names", names)
        ids = np.arange(n) if self.person_ids is None else np.asarray(self.person_ids)
        if ids.shape != (n,):
            raise DataError("person_ids length does not match number of rows")
        object.__setattr__(self, "person_ids", ids)
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            if w.shape != (n,) or np.any(w < 0) or not np.all(np.isfinite(w)):
                raise DataError("weights must be non-negative, finite and one per person")
            object.__setattr__(self, "weights", w)
        s = y.sum(axis=1).astype(int)
        s.setflags(write=False)
        object.__setattr__(self, "scores", s)

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    @property
    def m(self) -> int:
        return self.entries.shape[1]

    def person_weights(self) -> np.ndarray:
        return np.ones(self.n) if self.weights is None else self.weights

    def subset(self, rows) -> "ResponseMatrix":
        rows = np.asarray(rows)
        return ResponseMatrix(
            self.entries[rows],
            self.item_names,
            self.person_ids[rows],
            None if self.weights is None else self.weights[rows],
        )


@dataclass(frozen=True)
class FilterReport:
    n_input: int
    n_removed_zero: int
    n_removed_perfect: int
    n_effective: int


def dichotomize(raw, item_names: Sequence[str] = (), person_ids=None, threshold: int = 1) -> ResponseMatrix:
    """Collapse trichotomous {0, 1, 2} responses to binary.

    Cells ``>= threshold`` become 1.  The default ``threshold=1`` maps
    0 -> 0 and {1, 2} -> 1.
    """
    raw = np.asarray(raw)
    if raw.ndim != 2:
        raise DataError("responses must be a 2-d array")
    bad = ~np.isin(raw, (0, 1, 2))
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise DataError(f"response {raw[i, j]!r} outside {{0, 1, 2}} at row {i}, column {j}")
    if threshold not in (1, 2):
        raise ValueError("threshold must be 1 or 2")
    return ResponseMatrix((raw >= threshold).astype(np.int8), tuple(item_names), person_ids)


def filter_extremes(data: ResponseMatrix) -> Tuple[ResponseMatrix, FilterReport]:
    """Drop persons with raw score 0 or m; order of the remaining rows is kept."""
    r = data.scores
    zero = r == 0
    perfect = r == data.m
    keep = ~(zero | perfect)
    if not keep.any():
        raise DataError("no informative responses: every row has an extreme score")
    report = FilterReport(data.n, int(zero.sum()), int(perfect.sum()), int(keep.sum()))
    if keep.all():
        return data, report
    return data.subset(np.flatnonzero(keep)), report


def read_csv(path: Union[str, Path], columns: Optional[Sequence[str]] = None, exclude: Sequence[str] = ()):
    """Read an integer response CSV.

    Item columns are ``columns`` if given, else every column except a
    leading ``id`` column and those in ``exclude``.  Returns
    ``(values, item_names, ids, extra)`` where ``extra`` maps each non-item
    column to its string values.
    """
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror or exc}") from exc
    if not rows:
        raise DataError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    body = [r for r in rows[1:] if r]
    has_id = bool(header) and header[0].lower() == "id"
    missing = [c for c in list(columns or ()) + list(exclude) if c not in header]
    if missing:
        raise DataError(f"{path}: missing column(s) {', '.join(missing)}")
    if columns is None:
        item_cols = [c for c in (header[1:] if has_id else header) if c not in exclude]
    else:
        item_cols = list(columns)
    col_index = {h: k for k, h in enumerate(header)}
    values = np.empty((len(body), len(item_cols)), dtype=int)
    for i, row in enumerate(body):
        if len(row) != len(header):
            raise DataError(f"{path}: row {i + 1} has {len(row)} fields, expected {len(header)}")
        for j, c in enumerate(item_cols):
            cell = row[col_index[c]].strip()
            try:
                values[i, j] = int(cell)
            except ValueError:
                raise DataError(f"{path}: non-integer cell {cell!r} at row {i + 1}, column {c!r}") from None
    ids = np.array([row[0] for row in body]) if has_id else None
    extra = {
        h: np.array([row[k].strip() for row in body])
        for h, k in col_index.items()
        if h not in item_cols and not (has_id and k == 0)
    }
    return values, item_cols, ids, extra


VERBAL_AGGRESSION_ITEMS = (
    "S1WantCurse", "S1DoCurse", "S1WantScold", "S1DoScold", "S1WantShout", "S1DoShout",
    "S2WantCurse", "S2DoCurse", "S2WantScold", "S2DoScold", "S2WantShout", "S2DoShout",
)
VERBAL_AGGRESSION_SHA256 = "8334d33d11d58dca172bb26c08d504f48cfeeb430515dee7181f49c478f416d8"


def verbal_aggression_path() -> Path:
    return Path(str(resources.files("raschmix") / "data" / "verbal_aggression.csv"))


def load_verbal_aggression(path: Union[str, Path, None] = None, verify_checksum: bool = True):
    """Load the 12-item verbal aggression table as ``(values, ids)``.

    ``values`` is an ``n x 12`` integer array with entries in {0, 1, 2}
    and columns in the canonical order.  With ``path=None`` the bundled copy
    is used and its checksum verified.
    """
    bundled = path is None
    path = verbal_aggression_path() if bundled else Path(path)
    if bundled and verify_checksum:
        digest = hashlib.sha256(path.read_bytes()).hexdigest()
        if digest != VERBAL_AGGRESSION_SHA256:
            raise DataError(f"checksum mismatch for bundled data: {digest}")
    values, names, ids, _ = read_csv(path)
    names = list(names)
    missing = [c for c in VERBAL_AGGRESSION_ITEMS if c not in names]
    unexpected = [c for c in names if c not in VERBAL_AGGRESSION_ITEMS]
    if missing or unexpected:
        parts = []
        if missing:
            parts.append("missing column(s): " + ", ".join(missing))
        if unexpected:
            parts.append("unexpected column(s): " + ", ".join(unexpected))
        raise DataError(f"{path}: " + "; ".join(parts))
    if names != list(VERBAL_AGGRESSION_ITEMS):
        raise DataError(f"{path}: columns out of order; expected {', '.join(VERBAL_AGGRESSION_ITEMS)}")
    bad = ~np.isin(values, (0, 1, 2))
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise DataError(f"{path}: value {values[i, j]} outside {{0, 1, 2}} at row {i + 1}, column {names[j]}")
    return values, ids
