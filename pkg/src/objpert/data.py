"""CSV ingestion and preprocessing into unit-ball datasets.

Input files are UTF-8, comma separated, with a header row. Numeric cells use
'.' as the decimal point. Columns declared categorical are one-hot encoded.
"""

import csv
import dataclasses
from typing import Optional, Sequence

import numpy as np

from objpert.errors import DomainError

TASKS = ("binary_classification", "regression")
NORMALIZE_MODES = ("unit_ball", "paper_adult")


@dataclasses.dataclass(frozen=True)
class RawTable:
    features: np.ndarray
    labels: np.ndarray
    feature_names: tuple
    task: str
    label_map: dict


@dataclasses.dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    task: str
    feature_names: tuple = ()
    label_map: Optional[dict] = None
    normalization: str = "unit_ball"

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def d(self):
        return self.X.shape[1]


def _float(cell, line, column):
    try:
        return float(cell)
    except ValueError:
        raise DomainError(
            f"line {line}: non-numeric value {cell!r} in column {column!r} "
            "(declare it categorical to one-hot encode it)"
        ) from None


def _encode_labels(raw, task, label_range, lines):
    if task == "binary_classification":
        levels = sorted(set(raw), key=lambda v: (_maybe_float(v) is None, _maybe_float(v), v))
        if len(levels) != 2:
            raise DomainError(f"binary labels need exactly two classes, found {len(levels)}")
        index = {v: i for i, v in enumerate(levels)}
        return np.array([index[v] for v in raw], dtype=float), {"classes": levels}
    values = np.array([_float(v, ln, "label") for v, ln in zip(raw, lines)])
    lo, hi = (float(values.min()), float(values.max())) if label_range is None else label_range
    if not hi > lo:
        raise DomainError("regression label range must have hi > lo")
    if values.min() < lo or values.max() > hi:
        raise DomainError("regression labels fall outside the declared range")
    # affine map [lo, hi] -> [-1, 1]; predictions map back with (y + 1) / 2 * (hi - lo) + lo
    return (2.0 * (values - lo) / (hi - lo) - 1.0), {"lo": lo, "hi": hi}


def _maybe_float(v):
    try:
        return float(v)
    except ValueError:
        return None


def load_csv(path, label_column, task, categorical: Sequence[str] = (), label_range=None):
    """Read a headered CSV into a numeric feature matrix and encoded labels.

    Args:
      path: file to read.
      label_column: header name of the label.
      task: "binary_classification" or "regression".
      categorical: header names to one-hot encode (levels sorted).
      label_range: optional (lo, hi) for regression labels; observed range if None.

    Returns:
      RawTable with labels in {0, 1} or rescaled to [-1, 1].

    Raises:
      DomainError: empty file, missing label column, ragged rows or
        non-numeric cells in undeclared columns, reported with line numbers.
    """
    if task not in TASKS:
        raise DomainError(f"unknown task {task!r}")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    rows = [(i + 1, r) for i, r in enumerate(rows) if r and any(c.strip() for c in r)]
    if not rows:
        raise DomainError(f"{path}: empty file")
    header = [h.strip() for h in rows[0][1]]
    body = rows[1:]
    if not body:
        raise DomainError(f"{path}: no data rows")
    if label_column not in header:
        raise DomainError(f"label column {label_column!r} not in header")
    unknown = set(categorical) - set(header)
    if unknown:
        raise DomainError(f"categorical columns not in header: {sorted(unknown)}")
    for line, r in body:
        if len(r) != len(header):
            raise DomainError(f"line {line}: expected {len(header)} fields, got {len(r)}")
    lab = header.index(label_column)
    cat = set(categorical)
    levels = {c: sorted({r[header.index(c)].strip() for _, r in body}) for c in cat}
    names, cols = [], []
    for j, h in enumerate(header):
        if j == lab:
            continue
        if h in cat:
            for lev in levels[h]:
                names.append(f"{h}={lev}")
                cols.append(np.array([float(r[j].strip() == lev) for _, r in body]))
        else:
            names.append(h)
            cols.append(np.array([_float(r[j].strip(), line, h) for line, r in body]))
    X = np.column_stack(cols) if cols else np.zeros((len(body), 0))
    raw_labels = [r[lab].strip() for _, r in body]
    y, label_map = _encode_labels(raw_labels, task, label_range, [ln for ln, _ in body])
    return RawTable(X, y, tuple(names), task, label_map)


def normalize_features(raw, mode="unit_ball"):
    """Map rows into the unit ball.

    ``unit_ball`` projects: x / max(1, ||x||). ``paper_adult`` applies
    x / ||x||^2 literally; it rejects zero rows and any row that still has
    norm above one (every row with 0 < ||x|| < 1).
    """
    X = np.asarray(raw.features, dtype=float)
    norms = np.linalg.norm(X, axis=1)
    if mode == "unit_ball":
        X = X / np.maximum(1.0, norms)[:, None]
    elif mode == "paper_adult":
        if np.any(norms == 0):
            raise DomainError(f"row {int(np.argmin(norms))} has zero norm")
        X = X / (norms**2)[:, None]
        bad = np.linalg.norm(X, axis=1) > 1.0 + 1e-12
        if np.any(bad):
            raise DomainError(
                f"{int(bad.sum())} rows exceed unit norm after x/||x||^2 "
                f"(first: row {int(np.argmax(bad))})"
            )
    else:
        raise DomainError(f"unknown normalization {mode!r}")
    _check_dataset(X, raw.labels, raw.task)
    return Dataset(X, np.asarray(raw.labels, float), raw.task, raw.feature_names,
                   raw.label_map, mode)


def _check_dataset(X, y, task):
    if X.size and np.max(np.linalg.norm(X, axis=1)) > 1.0 + 1e-12:
        raise DomainError("feature rows must have norm at most 1")
    y = np.asarray(y, float)
    if task == "binary_classification" and not np.all((y == 0) | (y == 1)):
        raise DomainError("classification labels must be 0 or 1")
    if task == "regression" and not np.all(np.abs(y) <= 1.0):
        raise DomainError("regression labels must lie in [-1, 1]")


def split(ds, test_fraction, rng):
    """Shuffle with the rng's data stream and cut off a test part.

    ``rng`` is a solver.RngSpec or an integer seed.
    """
    if not 0 < test_fraction < 1:
        raise DomainError("test_fraction must lie in (0, 1)")
    if isinstance(rng, (int, np.integer)):
        gen = np.random.default_rng(np.random.SeedSequence(int(rng), spawn_key=(2,)))
    else:
        gen = rng.generator("shuffle")
    perm = gen.permutation(ds.n)
    n_test = int(round(ds.n * test_fraction))
    if ds.n >= 2:
        n_test = min(max(n_test, 1), ds.n - 1)
    test, train = perm[:n_test], perm[n_test:]

    def take(idx):
        return dataclasses.replace(ds, X=ds.X[idx], y=ds.y[idx])

    return take(train), take(test)


def from_arrays(X, y, task, mode="unit_ball"):
    """Dataset from in-memory arrays, with the same normalisation and checks."""
    raw = RawTable(np.asarray(X, float), np.asarray(y, float), (), task, {})
    return normalize_features(raw, mode)
