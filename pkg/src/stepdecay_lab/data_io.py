"""Dataset ingestion, synthetic data generation, and CSV emission.

Sparse datasets use the LIBSVM text format at the boundary
(``label idx:val idx:val ...`` with 1-based, strictly increasing indices)
and compressed sparse rows internally (0-based).  Labels are -1/+1; 0/1
labels are remapped on parse.

CSV output uses a header row, ``.`` decimal separator, LF line endings, and
shortest round-trip float formatting, so identical runs produce identical
bytes.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class DataFormatError(ValueError):
    """Raised on malformed dataset input; carries the offending line number."""


@dataclass(frozen=True)
class SparseDataset:
    """Row-sparse labelled dataset (labels in {-1, +1})."""

    n: int
    d: int
    labels: np.ndarray   # float64 (n,)
    indptr: np.ndarray   # int64 (n+1,)
    indices: np.ndarray  # int64 (nnz,), 0-based, strictly increasing per row
    data: np.ndarray     # float64 (nnz,)
    provenance: str = ""

    def row(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = self.indptr[i], self.indptr[i + 1]
        return self.indices[lo:hi], self.data[lo:hi]

    def row_norms2(self) -> np.ndarray:
        out = np.zeros(self.n)
        if len(self.data):
            rows = np.repeat(np.arange(self.n), np.diff(self.indptr))
            np.add.at(out, rows, self.data * self.data)
        return out

    def _row_of_nnz(self) -> np.ndarray:
        return np.repeat(np.arange(self.n), np.diff(self.indptr))

    def dot(self, x: np.ndarray, rows=None) -> np.ndarray:
        """Per-row inner products a_i . x, for all rows or a subset."""
        if rows is None:
            if not len(self.data):
                return np.zeros(self.n)
            return np.bincount(self._row_of_nnz(), weights=self.data * x[self.indices],
                               minlength=self.n)
        out = np.empty(len(rows))
        for j, i in enumerate(rows):
            idx, val = self.row(int(i))
            out[j] = float(val @ x[idx])
        return out

    def weighted_row_sum(self, coeff: np.ndarray, rows=None) -> np.ndarray:
        """sum_j coeff_j * a_{rows_j} as a dense vector."""
        out = np.zeros(self.d)
        if rows is None:
            if len(self.data):
                np.add.at(out, self.indices, self.data * coeff[self._row_of_nnz()])
            return out
        for j, i in enumerate(rows):
            idx, val = self.row(int(i))
            out[idx] += coeff[j] * val
        return out

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.n, self.d))
        for i in range(self.n):
            idx, val = self.row(i)
            out[i, idx] = val
        return out

    def subset(self, rows: np.ndarray, provenance: str | None = None) -> "SparseDataset":
        parts_idx, parts_val, indptr = [], [], [0]
        for i in rows:
            idx, val = self.row(int(i))
            parts_idx.append(idx)
            parts_val.append(val)
            indptr.append(indptr[-1] + len(idx))
        return SparseDataset(
            n=len(rows), d=self.d, labels=self.labels[rows].copy(),
            indptr=np.asarray(indptr, dtype=np.int64),
            indices=np.concatenate(parts_idx) if parts_idx else np.empty(0, dtype=np.int64),
            data=np.concatenate(parts_val) if parts_val else np.empty(0),
            provenance=provenance if provenance is not None else self.provenance,
        )


def _parse_label(token: str, lineno: int) -> float:
    try:
        raw = float(token)
    except ValueError:
        raise DataFormatError(f"line {lineno}: unparseable label {token!r}") from None
    if raw in (-1.0, 1.0):
        return raw
    if raw == 0.0:
        return -1.0
    raise DataFormatError(f"line {lineno}: label must be -1, 0, or +1, got {token!r}")


def parse_libsvm(source, d: int | None = None, provenance: str = "") -> SparseDataset:
    """Parse LIBSVM-format text.

    ``source`` may be a ``pathlib.Path`` (read from disk), a string of text,
    a file object, or any iterable of lines.  Feature indices are 1-based in
    the file and must be strictly increasing within a row; anything after
    ``#`` is a comment.  The dimension is inferred as the maximum index
    unless ``d`` pins it (needed when a split lacks the largest index).
    """
    if isinstance(source, Path):
        with open(source, "r") as handle:
            return parse_libsvm(handle, d=d, provenance=provenance or str(source))
    if isinstance(source, str):
        source = io.StringIO(source)

    labels, indptr, indices, data = [], [0], [], []
    max_index = 0
    for lineno, line in enumerate(source, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        labels.append(_parse_label(tokens[0], lineno))
        prev = 0
        for token in tokens[1:]:
            head, sep, tail = token.partition(":")
            if not sep:
                raise DataFormatError(f"line {lineno}: malformed pair {token!r}")
            try:
                idx = int(head)
                val = float(tail)
            except ValueError:
                raise DataFormatError(f"line {lineno}: malformed pair {token!r}") from None
            if idx <= prev:
                raise DataFormatError(
                    f"line {lineno}: feature indices must be strictly increasing (index {idx})")
            prev = idx
            indices.append(idx - 1)
            data.append(val)
        max_index = max(max_index, prev)
        indptr.append(len(indices))

    inferred = max_index if d is None else d
    if max_index > inferred:
        raise DataFormatError(f"declared d={d} but saw feature index {max_index}")
    return SparseDataset(
        n=len(labels), d=inferred,
        labels=np.asarray(labels),
        indptr=np.asarray(indptr, dtype=np.int64),
        indices=np.asarray(indices, dtype=np.int64),
        data=np.asarray(data),
        provenance=provenance,
    )


def serialize_libsvm(dataset: SparseDataset) -> str:
    """Inverse of ``parse_libsvm``; reparsing yields an identical dataset."""
    lines = []
    for i in range(dataset.n):
        idx, val = dataset.row(i)
        parts = [f"{int(dataset.labels[i]):+d}"]
        parts.extend(f"{j + 1}:{format_float(v)}" for j, v in zip(idx, val))
        lines.append(" ".join(parts))
    return "\n".join(lines) + ("\n" if lines else "")


def synth_logistic_data(n: int, d: int, separation: float, seed: int,
                        return_planted: bool = False):
    """Gaussian-feature binary classification with a planted direction.

    Rows are standard normal; the label is +1 with probability
    sigmoid(separation * a.w) for a fixed standard-normal vector w, so
    ``separation`` controls how often labels disagree with the planted sign
    (flip noise vanishes as separation grows).  Dense rows are stored
    sparsely.
    """
    if n < 1 or d < 1:
        raise DataFormatError("n and d must be >= 1")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    planted = rng.standard_normal(d)
    features = rng.standard_normal((n, d))
    scores = features @ planted
    prob_pos = 1.0 / (1.0 + np.exp(-separation * scores))
    labels = np.where(rng.random(n) < prob_pos, 1.0, -1.0)
    dataset = SparseDataset(
        n=n, d=d, labels=labels,
        indptr=np.arange(0, n * d + 1, d, dtype=np.int64),
        indices=np.tile(np.arange(d, dtype=np.int64), n),
        data=features.ravel().copy(),
        provenance=f"synthetic(n={n}, d={d}, separation={separation}, seed={seed})",
    )
    if return_planted:
        return dataset, planted
    return dataset


def train_test_split(dataset: SparseDataset, fraction: float, seed: int):
    """Deterministic shuffled split into ceil(fraction*n) train rows and the rest."""
    if not 0.0 < fraction < 1.0:
        raise DataFormatError(f"fraction must lie in (0, 1), got {fraction!r}")
    if dataset.n < 2:
        raise DataFormatError("need at least 2 rows to split")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    order = rng.permutation(dataset.n)
    n_train = math.ceil(fraction * dataset.n)
    train = dataset.subset(order[:n_train], provenance=dataset.provenance + "/train")
    test = dataset.subset(order[n_train:], provenance=dataset.provenance + "/test")
    return train, test


# ---------------------------------------------------------------------------
# CSV emission
# ---------------------------------------------------------------------------

def format_float(x) -> str:
    """Shortest decimal string that round-trips to the same IEEE double."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def write_csv(path, header, rows) -> None:
    """Write rows of numbers (or strings) with LF endings and a header row."""
    with open(path, "w", newline="") as handle:
        handle.write(",".join(header) + "\n")
        for row in rows:
            handle.write(",".join(cell if isinstance(cell, str) else format_float(cell)
                                   for cell in row) + "\n")


def csv_text(header, rows) -> str:
    out = [",".join(header)]
    for row in rows:
        out.append(",".join(cell if isinstance(cell, str) else format_float(cell)
                            for cell in row))
    return "\n".join(out) + "\n"
