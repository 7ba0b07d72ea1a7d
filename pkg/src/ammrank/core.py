"""Domain types, dataset IO and score-to-ranking conversion.

Labels are 1-based ids everywhere in the public API (as in the files).
Feature indices are 1-based in files and 0-based in memory.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence, TextIO

import numpy as np
import scipy.sparse as sp

Ranking = tuple[int, ...]

_HEADER_RE = re.compile(r"^#\s*L\s*=\s*(\d+)\s+d\s*=\s*(\d+)\s*$")


class FormatError(ValueError):
    """Raised on malformed input files; carries the 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True, eq=False)
class SparseVector:
    """Feature vector stored as sorted 0-based indices and non-zero values."""

    indices: np.ndarray
    values: np.ndarray
    dim: int

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        val = np.asarray(self.values, dtype=np.float64)
        if idx.shape != val.shape or idx.ndim != 1:
            raise ValueError("indices and values must be 1-d arrays of equal length")
        if idx.size:
            if np.any(np.diff(idx) <= 0):
                raise ValueError("indices must be strictly increasing")
            if idx[0] < 0 or idx[-1] >= self.dim:
                raise ValueError(f"feature index out of range for dim={self.dim}")
        if np.any(val == 0):
            raise ValueError("sparse vector must not store zeros")
        idx.flags.writeable = False
        val.flags.writeable = False
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", val)

    @classmethod
    def from_dense(cls, x: Sequence[float]) -> SparseVector:
        x = np.asarray(x, dtype=np.float64)
        nz = np.flatnonzero(x)
        return cls(nz, x[nz], x.size)

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[int, float]], dim: int) -> SparseVector:
        """Build from 1-based ``(index, value)`` pairs; zeros are dropped."""
        items = sorted((int(i), float(v)) for i, v in pairs if float(v) != 0.0)
        idx = np.array([i - 1 for i, _ in items], dtype=np.int64)
        val = np.array([v for _, v in items], dtype=np.float64)
        return cls(idx, val, dim)

    @property
    def nnz(self) -> int:
        return int(self.indices.size)

    def pairs(self) -> list[tuple[int, float]]:
        """1-based ``(index, value)`` pairs."""
        return [(int(i) + 1, float(v)) for i, v in zip(self.indices, self.values)]

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.dim)
        out[self.indices] = self.values
        return out

    def normalized(self) -> SparseVector:
        n = float(np.sqrt(np.dot(self.values, self.values)))
        if n == 0.0:
            return self
        return SparseVector(self.indices, self.values / n, self.dim)

    def __eq__(self, other):
        if not isinstance(other, SparseVector):
            return NotImplemented
        return (self.dim == other.dim
                and np.array_equal(self.indices, other.indices)
                and np.array_equal(self.values, other.values))

    __hash__ = None


def check_ranking(labels: Iterable[int], n_labels: int | None = None) -> Ranking:
    """Validate a (possibly partial) ranking and return it as a tuple."""
    r = tuple(int(a) for a in labels)
    if not r:
        raise ValueError("empty ranking")
    if len(set(r)) != len(r):
        raise ValueError(f"duplicate label in ranking {list(r)}")
    if min(r) < 1:
        raise ValueError("labels are 1-based")
    if n_labels is not None and max(r) > n_labels:
        raise ValueError(f"label {max(r)} exceeds L={n_labels}")
    return r


def ranking_from_scores(scores: Sequence[float]) -> Ranking:
    """Full ranking by descending score; ties go to the lower label id."""
    s = np.asarray(scores, dtype=np.float64)
    order = np.argsort(-s, kind="stable")
    return tuple(int(i) + 1 for i in order)


def rankings_from_score_matrix(scores: np.ndarray) -> np.ndarray:
    """Row-wise :func:`ranking_from_scores`; returns 1-based labels, shape (n, L)."""
    return np.argsort(-np.asarray(scores, dtype=np.float64), axis=1, kind="stable") + 1


@dataclass(frozen=True)
class RankedInstance:
    features: SparseVector
    truth: Ranking

    def __post_init__(self):
        if not self.truth:
            raise ValueError("empty ranking")


class RankedDataset:
    """Instances ``(x_t, pi_t)`` with label count ``L`` and feature dim ``d``.

    Features are held as one CSR matrix (canonical: sorted indices, no
    explicit zeros); rankings as tuples of 1-based labels.
    """

    def __init__(self, X: sp.csr_matrix, rankings: Sequence[Sequence[int]], L: int, d: int):
        X = sp.csr_matrix(X, dtype=np.float64)
        X.eliminate_zeros()
        X.sort_indices()
        if X.shape[0] != len(rankings):
            raise ValueError("feature rows and rankings differ in length")
        if X.shape[1] != d:
            raise ValueError(f"feature matrix has {X.shape[1]} columns, expected d={d}")
        self.X = X
        self.rankings: list[Ranking] = [check_ranking(r, L) for r in rankings]
        self.L = int(L)
        self.d = int(d)

    def __len__(self) -> int:
        return len(self.rankings)

    def __getitem__(self, t: int) -> RankedInstance:
        return RankedInstance(self.features(t), self.rankings[t])

    def __iter__(self) -> Iterator[RankedInstance]:
        for t in range(len(self)):
            yield self[t]

    def features(self, t: int) -> SparseVector:
        lo, hi = self.X.indptr[t], self.X.indptr[t + 1]
        return SparseVector(self.X.indices[lo:hi], self.X.data[lo:hi], self.d)

    def subset(self, rows: Sequence[int]) -> RankedDataset:
        rows = np.asarray(rows, dtype=np.int64)
        return RankedDataset(self.X[rows], [self.rankings[i] for i in rows], self.L, self.d)

    def ranking_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Flattened 0-based rankings: ``(ptr, labels)`` in CSR style."""
        lengths = np.fromiter((len(r) for r in self.rankings), dtype=np.int64, count=len(self))
        ptr = np.zeros(len(self) + 1, dtype=np.int64)
        np.cumsum(lengths, out=ptr[1:])
        labels = np.fromiter((a - 1 for r in self.rankings for a in r), dtype=np.int64,
                             count=int(ptr[-1]))
        return ptr, labels

    @classmethod
    def from_instances(cls, instances: Sequence[RankedInstance], L: int, d: int) -> RankedDataset:
        rows, cols, vals = [], [], []
        for t, inst in enumerate(instances):
            rows.extend([t] * inst.features.nnz)
            cols.extend(inst.features.indices.tolist())
            vals.extend(inst.features.values.tolist())
        X = sp.csr_matrix((vals, (rows, cols)), shape=(len(instances), d))
        return cls(X, [inst.truth for inst in instances], L, d)


def l2_normalize_rows(X: sp.csr_matrix) -> sp.csr_matrix:
    """Scale each row to unit Euclidean norm; all-zero rows stay zero."""
    X = sp.csr_matrix(X, dtype=np.float64, copy=True)
    sq = np.asarray(X.multiply(X).sum(axis=1)).ravel()
    norms = np.sqrt(sq)
    norms[norms == 0] = 1.0
    X.data /= np.repeat(norms, np.diff(X.indptr))
    return X


# ---------------------------------------------------------------------------
# rank-extended sparse text format
# ---------------------------------------------------------------------------

def _parse_line(line: str, lineno: int, require_labels: bool):
    if "|" not in line:
        raise FormatError("missing '|' separator", lineno)
    head, _, tail = line.partition("|")
    head = head.strip()
    labels: list[int] = []
    if head:
        try:
            labels = [int(tok) for tok in head.split(",")]
        except ValueError:
            raise FormatError(f"bad label list {head!r}", lineno) from None
        if len(set(labels)) != len(labels):
            raise FormatError(f"duplicate label in ranking {labels}", lineno)
        if min(labels) < 1:
            raise FormatError("labels are 1-based", lineno)
    elif require_labels:
        raise FormatError("empty ranking", lineno)
    feats: list[tuple[int, float]] = []
    for term in tail.split():
        idx, sep, val = term.partition(":")
        if not sep:
            raise FormatError(f"bad feature term {term!r}", lineno)
        try:
            i, v = int(idx), float(val)
        except ValueError:
            raise FormatError(f"bad feature term {term!r}", lineno) from None
        if i < 1:
            raise FormatError(f"feature index {i} < 1", lineno)
        if not np.isfinite(v):
            raise FormatError(f"non-finite feature value in {term!r}", lineno)
        feats.append((i, v))
    idxs = [i for i, _ in feats]
    if len(set(idxs)) != len(idxs):
        raise FormatError("duplicate feature index", lineno)
    return labels, feats


def _read(stream: TextIO, require_labels: bool):
    header = None
    labels_all, rows, cols, vals = [], [], [], []
    first = True
    for lineno, raw in enumerate(stream, start=1):
        line = raw.rstrip("\r\n")
        if first and line.startswith("#"):
            m = _HEADER_RE.match(line)
            if not m:
                raise FormatError(f"bad header {line!r}", lineno)
            header = (int(m.group(1)), int(m.group(2)))
            first = False
            continue
        first = False
        if not line.strip():
            continue
        labels, feats = _parse_line(line, lineno, require_labels)
        if header is not None:
            L, d = header
            if labels and max(labels) > L:
                raise FormatError(f"label {max(labels)} exceeds L={L}", lineno)
            if feats and max(i for i, _ in feats) > d:
                raise FormatError(f"feature index exceeds d={d}", lineno)
        t = len(labels_all)
        labels_all.append(labels)
        for i, v in feats:
            if v != 0.0:
                rows.append(t)
                cols.append(i - 1)
                vals.append(v)
    if header is not None:
        L, d = header
    else:
        L = max((max(r) for r in labels_all if r), default=0)
        d = max(cols, default=-1) + 1
    X = sp.csr_matrix((np.array(vals, dtype=np.float64), (rows, cols)),
                      shape=(len(labels_all), d))
    return X, labels_all, L, d


def parse_ranked_dataset(stream: TextIO) -> RankedDataset:
    """Read the rank-extended sparse format.

    One instance per line, ``3,1 | 1:0.5 3:1.0``: comma-separated labels
    in descending preference, then whitespace-separated ``index:value``
    terms. An optional first line ``#L=<int> d=<int>`` fixes the label
    count and dimension, otherwise both are inferred as maxima.
    """
    X, labels, L, d = _read(stream, require_labels=True)
    return RankedDataset(X, labels, L, d)


def read_feature_rows(stream: TextIO) -> tuple[sp.csr_matrix, int | None, int]:
    """Read features only; label lists are ignored and may be empty.

    Returns ``(X, L or None, d)``.
    """
    X, labels, L, d = _read(stream, require_labels=False)
    return sp.csr_matrix(X), (L or None), d


def _fmt(v: float) -> str:
    return repr(float(v))


def serialize_ranked_dataset(ds: RankedDataset, stream: TextIO, header: bool = True) -> None:
    if header:
        stream.write(f"#L={ds.L} d={ds.d}\n")
    X = ds.X
    for t, r in enumerate(ds.rankings):
        lo, hi = X.indptr[t], X.indptr[t + 1]
        terms = " ".join(f"{i + 1}:{_fmt(v)}" for i, v in zip(X.indices[lo:hi], X.data[lo:hi]))
        stream.write(",".join(map(str, r)) + " | " + terms + "\n")


def format_ranking(r: Sequence[int]) -> str:
    return ",".join(str(int(a)) for a in r)
