"""Multi-hyperplane weight structure shared by the AMM trainers.

Each class ``i`` owns ``b_i`` stored weight vectors plus one implicit
all-zero weight, so a class score ``max_j w_ij . x`` is never negative.
Stored weights live in a fixed-capacity array ``(L, cap, d)``; the zero
slot is addressed as :data:`ZERO_SLOT`.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict
from typing import TextIO

import numpy as np
import scipy.sparse as sp

from . import _kernels as K
from .core import (FormatError, Ranking, RankedDataset, SparseVector, l2_normalize_rows,
                   ranking_from_scores, rankings_from_score_matrix)

ZERO_SLOT = K.ZERO
NU_MODES = ("constant", "inverse_rank")


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters shared by the SGD trainers.

    ``prune_period=None`` prunes every ``10 * d`` updates; ``0`` turns
    pruning off.
    """

    lam: float = 1e-5
    epochs: int = 5
    seed: int = 0
    max_weights_per_class: int = 20
    prune_period: int | None = None
    prune_threshold: float = 1e-8
    nu_mode: str = "constant"
    l2_normalize: bool = True

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"lambda must be > 0, got {self.lam}")
        if int(self.epochs) != self.epochs or self.epochs < 1:
            raise ValueError(f"epochs must be a positive integer, got {self.epochs}")
        if self.max_weights_per_class < 1:
            raise ValueError("max_weights_per_class must be >= 1")
        if self.prune_period is not None and self.prune_period < 0:
            raise ValueError("prune_period must be positive, 0 (off) or None (auto)")
        if self.prune_threshold < 0:
            raise ValueError("prune_threshold must be >= 0")
        if self.nu_mode not in NU_MODES:
            raise ValueError(f"nu_mode must be one of {NU_MODES}, got {self.nu_mode!r}")

    def resolved_prune_period(self, d: int) -> int:
        return 10 * d if self.prune_period is None else int(self.prune_period)

    def as_dict(self) -> dict:
        return asdict(self)


class AmmModel:
    """Weight blocks ``W = [w_11..w_1b1 | ... | w_L1..w_LbL]``."""

    def __init__(self, n_labels: int, dim: int, max_weights_per_class: int = 20,
                 normalize: bool = False):
        if n_labels < 1 or dim < 1:
            raise ValueError("need n_labels >= 1 and dim >= 1")
        self.V = np.zeros((n_labels, max_weights_per_class, dim))
        self.counts = np.zeros(n_labels, dtype=np.int64)
        self.scale = np.ones(1)
        self.normalize = bool(normalize)

    @property
    def L(self) -> int:
        return self.V.shape[0]

    @property
    def d(self) -> int:
        return self.V.shape[2]

    @property
    def capacity(self) -> int:
        return self.V.shape[1]

    def weights(self, label: int) -> np.ndarray:
        """Effective stored weights of ``label`` (1-based), shape ``(b_i, d)``."""
        c = self._class(label)
        return self.scale[0] * self.V[c, :self.counts[c]]

    def n_weights(self, label: int) -> int:
        return int(self.counts[self._class(label)])

    def add_weight(self, label: int, w) -> int:
        """Append a stored weight; returns its 0-based slot."""
        c = self._class(label)
        w = np.asarray(w, dtype=np.float64)
        if w.shape != (self.d,):
            raise ValueError(f"weight must have dimension {self.d}")
        if self.counts[c] >= self.capacity:
            raise ValueError(f"class {label} is at capacity")
        k = int(self.counts[c])
        self.V[c, k] = w / self.scale[0]
        self.counts[c] += 1
        return k

    def finalize(self) -> AmmModel:
        """Fold the lazy scale multiplier into the stored weights."""
        K.fold_scale(self.V, self.counts, self.scale)
        return self

    def copy(self) -> AmmModel:
        m = AmmModel.__new__(AmmModel)
        m.V = self.V.copy()
        m.counts = self.counts.copy()
        m.scale = self.scale.copy()
        m.normalize = self.normalize
        return m

    def _class(self, label: int) -> int:
        if not 1 <= label <= self.L:
            raise ValueError(f"label {label} out of range 1..{self.L}")
        return label - 1

    def _check(self, x: SparseVector) -> None:
        if x.dim != self.d:
            raise ValueError(f"dimension mismatch: x has {x.dim}, model has {self.d}")

    def _prepare(self, x: SparseVector) -> SparseVector:
        self._check(x)
        return x.normalized() if self.normalize else x

    def _dots(self, x: SparseVector) -> np.ndarray:
        dots = np.zeros((self.L, self.capacity))
        K.class_dots(self.V, self.counts, self.scale, x.indices, x.values, dots)
        return dots

    def _active(self, x: SparseVector):
        dots = self._dots(x)
        z = np.zeros(self.L, dtype=np.int64)
        g = np.zeros(self.L)
        top = np.zeros(self.L, dtype=np.int64)
        K.select_active(dots, self.counts, z, g, top)
        return dots, z, g, top

    def __eq__(self, other):
        if not isinstance(other, AmmModel):
            return NotImplemented
        a, b = self.copy().finalize(), other.copy().finalize()
        return (a.normalize == b.normalize and a.V.shape == b.V.shape
                and np.array_equal(a.counts, b.counts) and np.array_equal(a.V, b.V))

    __hash__ = None


def class_score(model: AmmModel, x: SparseVector, label: int) -> float:
    """``g(i, x)``: best dot product over the class weights, zero weight included."""
    model._class(label)
    _, _, g, _ = model._active(model._prepare(x))
    return float(g[label - 1])


def class_scores(model: AmmModel, x: SparseVector) -> np.ndarray:
    _, _, g, _ = model._active(model._prepare(x))
    return g


def active_weight_index(model: AmmModel, x: SparseVector, label: int) -> int:
    """0-based slot of the arg-max weight, or :data:`ZERO_SLOT`.

    Stored weights win exact ties against the zero slot; among stored
    weights the lowest slot wins.
    """
    model._class(label)
    _, z, _, _ = model._active(model._prepare(x))
    return int(z[label - 1])


def predict_ranking(model: AmmModel, x: SparseVector) -> Ranking:
    return ranking_from_scores(class_scores(model, x))


def score_matrix(model: AmmModel, X: sp.spmatrix) -> np.ndarray:
    """Class scores for every row of ``X``, shape ``(n, L)``."""
    X = sp.csr_matrix(X, dtype=np.float64)
    if X.shape[1] != model.d:
        raise ValueError(f"dimension mismatch: data has {X.shape[1]}, model has {model.d}")
    if model.normalize:
        X = l2_normalize_rows(X)
    n = X.shape[0]
    scores = np.zeros((n, model.L))
    flat = (model.scale[0] * model.V).reshape(model.L * model.capacity, model.d)
    mask = np.arange(model.capacity)[None, :] < model.counts[:, None]
    for lo in range(0, n, 4096):
        S = np.asarray(X[lo:lo + 4096] @ flat.T).reshape(-1, model.L, model.capacity)
        S = np.where(mask[None], S, 0.0)
        scores[lo:lo + 4096] = np.maximum(S.max(axis=2), 0.0)
    return scores


def predict_rankings(model: AmmModel, X: sp.spmatrix) -> np.ndarray:
    """Full predicted rankings (1-based labels) for every row, shape ``(n, L)``."""
    return rankings_from_score_matrix(score_matrix(model, X))


def promote_or_update(model: AmmModel, label: int, slot: int, delta,
                      x: SparseVector | None = None) -> int:
    """Add ``delta`` to weight ``slot`` of ``label``; returns the slot written.

    Updating the zero slot turns it into a new stored weight. When the
    class is at capacity the update goes to the stored weight with the
    highest dot product with ``x`` (``delta`` itself when ``x`` is None).
    """
    c = model._class(label)
    delta = np.asarray(delta, dtype=np.float64)
    if delta.shape != (model.d,):
        raise ValueError(f"delta must have dimension {model.d}")
    if slot != ZERO_SLOT and not 0 <= slot < model.counts[c]:
        raise ValueError(f"slot {slot} is not a stored weight of class {label}")
    if slot == ZERO_SLOT and not np.any(delta):
        return ZERO_SLOT
    probe = x if x is not None else SparseVector.from_dense(delta)
    _, _, _, top = model._active(probe)
    nz = np.flatnonzero(delta)
    return int(K.promote_or_update(model.V, model.counts, model.scale, c, slot, top[c], 1.0,
                                   nz.astype(np.int64), delta[nz]))


def prune(model: AmmModel, threshold: float) -> int:
    """Drop stored weights with squared norm <= threshold; returns how many."""
    if threshold < 0:
        raise ValueError("threshold must be >= 0")
    return int(K.prune(model.V, model.counts, model.scale, float(threshold)))


def training_arrays(ds: RankedDataset, normalize: bool):
    """CSR arrays of the (optionally row-normalized) features, int64 indices."""
    X = l2_normalize_rows(ds.X) if normalize else ds.X
    return (X.indptr.astype(np.int64), X.indices.astype(np.int64),
            X.data.astype(np.float64))


def epoch_orders(n: int, epochs: int, seed: int):
    """Seeded per-epoch shuffles."""
    rng = np.random.default_rng(seed)
    for _ in range(epochs):
        yield rng.permutation(n).astype(np.int64)


# ---------------------------------------------------------------------------
# model file
# ---------------------------------------------------------------------------

def _fmt(v: float) -> str:
    return repr(float(v))


def save_model(model: AmmModel, stream: TextIO) -> None:
    """``#amm L=<L> d=<d>`` header, then ``<class> <dense weights>`` per stored weight."""
    m = model.copy().finalize()
    stream.write(f"#amm L={m.L} d={m.d} cap={m.capacity} normalize={int(m.normalize)}\n")
    for c in range(m.L):
        for k in range(m.counts[c]):
            stream.write(f"{c + 1} " + " ".join(_fmt(v) for v in m.V[c, k]) + "\n")


def parse_header(line: str, tag: str) -> dict[str, str]:
    parts = line.split()
    if not parts or parts[0] != f"#{tag}":
        raise FormatError(f"expected '#{tag}' header, got {line.strip()!r}", 1)
    out = {}
    for p in parts[1:]:
        key, sep, val = p.partition("=")
        if not sep:
            raise FormatError(f"bad header field {p!r}", 1)
        out[key] = val
    return out


def load_model(stream: TextIO) -> AmmModel:
    head = parse_header(stream.readline(), "amm")
    try:
        L, d = int(head["L"]), int(head["d"])
    except (KeyError, ValueError):
        raise FormatError("header needs integer L and d", 1) from None
    rows: list[tuple[int, np.ndarray]] = []
    for lineno, line in enumerate(stream, start=2):
        if not line.strip():
            continue
        parts = line.split()
        try:
            c = int(parts[0])
            w = np.array([float(v) for v in parts[1:]])
        except ValueError:
            raise FormatError("bad weight line", lineno) from None
        if not 1 <= c <= L or w.size != d:
            raise FormatError(f"weight line must be '<class 1..{L}> <{d} values>'", lineno)
        rows.append((c, w))
    per_class = np.bincount([c for c, _ in rows], minlength=L + 1)[1:]
    cap = max(int(head.get("cap", 1)), int(per_class.max(initial=0)), 1)
    model = AmmModel(L, d, cap, normalize=head.get("normalize", "0") == "1")
    for c, w in rows:
        model.add_weight(c, w)
    return model
