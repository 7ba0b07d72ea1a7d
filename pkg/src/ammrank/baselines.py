"""Reference label rankers.

* Central-Mal: one consensus ranking for everybody.
* AG-Mal: a consensus ranking per (age bucket, gender) group.
* IB-Mal: consensus over the k nearest training users.
* LR: one logistic model per label, labels sorted by score.
* PW-LR: one logistic model per label pair, labels sorted by summed soft votes.

Consensus rankings are Borda aggregates, a fast stand-in for the Mallows
central ranking; :func:`kemeny_exact` is the exact optimum for small L.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, TextIO

import numpy as np
import scipy.sparse as sp

from . import _kernels as K
from .amm_model import TrainConfig, epoch_orders, parse_header, training_arrays
from .core import (FormatError, Ranking, RankedDataset, SparseVector, check_ranking,
                   format_ranking, l2_normalize_rows, ranking_from_scores,
                   rankings_from_score_matrix)

N_AGE_BUCKETS = 9
N_GENDERS = 2


# ---------------------------------------------------------------------------
# aggregation
# ---------------------------------------------------------------------------

def borda_scores(rankings: Sequence[Sequence[int]], n_labels: int) -> np.ndarray:
    """Twice the Borda credit of each label (integers, so ties are exact).

    Position ``p`` earns ``L - p``; each unranked label earns the mean
    credit of the unoccupied positions, ``(L - L_t - 1) / 2``.
    """
    if not len(rankings):
        raise ValueError("cannot aggregate an empty list of rankings")
    credit = np.zeros(n_labels, dtype=np.int64)
    for r in rankings:
        r = np.asarray(r, dtype=np.int64) - 1
        L_t = r.size
        credit += n_labels - L_t - 1
        credit[r] += 2 * (n_labels - np.arange(1, L_t + 1)) - (n_labels - L_t - 1)
    return credit


def borda_aggregate(rankings: Sequence[Sequence[int]], n_labels: int) -> Ranking:
    return ranking_from_scores(borda_scores(rankings, n_labels))


def preference_counts(rankings: Sequence[Sequence[int]], n_labels: int) -> np.ndarray:
    """``C[a, b]``: number of rankings stating ``a+1`` over ``b+1``."""
    C = np.zeros((n_labels, n_labels), dtype=np.int64)
    for r in rankings:
        pos = np.full(n_labels, n_labels, dtype=np.int64)
        pos[np.asarray(r, dtype=np.int64) - 1] = np.arange(len(r))
        C += (pos[:, None] < pos[None, :]) & (pos[:, None] < n_labels)
    return C


def total_disagreement(candidate: Sequence[int], rankings: Sequence[Sequence[int]],
                       n_labels: int) -> int:
    """Preference pairs of ``rankings`` that the full ranking ``candidate`` reverses."""
    C = preference_counts(rankings, n_labels)
    order = np.asarray(candidate, dtype=np.int64) - 1
    before = np.zeros((n_labels, n_labels), dtype=bool)
    for i, a in enumerate(order):
        before[a, order[i + 1:]] = True
    return int(C.T[before].sum())


def kemeny_exact(rankings: Sequence[Sequence[int]], n_labels: int) -> Ranking:
    """Full ranking with the fewest reversed preference pairs.

    Exact dynamic programming over label subsets; among optima the
    lexicographically smallest ranking is returned.
    """
    if n_labels > 10:
        raise ValueError("kemeny_exact supports L <= 10")
    if not len(rankings):
        raise ValueError("cannot aggregate an empty list of rankings")
    C = preference_counts(rankings, n_labels)
    full = (1 << n_labels) - 1
    # cost[S]: cheapest ordering of the labels not in S, placed after S
    cost = np.zeros(1 << n_labels, dtype=np.int64)
    for S in range(full - 1, -1, -1):
        rest = [b for b in range(n_labels) if not S >> b & 1]
        cost[S] = min(sum(int(C[b, a]) for b in rest if b != a) + cost[S | 1 << a]
                      for a in rest)
    order, S = [], 0
    while S != full:
        rest = [b for b in range(n_labels) if not S >> b & 1]
        for a in rest:
            if sum(int(C[b, a]) for b in rest if b != a) + cost[S | 1 << a] == cost[S]:
                order.append(a + 1)
                S |= 1 << a
                break
    return tuple(order)


# ---------------------------------------------------------------------------
# Central-Mal / AG-Mal
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CentralRankModel:
    central: Ranking

    @property
    def L(self) -> int:
        return len(self.central)

    def predict(self, x: SparseVector | None = None) -> Ranking:
        return self.central


def fit_central(dataset: RankedDataset) -> CentralRankModel:
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    return CentralRankModel(borda_aggregate(dataset.rankings, dataset.L))


@dataclass(frozen=True)
class DemographicLayout:
    """0-based feature indices of the 9 age and 2 gender one-hot slots."""

    age: tuple[int, ...]
    gender: tuple[int, ...]

    def __post_init__(self):
        if len(self.age) != N_AGE_BUCKETS or len(self.gender) != N_GENDERS:
            raise ValueError("layout needs 9 age and 2 gender indices")
        if len(set(self.age) | set(self.gender)) != N_AGE_BUCKETS + N_GENDERS:
            raise ValueError("demographic indices must be distinct")
        if min(self.age + self.gender) < 0:
            raise ValueError("negative feature index in layout")

    @classmethod
    def trailing(cls, d: int) -> DemographicLayout:
        """Demographic slots occupying the last 11 feature indices."""
        if d < N_AGE_BUCKETS + N_GENDERS:
            raise ValueError(f"d={d} too small for demographic one-hots")
        base = d - N_AGE_BUCKETS - N_GENDERS
        return cls(tuple(range(base, base + N_AGE_BUCKETS)),
                   tuple(range(base + N_AGE_BUCKETS, d)))

    def group_of(self, indices: np.ndarray, values: np.ndarray) -> tuple[int, int] | None:
        """``(age, gender)`` if exactly one of each one-hot is set, else None."""
        on = set(int(i) for i, v in zip(indices, values) if v > 0)
        ages = [a for a, i in enumerate(self.age) if i in on]
        genders = [g for g, i in enumerate(self.gender) if i in on]
        if len(ages) != 1 or len(genders) != 1:
            return None
        return ages[0], genders[0]


@dataclass
class GroupedRankModel:
    layout: DemographicLayout
    fallback: Ranking
    groups: dict[tuple[int, int], Ranking] = field(default_factory=dict)

    @property
    def L(self) -> int:
        return len(self.fallback)

    def predict(self, x: SparseVector) -> Ranking:
        return predict_ag(self, x)


def fit_ag(dataset: RankedDataset, layout: DemographicLayout) -> GroupedRankModel:
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    members: dict[tuple[int, int], list[Ranking]] = {}
    X = dataset.X
    for t, r in enumerate(dataset.rankings):
        lo, hi = X.indptr[t], X.indptr[t + 1]
        key = layout.group_of(X.indices[lo:hi], X.data[lo:hi])
        if key is not None:
            members.setdefault(key, []).append(r)
    groups = {key: borda_aggregate(rs, dataset.L) for key, rs in sorted(members.items())}
    return GroupedRankModel(layout, borda_aggregate(dataset.rankings, dataset.L), groups)


def predict_ag(model: GroupedRankModel, x: SparseVector) -> Ranking:
    key = model.layout.group_of(x.indices, x.values)
    return model.groups.get(key, model.fallback) if key is not None else model.fallback


# ---------------------------------------------------------------------------
# IB-Mal
# ---------------------------------------------------------------------------

@dataclass
class NeighborPool:
    X: sp.csr_matrix
    rankings: list[Ranking]
    L: int
    normalize: bool = False

    def __post_init__(self):
        if self.X.shape[0] == 0:
            raise ValueError("empty neighbor pool")
        self.X = sp.csr_matrix(self.X, dtype=np.float64)
        if self.normalize:
            self.X = l2_normalize_rows(self.X)
        self._sq = np.asarray(self.X.multiply(self.X).sum(axis=1)).ravel()


def make_pool(dataset: RankedDataset, subsample: int = 100_000, seed: int = 0,
              normalize: bool = False) -> NeighborPool:
    """Seeded subsample of at most ``subsample`` users, kept in dataset order."""
    if len(dataset) == 0:
        raise ValueError("empty neighbor pool")
    n = len(dataset)
    if subsample < n:
        rows = np.sort(np.random.default_rng(seed).choice(n, size=subsample, replace=False))
    else:
        rows = np.arange(n)
    return NeighborPool(dataset.X[rows], [dataset.rankings[i] for i in rows], dataset.L,
                        normalize)


def nearest_neighbors(pool: NeighborPool, Q: sp.spmatrix, k: int) -> np.ndarray:
    """Indices of the ``k`` nearest pool rows (Euclidean) for each query row;
    distance ties go to the earlier pool row."""
    n_pool = pool.X.shape[0]
    if not 1 <= k <= n_pool:
        raise ValueError(f"k must be in 1..{n_pool}")
    Q = sp.csr_matrix(Q, dtype=np.float64)
    if pool.normalize:
        Q = l2_normalize_rows(Q)
    q_sq = np.asarray(Q.multiply(Q).sum(axis=1)).ravel()
    out = np.empty((Q.shape[0], k), dtype=np.int64)
    for lo in range(0, Q.shape[0], 512):
        cross = np.asarray((Q[lo:lo + 512] @ pool.X.T).todense())
        dist = np.maximum(q_sq[lo:lo + 512, None] + pool._sq[None, :] - 2 * cross, 0.0)
        for r in range(dist.shape[0]):
            row = dist[r]
            if k < n_pool:
                kth = np.partition(row, k - 1)[k - 1]
                cand = np.flatnonzero(row <= kth)
            else:
                cand = np.arange(n_pool)
            order = np.lexsort((cand, row[cand]))
            out[lo + r] = cand[order[:k]]
    return out


def predict_ib(pool: NeighborPool, x: SparseVector, k: int = 10) -> Ranking:
    idx = sp.csr_matrix((x.values, x.indices, [0, x.nnz]), shape=(1, x.dim))
    return predict_ib_batch(pool, idx, k)[0]


def predict_ib_batch(pool: NeighborPool, Q: sp.spmatrix, k: int = 10) -> list[Ranking]:
    nn = nearest_neighbors(pool, Q, k)
    return [borda_aggregate([pool.rankings[i] for i in row], pool.L) for row in nn]


# ---------------------------------------------------------------------------
# logistic models
# ---------------------------------------------------------------------------

@dataclass
class LinearOvrModel:
    """``W[c, :d]`` weights and ``W[c, d]`` bias of label ``c+1``."""

    W: np.ndarray
    normalize: bool = False

    @property
    def L(self) -> int:
        return self.W.shape[0]

    @property
    def d(self) -> int:
        return self.W.shape[1] - 1


@dataclass
class PairwiseModel:
    """Row ``p`` models P(i > j) for pair ``(i, j) = pairs[p]`` (0-based, i < j)."""

    n_labels: int
    W: np.ndarray
    normalize: bool = False

    @property
    def L(self) -> int:
        return self.n_labels

    @property
    def d(self) -> int:
        return self.W.shape[1] - 1

    @property
    def pairs(self) -> tuple[np.ndarray, np.ndarray]:
        return pair_index(self.n_labels)


def pair_index(n_labels: int) -> tuple[np.ndarray, np.ndarray]:
    """All ``(i, j)`` with ``i < j`` (0-based), row-major."""
    i, j = np.triu_indices(n_labels, k=1)
    return i.astype(np.int64), j.astype(np.int64)


def lr_targets(ranking: Sequence[int], n_labels: int) -> np.ndarray:
    """+1 for labels present in the ranking, -1 otherwise."""
    y = -np.ones(n_labels)
    y[np.asarray(ranking, dtype=np.int64) - 1] = 1.0
    return y


def pairwise_targets(ranking: Sequence[int], n_labels: int) -> dict[tuple[int, int], int]:
    """Determined pair labels: ``{(i, j): +1 if i > j else -1}``, 1-based ``i < j``.

    Pairs where neither label is ranked are absent.
    """
    pos = {a: p for p, a in enumerate(ranking)}
    out = {}
    for i in range(1, n_labels + 1):
        for j in range(i + 1, n_labels + 1):
            pi, pj = pos.get(i), pos.get(j)
            if pi is None and pj is None:
                continue
            out[(i, j)] = 1 if (pi is not None and (pj is None or pi < pj)) else -1
    return out


def logistic_objective(w: np.ndarray, x: np.ndarray, y: float, lam: float) -> float:
    """``lam/2 ||w||^2 + log(1 + exp(-y w.[x, 1]))`` for one example."""
    s = float(w[:-1] @ x + w[-1])
    return 0.5 * lam * float(w @ w) + float(np.logaddexp(0.0, -y * s))


def fit_lr(dataset: RankedDataset, cfg: TrainConfig) -> LinearOvrModel:
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    W = np.zeros((dataset.L, dataset.d + 1))
    scale = np.ones(dataset.L)
    steps = np.zeros(dataset.L, dtype=np.int64)
    indptr, indices, data = training_arrays(dataset, cfg.l2_normalize)
    rptr, rlab = dataset.ranking_arrays()
    for order in epoch_orders(len(dataset), cfg.epochs, cfg.seed):
        K.ovr_epoch(W, scale, steps, indptr, indices, data, rptr, rlab, order, float(cfg.lam))
    return LinearOvrModel(W * scale[:, None], cfg.l2_normalize)


def lr_scores(model: LinearOvrModel, X: sp.spmatrix) -> np.ndarray:
    X = _prepared(X, model.d, model.normalize)
    return np.asarray(X @ model.W[:, :-1].T) + model.W[:, -1]


def predict_lr(model: LinearOvrModel, x: SparseVector) -> Ranking:
    return ranking_from_scores(lr_scores(model, _row(x))[0])


def fit_pw(dataset: RankedDataset, cfg: TrainConfig) -> PairwiseModel:
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    pi, pj = pair_index(dataset.L)
    W = np.zeros((pi.size, dataset.d + 1))
    scale = np.ones(pi.size)
    steps = np.zeros(pi.size, dtype=np.int64)
    indptr, indices, data = training_arrays(dataset, cfg.l2_normalize)
    rptr, rlab = dataset.ranking_arrays()
    for order in epoch_orders(len(dataset), cfg.epochs, cfg.seed):
        K.pairwise_epoch(W, scale, steps, pi, pj, indptr, indices, data, rptr, rlab, order,
                         float(cfg.lam), dataset.L)
    return PairwiseModel(dataset.L, W * scale[:, None], cfg.l2_normalize)


def pairwise_probabilities(model: PairwiseModel, X: sp.spmatrix) -> np.ndarray:
    X = _prepared(X, model.d, model.normalize)
    s = np.asarray(X @ model.W[:, :-1].T) + model.W[:, -1]
    return 0.5 * (1.0 + np.tanh(0.5 * s))


def votes_from_probabilities(P: np.ndarray, n_labels: int) -> np.ndarray:
    """vote(i) += p_ij and vote(j) += 1 - p_ij over all pairs; shape (n, L)."""
    pi, pj = pair_index(n_labels)
    P = np.atleast_2d(P)
    votes = np.zeros((P.shape[0], n_labels))
    np.add.at(votes.T, pi, P.T)
    np.add.at(votes.T, pj, 1.0 - P.T)
    return votes


def pw_scores(model: PairwiseModel, X: sp.spmatrix) -> np.ndarray:
    return votes_from_probabilities(pairwise_probabilities(model, X), model.n_labels)


def predict_pw(model: PairwiseModel, x: SparseVector) -> Ranking:
    return ranking_from_scores(pw_scores(model, _row(x))[0])


def _row(x: SparseVector) -> sp.csr_matrix:
    return sp.csr_matrix((x.values, x.indices, [0, x.nnz]), shape=(1, x.dim))


def _prepared(X: sp.spmatrix, d: int, normalize: bool) -> sp.csr_matrix:
    X = sp.csr_matrix(X, dtype=np.float64)
    if X.shape[1] != d:
        raise ValueError(f"dimension mismatch: data has {X.shape[1]}, model has {d}")
    return l2_normalize_rows(X) if normalize else X


# ---------------------------------------------------------------------------
# batch prediction and model files
# ---------------------------------------------------------------------------

def predict_rankings(model, X: sp.spmatrix) -> np.ndarray:
    """Full rankings for every row of ``X`` (1-based labels), shape (n, L)."""
    X = sp.csr_matrix(X, dtype=np.float64)
    if isinstance(model, CentralRankModel):
        return np.tile(np.array(model.central), (X.shape[0], 1))
    if isinstance(model, GroupedRankModel):
        rows = []
        for t in range(X.shape[0]):
            lo, hi = X.indptr[t], X.indptr[t + 1]
            key = model.layout.group_of(X.indices[lo:hi], X.data[lo:hi])
            rows.append(model.fallback if key is None else model.groups.get(key, model.fallback))
        return np.array(rows, dtype=np.int64).reshape(X.shape[0], model.L)
    if isinstance(model, LinearOvrModel):
        return rankings_from_score_matrix(lr_scores(model, X))
    if isinstance(model, PairwiseModel):
        return rankings_from_score_matrix(pw_scores(model, X))
    raise TypeError(f"unsupported model type {type(model).__name__}")


def _fmt(v: float) -> str:
    return repr(float(v))


def save_baseline(model, stream: TextIO) -> None:
    if isinstance(model, CentralRankModel):
        stream.write(f"#central L={model.L}\n{format_ranking(model.central)}\n")
    elif isinstance(model, GroupedRankModel):
        lay = model.layout
        stream.write(f"#ag L={model.L} age={','.join(str(i + 1) for i in lay.age)} "
                     f"gender={','.join(str(i + 1) for i in lay.gender)}\n")
        stream.write(f"fallback {format_ranking(model.fallback)}\n")
        for (age, gender), r in sorted(model.groups.items()):
            stream.write(f"{age} {gender} {format_ranking(r)}\n")
    elif isinstance(model, LinearOvrModel):
        stream.write(f"#lr L={model.L} d={model.d} normalize={int(model.normalize)}\n")
        for c in range(model.L):
            w = model.W[c]
            stream.write(f"{c + 1} {_fmt(w[-1])} " + " ".join(map(_fmt, w[:-1])) + "\n")
    elif isinstance(model, PairwiseModel):
        stream.write(f"#pw L={model.L} d={model.d} normalize={int(model.normalize)}\n")
        pi, pj = model.pairs
        for p in range(pi.size):
            w = model.W[p]
            stream.write(f"{pi[p] + 1} {pj[p] + 1} {_fmt(w[-1])} "
                         + " ".join(map(_fmt, w[:-1])) + "\n")
    else:
        raise TypeError(f"unsupported model type {type(model).__name__}")


def _ranking_field(text: str, n_labels: int, lineno: int) -> Ranking:
    try:
        r = check_ranking((int(a) for a in text.split(",")), n_labels)
    except ValueError as exc:
        raise FormatError(str(exc), lineno) from None
    if len(r) != n_labels:
        raise FormatError("stored rankings must be full permutations", lineno)
    return r


def load_baseline(stream: TextIO):
    first = stream.readline()
    tag = first.split()[0].lstrip("#") if first.strip() else ""
    if tag not in ("central", "ag", "lr", "pw"):
        raise FormatError(f"unknown model header {first.strip()!r}", 1)
    head = parse_header(first, tag)
    L = int(head["L"])
    lines = [(n, ln.split()) for n, ln in enumerate(stream, start=2) if ln.strip()]
    if tag == "central":
        return CentralRankModel(_ranking_field(lines[0][1][0], L, lines[0][0]))
    if tag == "ag":
        layout = DemographicLayout(tuple(int(i) - 1 for i in head["age"].split(",")),
                                   tuple(int(i) - 1 for i in head["gender"].split(",")))
        fallback, groups = None, {}
        for n, parts in lines:
            if parts[0] == "fallback":
                fallback = _ranking_field(parts[1], L, n)
            else:
                groups[(int(parts[0]), int(parts[1]))] = _ranking_field(parts[2], L, n)
        if fallback is None:
            raise FormatError("missing fallback ranking", 1)
        return GroupedRankModel(layout, fallback, groups)
    d = int(head["d"])
    normalize = head.get("normalize", "0") == "1"
    if tag == "lr":
        W = np.zeros((L, d + 1))
        for n, parts in lines:
            if len(parts) != d + 2:
                raise FormatError(f"expected label, bias and {d} weights", n)
            c = int(parts[0]) - 1
            W[c, -1] = float(parts[1])
            W[c, :-1] = [float(v) for v in parts[2:]]
        return LinearOvrModel(W, normalize)
    pi, pj = pair_index(L)
    row_of = {(int(a), int(b)): p for p, (a, b) in enumerate(zip(pi, pj))}
    W = np.zeros((pi.size, d + 1))
    for n, parts in lines:
        if len(parts) != d + 3:
            raise FormatError(f"expected pair, bias and {d} weights", n)
        p = row_of.get((int(parts[0]) - 1, int(parts[1]) - 1))
        if p is None:
            raise FormatError("pair must satisfy 1 <= i < j <= L", n)
        W[p, -1] = float(parts[2])
        W[p, :-1] = [float(v) for v in parts[3:]]
    return PairwiseModel(L, W, normalize)
