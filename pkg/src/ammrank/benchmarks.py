"""Algorithm registry, synthetic linear benchmark and k-fold cross-validation."""

from __future__ import annotations

import io
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence, TextIO

import numpy as np
import scipy.sparse as sp

from . import baselines as B
from .amm_model import AmmModel, TrainConfig, load_model, predict_rankings as amm_predict, save_model
from .amm_multiclass import train_multiclass
from .amm_rank import train_rank
from .core import RankedDataset
from .metrics import EvalReport, evaluate

ALGORITHMS = ("amm", "amm-rank", "central-mal", "ag-mal", "ib-mal", "lr", "pw-lr")
TRAINABLE = tuple(a for a in ALGORITHMS if a != "ib-mal")
TUNABLE = ("amm", "amm-rank", "lr", "pw-lr")


def make_linear_rankings(n: int, n_labels: int, dim: int, seed: int = 0,
                         W: np.ndarray | None = None) -> tuple[RankedDataset, np.ndarray]:
    """Full rankings ``argsort(-W x)`` for ``x ~ U[0, 1]^dim`` and Gaussian ``W``.

    Non-negative inputs keep the problem representable with non-negative
    class scores (adding a multiple of ``sum(x)`` to every score changes
    no ranking). Returns the dataset and ``W`` so a test set can share it.
    """
    rng = np.random.default_rng(seed)
    if W is None:
        W = rng.standard_normal((n_labels, dim))
    X = rng.random((n, dim))
    order = np.argsort(-(X @ W.T), axis=1, kind="stable") + 1
    return RankedDataset(sp.csr_matrix(X), order.tolist(), n_labels, dim), W


@dataclass
class IbPool:
    """Lazy IB-Mal "model": the neighbour pool plus k."""

    pool: B.NeighborPool
    k: int = 10

    @property
    def L(self) -> int:
        return self.pool.L


def fit(algo: str, train: RankedDataset, cfg: TrainConfig, k: int = 10,
        subsample: int = 100_000):
    if algo == "amm":
        return train_multiclass(train, cfg)
    if algo == "amm-rank":
        return train_rank(train, cfg)
    if algo == "central-mal":
        return B.fit_central(train)
    if algo == "ag-mal":
        return B.fit_ag(train, B.DemographicLayout.trailing(train.d))
    if algo == "ib-mal":
        pool = B.make_pool(train, subsample, cfg.seed, normalize=cfg.l2_normalize)
        return IbPool(pool, min(k, pool.X.shape[0]))
    if algo == "lr":
        return B.fit_lr(train, cfg)
    if algo == "pw-lr":
        return B.fit_pw(train, cfg)
    raise ValueError(f"unknown algorithm {algo!r}; choose from {', '.join(ALGORITHMS)}")


def predict(model, X: sp.spmatrix) -> np.ndarray:
    """Full rankings (1-based) for every row, shape (n, L)."""
    if isinstance(model, AmmModel):
        return amm_predict(model, X)
    if isinstance(model, IbPool):
        return np.array(B.predict_ib_batch(model.pool, X, model.k), dtype=np.int64)
    return B.predict_rankings(model, X)


def save(model, stream: TextIO) -> None:
    if isinstance(model, AmmModel):
        save_model(model, stream)
    else:
        B.save_baseline(model, stream)


def load(stream: TextIO):
    first = stream.readline()
    buf = io.StringIO(first + stream.read())
    if first.startswith("#amm"):
        return load_model(buf)
    return B.load_baseline(buf)


def evaluate_model(model, test: RankedDataset, k_max: int = 10) -> EvalReport:
    if model.L != test.L:
        raise ValueError(f"label count mismatch: model L={model.L}, data L={test.L}")
    preds = predict(model, test.X)
    return evaluate(preds.tolist(), test.rankings, test.L, k_max)


# ---------------------------------------------------------------------------
# cross-validation
# ---------------------------------------------------------------------------

def fold_assignment(n: int, folds: int, seed: int) -> np.ndarray:
    """Seeded fold id per instance; sizes differ by at most one."""
    if folds < 2:
        raise ValueError("need at least 2 folds")
    if folds > n:
        raise ValueError(f"{folds} folds exceed the {n} instances")
    ids = np.arange(n) % folds
    return np.random.default_rng(seed).permutation(ids)


def select_lambda(algo: str, train: RankedDataset, cfg: TrainConfig,
                  grid: Sequence[float], holdout: float = 0.2) -> float:
    """Pick lambda from ``grid`` by disagreement error on an inner held-out slice."""
    grid = list(grid)
    if algo not in TUNABLE or len(grid) <= 1:
        return grid[0] if grid else cfg.lam
    rng = np.random.default_rng(cfg.seed + 7919)
    perm = rng.permutation(len(train))
    n_hold = max(1, int(round(holdout * len(train))))
    inner, held = train.subset(np.sort(perm[n_hold:])), train.subset(np.sort(perm[:n_hold]))
    errors = [evaluate_model(fit(algo, inner, replace(cfg, lam=lam)), held, 1).dis_error
              for lam in grid]
    return grid[int(np.argmin(errors))]


@dataclass
class FoldResult:
    algo: str
    fold: int
    lam: float | None
    report: EvalReport
    seconds: float
    model: object = field(default=None, repr=False)


def _run_fold(args) -> FoldResult:
    algo, fold, train, test, cfg, grid, k, subsample, k_max, keep_model = args
    start = time.perf_counter()
    lam = None
    if algo in TUNABLE:
        lam = select_lambda(algo, train, cfg, grid) if grid else cfg.lam
        cfg = replace(cfg, lam=lam)
    model = fit(algo, train, cfg, k=k, subsample=subsample)
    report = evaluate_model(model, test, k_max)
    return FoldResult(algo, fold, lam, report, time.perf_counter() - start,
                      model if keep_model else None)


@dataclass
class CvSummary:
    algos: list[str]
    folds: list[FoldResult]
    k_max: int

    def per_algo(self, algo: str) -> list[FoldResult]:
        return [f for f in self.folds if f.algo == algo]

    def mean_dis_error(self, algo: str) -> float:
        return float(np.mean([f.report.dis_error for f in self.per_algo(algo)]))

    def mean_curve(self, algo: str, metric: str) -> list[float]:
        rows = [getattr(f.report, metric) for f in self.per_algo(algo)]
        return np.mean(np.array(rows), axis=0).tolist()

    def write_csv(self, stream: TextIO) -> None:
        ks = range(1, self.k_max + 1)
        cols = ["algo", "dis_error", "dis_error_std"]
        for m in ("precision", "recall", "f1"):
            cols += [f"{m}@{k}" for k in ks]
        stream.write(",".join(cols) + "\n")
        for algo in self.algos:
            errs = [f.report.dis_error for f in self.per_algo(algo)]
            vals = [float(np.mean(errs)), float(np.std(errs))]
            for m in ("precision", "recall", "f1"):
                vals += self.mean_curve(algo, m)
            stream.write(algo + "," + ",".join(repr(float(v)) for v in vals) + "\n")

    def write_table(self, stream: TextIO) -> None:
        ks = [k for k in (1, 3, 5, 10) if k <= self.k_max]
        head = f"{'Algorithm':<12} {'dis_error':>10}" + "".join(
            f" {'P@' + str(k):>7} {'R@' + str(k):>7} {'F1@' + str(k):>7}" for k in ks)
        stream.write(head + "\n" + "-" * len(head) + "\n")
        for algo in self.algos:
            p, r, f = (self.mean_curve(algo, m) for m in ("precision", "recall", "f1"))
            line = f"{algo:<12} {self.mean_dis_error(algo):>10.4f}" + "".join(
                f" {p[k - 1]:>7.4f} {r[k - 1]:>7.4f} {f[k - 1]:>7.4f}" for k in ks)
            stream.write(line + "\n")


def cross_validate(dataset: RankedDataset, algos: Sequence[str], cfg: TrainConfig,
                   folds: int = 5, lambda_grid: Sequence[float] | None = None,
                   k: int = 10, subsample: int = 100_000, k_max: int = 10,
                   jobs: int = 1, keep_models: bool = False) -> CvSummary:
    """Seeded k-fold CV; every algorithm sees the same folds."""
    for algo in algos:
        if algo not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {algo!r}")
    k_max = min(k_max, dataset.L)
    assign = fold_assignment(len(dataset), folds, cfg.seed)
    tasks = []
    for f in range(folds):
        train = dataset.subset(np.flatnonzero(assign != f))
        test = dataset.subset(np.flatnonzero(assign == f))
        for algo in algos:
            tasks.append((algo, f, train, test, cfg, list(lambda_grid or []), k, subsample,
                          k_max, keep_models))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_fold, tasks))
    else:
        results = [_run_fold(t) for t in tasks]
    return CvSummary(list(algos), results, k_max)
