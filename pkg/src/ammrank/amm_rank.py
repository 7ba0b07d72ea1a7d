"""AMM-rank: multi-hyperplane label ranking trained with a rank hinge loss.

For an instance ``(x, pi)`` the loss sums, over every ranked position
``i`` and every label ``j`` ranked below it (unranked labels included),
``nu(i) * max(0, 1 + g(j, x) - w_{pi_i, z_{pi_i}} . x)``. Training is SGD
with learning rate ``1 / (lam * t)``, regularizer ``lam / 2 ||W||^2``,
and per-class active weights chosen on the fly.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from . import _kernels as K
from .amm_model import (NU_MODES, ZERO_SLOT, AmmModel, TrainConfig, epoch_orders,
                        training_arrays)
from .core import RankedDataset, SparseVector, check_ranking


def nu(position: int, mode: str = "constant") -> float:
    """Importance of rank ``position`` (1-based): 1, or ``1 / position``."""
    if position < 1:
        raise ValueError("rank positions start at 1")
    if mode == "constant":
        return 1.0
    if mode == "inverse_rank":
        return 1.0 / position
    raise ValueError(f"nu mode must be one of {NU_MODES}")


def active_indices(model: AmmModel, x: SparseVector) -> np.ndarray:
    """``z``: the active slot of every class for raw input ``x``."""
    if x.dim != model.d:
        raise ValueError("dimension mismatch")
    _, z, _, _ = model._active(x)
    return z


def preference_pairs(pi: Sequence[int], n_labels: int):
    """Yield ``(position, better, worse)`` for every pair implied by ``pi``."""
    ranked = set(pi)
    for p, a in enumerate(pi, start=1):
        worse = list(pi[p:]) + [j for j in range(1, n_labels + 1) if j not in ranked]
        for j in worse:
            yield p, a, j


def rank_loss(model: AmmModel, x: SparseVector, pi: Sequence[int], z: Sequence[int],
              mode: str = "constant") -> float:
    """Weighted rank hinge loss of ranking ``pi`` with active slots ``z``."""
    if x.dim != model.d:
        raise ValueError("dimension mismatch")
    pi = check_ranking(pi, model.L)
    if len(z) != model.L:
        raise ValueError("need one active index per class")
    xd = x.to_dense()
    dots = [model.weights(c) @ xd for c in range(1, model.L + 1)]
    g = [max(0.0, float(d.max(initial=0.0))) for d in dots]

    def own(label: int) -> float:
        k = int(z[label - 1])
        if k == ZERO_SLOT:
            return 0.0
        if not 0 <= k < dots[label - 1].size:
            raise ValueError(f"invalid weight index {k} for class {label}")
        return float(dots[label - 1][k])

    total = 0.0
    for p, a, j in preference_pairs(pi, model.L):
        total += nu(p, mode) * max(0.0, 1.0 + g[j - 1] - own(a))
    return total


def rank_sgd_step(model: AmmModel, x: SparseVector, pi: Sequence[int], t: int, lam: float,
                  mode: str = "constant") -> None:
    """One SGD step on raw input ``x``.

    Active slots and hinge indicators come from the pre-update weights;
    the shrink by ``1 - 1/t`` and all pulls and pushes are then applied
    together.
    """
    if t < 1:
        raise ValueError("t must be >= 1")
    if x.dim != model.d:
        raise ValueError("dimension mismatch")
    nu(1, mode)
    pi = check_ranking(pi, model.L)
    L, cap = model.L, model.capacity
    K.rank_step(model.V, model.counts, model.scale, x.indices, x.values,
                np.array(pi, dtype=np.int64) - 1, t, float(lam), mode == "inverse_rank",
                np.zeros((L, cap)), np.zeros(L, dtype=np.int64), np.zeros(L),
                np.zeros(L, dtype=np.int64), np.zeros(L, dtype=np.int64), np.zeros(L))


def train_rank(dataset: RankedDataset, cfg: TrainConfig) -> AmmModel:
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    model = AmmModel(dataset.L, dataset.d, cfg.max_weights_per_class,
                     normalize=cfg.l2_normalize)
    indptr, indices, data = training_arrays(dataset, cfg.l2_normalize)
    rptr, rlab = dataset.ranking_arrays()
    period = cfg.resolved_prune_period(dataset.d)
    inverse = cfg.nu_mode == "inverse_rank"
    t = 0
    for order in epoch_orders(len(dataset), cfg.epochs, cfg.seed):
        t = K.rank_epoch(model.V, model.counts, model.scale, indptr, indices, data,
                         rptr, rlab, order, t, float(cfg.lam), inverse, period,
                         float(cfg.prune_threshold))
    return model.finalize()
