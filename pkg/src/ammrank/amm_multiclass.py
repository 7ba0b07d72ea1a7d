"""Multiclass AMM trained on the top-ranked label of each instance."""

from __future__ import annotations

import numpy as np

from . import _kernels as K
from .amm_model import ZERO_SLOT, AmmModel, TrainConfig, epoch_orders, training_arrays
from .core import RankedDataset, SparseVector


def _dot_table(model: AmmModel, x: SparseVector) -> list[np.ndarray]:
    xd = x.to_dense()
    return [model.weights(c) @ xd for c in range(1, model.L + 1)]


def multiclass_loss(model: AmmModel, x: SparseVector, y: int, z: int) -> float:
    """``max(0, 1 + max_{i != y} g(i, x) - w_{y,z} . x)`` on the raw input ``x``."""
    if x.dim != model.d:
        raise ValueError("dimension mismatch")
    if not 1 <= y <= model.L:
        raise ValueError(f"label {y} out of range")
    table = _dot_table(model, x)
    if z == ZERO_SLOT:
        own = 0.0
    elif 0 <= z < table[y - 1].size:
        own = float(table[y - 1][z])
    else:
        raise ValueError(f"invalid weight index {z} for class {y}")
    others = [max(0.0, float(t.max(initial=0.0))) for c, t in enumerate(table, 1) if c != y]
    if not others:
        return 0.0
    return max(0.0, 1.0 + max(others) - own)


def multiclass_sgd_step(model: AmmModel, x: SparseVector, y: int, t: int, lam: float) -> float:
    """One SGD step with learning rate ``1 / (lam * t)``; returns the hinge loss."""
    if t < 1:
        raise ValueError("t must be >= 1")
    if x.dim != model.d:
        raise ValueError("dimension mismatch")
    model._class(y)
    L, cap = model.L, model.capacity
    return float(K.multiclass_step(
        model.V, model.counts, model.scale, x.indices, x.values, y - 1, t, float(lam),
        np.zeros((L, cap)), np.zeros(L, dtype=np.int64), np.zeros(L),
        np.zeros(L, dtype=np.int64)))


def train_multiclass(dataset: RankedDataset, cfg: TrainConfig) -> AmmModel:
    """Train on ``y_t = pi_t[1]`` with seeded shuffled epochs and a global step count."""
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    model = AmmModel(dataset.L, dataset.d, cfg.max_weights_per_class,
                     normalize=cfg.l2_normalize)
    indptr, indices, data = training_arrays(dataset, cfg.l2_normalize)
    targets = np.array([r[0] - 1 for r in dataset.rankings], dtype=np.int64)
    period = cfg.resolved_prune_period(dataset.d)
    t = 0
    for order in epoch_orders(len(dataset), cfg.epochs, cfg.seed):
        t = K.multiclass_epoch(model.V, model.counts, model.scale, indptr, indices, data,
                               targets, order, t, float(cfg.lam), period,
                               float(cfg.prune_threshold))
    return model.finalize()
