"""Finite-difference checks of the SGD steps.

The analytic subgradient is recovered from one real SGD step:
``w_new = (1 - 1/t) w - eta * (hinge part)`` with ``eta = 1 / (lam t)``
gives ``(w - w_new) / eta = lam * w + d loss / d w``. It is compared with
central differences of ``lam/2 ||W||^2 + loss`` evaluated with the active
slots frozen, at points whose hinge arguments and arg-max gaps are all at
least ``MARGIN`` away from a kink.
"""

import numpy as np
import scipy.sparse as sp

from ammrank import _kernels as K
from ammrank.amm_model import AmmModel
from ammrank.amm_multiclass import multiclass_loss, multiclass_sgd_step
from ammrank.amm_rank import active_indices, preference_pairs, rank_loss, rank_sgd_step
from ammrank.baselines import logistic_objective, lr_targets, pair_index, pairwise_targets
from ammrank.core import SparseVector

MARGIN = 1e-3
H = 1e-6
LAM = 0.5
T = 3


def relative_error(a, b):
    a, b = np.ravel(a), np.ravel(b)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-12))


def _stored(model):
    return [model.weights(c).copy() for c in range(1, model.L + 1)]


def _model_from(blocks, d):
    m = AmmModel(len(blocks), d)
    for c, block in enumerate(blocks, start=1):
        for w in block:
            m.add_weight(c, w)
    return m


def _random_case(rng):
    L = int(rng.integers(2, 6))
    d = int(rng.integers(2, 6))
    blocks = [rng.standard_normal((int(rng.integers(1, 4)), d)) + 0.7 for _ in range(L)]
    x = SparseVector.from_dense(rng.random(d) + 0.05)
    return L, d, blocks, x


def _clear_argmax(blocks, xd):
    """Every class has a positive, unique best stored dot."""
    for block in blocks:
        dots = np.sort(block @ xd)[::-1]
        if dots[0] < MARGIN or (dots.size > 1 and dots[0] - dots[1] < MARGIN):
            return False
    return True


def _fd_gradient(blocks, d, objective):
    grads = []
    for c, block in enumerate(blocks):
        g = np.zeros_like(block)
        for k in range(block.shape[0]):
            for i in range(d):
                plus = [b.copy() for b in blocks]
                minus = [b.copy() for b in blocks]
                plus[c][k, i] += H
                minus[c][k, i] -= H
                g[k, i] = (objective(plus) - objective(minus)) / (2 * H)
        grads.append(g)
    return grads


def _step_gradient(before, after):
    eta = 1.0 / (LAM * T)
    return [(b - a) / eta for b, a in zip(before, after)]


def _regularizer(blocks):
    return 0.5 * LAM * sum(float(np.sum(b * b)) for b in blocks)


def rank_gradient_errors(n_cases, seed=0, mode="constant"):
    """Relative errors of the rank step against finite differences."""
    rng = np.random.default_rng(seed)
    errors = []
    while len(errors) < n_cases:
        L, d, blocks, x = _random_case(rng)
        xd = x.to_dense()
        if not _clear_argmax(blocks, xd):
            continue
        pi = tuple(int(a) for a in rng.permutation(L)[:rng.integers(1, L + 1)] + 1)
        g = [float(np.max(b @ xd)) for b in blocks]
        if any(abs(1 + g[j - 1] - g[a - 1]) < MARGIN for _, a, j in preference_pairs(pi, L)):
            continue
        model = _model_from(blocks, d)
        z = active_indices(model, x)

        def objective(bl):
            return _regularizer(bl) + rank_loss(_model_from(bl, d), x, pi, z, mode)

        stepped = model.copy()
        rank_sgd_step(stepped, x, pi, T, LAM, mode)
        assert np.array_equal(stepped.counts, model.counts)
        analytic = _step_gradient(_stored(model), _stored(stepped))
        numeric = _fd_gradient(blocks, d, objective)
        errors.append(relative_error(np.concatenate([a.ravel() for a in analytic]),
                                     np.concatenate([n.ravel() for n in numeric])))
    return errors


def multiclass_gradient_errors(n_cases, seed=0):
    rng = np.random.default_rng(seed)
    errors = []
    while len(errors) < n_cases:
        L, d, blocks, x = _random_case(rng)
        xd = x.to_dense()
        if not _clear_argmax(blocks, xd):
            continue
        y = int(rng.integers(1, L + 1))
        g = np.array([np.max(b @ xd) for b in blocks])
        others = np.sort(np.delete(g, y - 1))[::-1]
        if others.size > 1 and others[0] - others[1] < MARGIN:
            continue
        if abs(1 + others[0] - g[y - 1]) < MARGIN:
            continue
        model = _model_from(blocks, d)
        z = int(active_indices(model, x)[y - 1])

        def objective(bl):
            return _regularizer(bl) + multiclass_loss(_model_from(bl, d), x, y, z)

        stepped = model.copy()
        multiclass_sgd_step(stepped, x, y, T, LAM)
        assert np.array_equal(stepped.counts, model.counts)
        analytic = _step_gradient(_stored(model), _stored(stepped))
        numeric = _fd_gradient(blocks, d, objective)
        errors.append(relative_error(np.concatenate([a.ravel() for a in analytic]),
                                     np.concatenate([n.ravel() for n in numeric])))
    return errors


def _fd_logistic(w, xd, y):
    g = np.zeros_like(w)
    for i in range(w.size):
        e = np.zeros_like(w)
        e[i] = H
        g[i] = (logistic_objective(w + e, xd, y, LAM)
                - logistic_objective(w - e, xd, y, LAM)) / (2 * H)
    return g


def logistic_gradient_errors(n_cases, seed=0, kind="ovr"):
    """One epoch over a single instance of the one-vs-rest or pairwise trainer,
    every model row checked against its own logistic objective."""
    rng = np.random.default_rng(seed)
    errors = []
    while len(errors) < n_cases:
        L = int(rng.integers(2, 6))
        d = int(rng.integers(1, 6))
        xd = rng.standard_normal(d)
        X = sp.csr_matrix(xd[None, :])
        pi = tuple(int(a) for a in rng.permutation(L)[:rng.integers(1, L + 1)] + 1)
        indptr = X.indptr.astype(np.int64)
        indices = X.indices.astype(np.int64)
        data = X.data.astype(np.float64)
        rptr = np.array([0, len(pi)], dtype=np.int64)
        rlab = np.array(pi, dtype=np.int64) - 1
        order = np.zeros(1, dtype=np.int64)
        if kind == "ovr":
            rows = L
            targets = lr_targets(pi, L)
        else:
            pi_idx, pj_idx = pair_index(L)
            rows = pi_idx.size
            det = pairwise_targets(pi, L)
            targets = np.array([det.get((int(i) + 1, int(j) + 1), 0)
                                for i, j in zip(pi_idx, pj_idx)], dtype=float)
        W = rng.standard_normal((rows, d + 1))
        before = W.copy()
        scale = np.ones(rows)
        steps = np.full(rows, T - 1, dtype=np.int64)
        if kind == "ovr":
            K.ovr_epoch(W, scale, steps, indptr, indices, data, rptr, rlab, order, LAM)
        else:
            K.pairwise_epoch(W, scale, steps, pi_idx, pj_idx, indptr, indices, data, rptr,
                             rlab, order, LAM, L)
        after = W * scale[:, None]
        eta = 1.0 / (LAM * T)
        for r in range(rows):
            if targets[r] == 0:
                # undetermined pair: no step at all
                assert steps[r] == T - 1 and np.array_equal(after[r], before[r])
                continue
            analytic = (before[r] - after[r]) / eta
            numeric = _fd_logistic(before[r], xd, targets[r])
            errors.append(relative_error(analytic, numeric))
    return errors[:n_cases]
