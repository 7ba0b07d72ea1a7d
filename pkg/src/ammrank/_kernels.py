"""Jitted inner loops for the SGD trainers.

Conventions inside this module: labels and feature indices are 0-based,
``ZERO`` (-1) denotes the implicit zero-weight slot of a class. Effective
weights are ``scale[0] * V``; the scalar is kept in a 1-element array so
kernels can update it in place.
"""

import numpy as np
from numba import njit

ZERO = -1
_FOLD_BELOW = 1e-9


@njit(cache=True)
def class_dots(V, counts, scale, idx, val, dots):
    n_classes = V.shape[0]
    s = scale[0]
    for c in range(n_classes):
        for k in range(counts[c]):
            acc = 0.0
            for n in range(idx.shape[0]):
                acc += V[c, k, idx[n]] * val[n]
            dots[c, k] = acc * s


@njit(cache=True)
def select_active(dots, counts, z, g, top):
    """Per class: arg-max stored weight ``top`` (lowest index on ties), the
    active slot ``z`` (zero slot when every stored dot is negative) and the
    class score ``g = max(0, stored dots)``."""
    for c in range(counts.shape[0]):
        best = ZERO
        bestv = 0.0
        for k in range(counts[c]):
            if best == ZERO or dots[c, k] > bestv:
                best = k
                bestv = dots[c, k]
        top[c] = best
        if best != ZERO and bestv >= 0.0:
            z[c] = best
            g[c] = bestv
        else:
            z[c] = ZERO
            g[c] = 0.0


@njit(cache=True)
def shrink(V, counts, scale, t):
    factor = 1.0 - 1.0 / t
    if factor <= 0.0:
        for c in range(V.shape[0]):
            for k in range(counts[c]):
                V[c, k, :] = 0.0
        scale[0] = 1.0
        return
    scale[0] *= factor
    if scale[0] < _FOLD_BELOW:
        fold_scale(V, counts, scale)


@njit(cache=True)
def fold_scale(V, counts, scale):
    s = scale[0]
    if s == 1.0:
        return
    for c in range(V.shape[0]):
        for k in range(counts[c]):
            V[c, k, :] *= s
    scale[0] = 1.0


@njit(cache=True)
def promote_or_update(V, counts, scale, c, slot, top, step, idx, val):
    """Add ``step * x`` to weight ``slot`` of class ``c``.

    A zero-slot update appends a new stored weight; at capacity it goes to
    the arg-max stored weight ``top`` instead. Returns the slot written.
    """
    cap = V.shape[1]
    if slot == ZERO:
        if counts[c] < cap:
            slot = counts[c]
            V[c, slot, :] = 0.0
            counts[c] += 1
        else:
            slot = top
    inv = step / scale[0]
    for n in range(idx.shape[0]):
        V[c, slot, idx[n]] += inv * val[n]
    return slot


@njit(cache=True)
def step_update(V, counts, scale, c, slot, top, step, idx, val):
    """Training-step wrapper around ``promote_or_update``.

    A push (``step < 0``) on the zero slot of a full class is dropped: without
    a cap it would store a weight that never beats the zero slot on ``x``,
    while redirecting it would drag the class's best weight below zero.
    """
    if step < 0.0 and slot == ZERO and counts[c] == V.shape[1]:
        return
    promote_or_update(V, counts, scale, c, slot, top, step, idx, val)


@njit(cache=True)
def prune(V, counts, scale, threshold):
    fold_scale(V, counts, scale)
    removed = 0
    d = V.shape[2]
    for c in range(V.shape[0]):
        kept = 0
        for k in range(counts[c]):
            sq = 0.0
            for f in range(d):
                sq += V[c, k, f] * V[c, k, f]
            if sq > threshold:
                if kept != k:
                    V[c, kept, :] = V[c, k, :]
                kept += 1
            else:
                removed += 1
        for k in range(kept, counts[c]):
            V[c, k, :] = 0.0
        counts[c] = kept
    return removed


# ---------------------------------------------------------------------------
# rank loss step
# ---------------------------------------------------------------------------

@njit(cache=True)
def rank_coefficients(g, ranking, n_labels, inverse_nu, pos, coef):
    """Signed per-class multipliers of ``x`` in the rank-loss subgradient.

    coef[a] accumulates pulls (a preferred, margin violated) and coef[j]
    the matching pushes, each weighted by the importance of the rank
    position of the preferred label.
    """
    for c in range(n_labels):
        pos[c] = -1
        coef[c] = 0.0
    n_ranked = ranking.shape[0]
    for p in range(n_ranked):
        pos[ranking[p]] = p
    for p in range(n_ranked):
        a = ranking[p]
        nu = 1.0 / (p + 1) if inverse_nu else 1.0
        for j in range(n_labels):
            if j == a:
                continue
            pj = pos[j]
            if pj == -1 or pj > p:
                if 1.0 + g[j] - g[a] > 0.0:
                    coef[a] += nu
                    coef[j] -= nu


@njit(cache=True)
def rank_step(V, counts, scale, idx, val, ranking, t, lam, inverse_nu,
              dots, z, g, top, pos, coef):
    n_labels = V.shape[0]
    class_dots(V, counts, scale, idx, val, dots)
    select_active(dots, counts, z, g, top)
    rank_coefficients(g, ranking, n_labels, inverse_nu, pos, coef)
    eta = 1.0 / (lam * t)
    shrink(V, counts, scale, t)
    for c in range(n_labels):
        if coef[c] != 0.0:
            step_update(V, counts, scale, c, z[c], top[c], eta * coef[c], idx, val)


@njit(cache=True)
def rank_epoch(V, counts, scale, indptr, indices, data, rptr, rlab, order, t0,
               lam, inverse_nu, prune_period, prune_threshold):
    n_labels = V.shape[0]
    cap = V.shape[1]
    dots = np.zeros((n_labels, cap))
    z = np.zeros(n_labels, dtype=np.int64)
    g = np.zeros(n_labels)
    top = np.zeros(n_labels, dtype=np.int64)
    pos = np.zeros(n_labels, dtype=np.int64)
    coef = np.zeros(n_labels)
    t = t0
    for r in order:
        t += 1
        lo, hi = indptr[r], indptr[r + 1]
        rank_step(V, counts, scale, indices[lo:hi], data[lo:hi], rlab[rptr[r]:rptr[r + 1]],
                  t, lam, inverse_nu, dots, z, g, top, pos, coef)
        if prune_period > 0 and t % prune_period == 0:
            prune(V, counts, scale, prune_threshold)
    return t


# ---------------------------------------------------------------------------
# multiclass step
# ---------------------------------------------------------------------------

@njit(cache=True)
def multiclass_step(V, counts, scale, idx, val, y, t, lam, dots, z, g, top):
    n_labels = V.shape[0]
    class_dots(V, counts, scale, idx, val, dots)
    select_active(dots, counts, z, g, top)
    rival = -1
    for c in range(n_labels):
        if c != y and (rival == -1 or g[c] > g[rival]):
            rival = c
    eta = 1.0 / (lam * t)
    shrink(V, counts, scale, t)
    if rival == -1:
        return 0.0
    loss = 1.0 + g[rival] - g[y]
    if loss > 0.0:
        step_update(V, counts, scale, y, z[y], top[y], eta, idx, val)
        step_update(V, counts, scale, rival, z[rival], top[rival], -eta, idx, val)
        return loss
    return 0.0


@njit(cache=True)
def multiclass_epoch(V, counts, scale, indptr, indices, data, targets, order, t0,
                     lam, prune_period, prune_threshold):
    n_labels = V.shape[0]
    cap = V.shape[1]
    dots = np.zeros((n_labels, cap))
    z = np.zeros(n_labels, dtype=np.int64)
    g = np.zeros(n_labels)
    top = np.zeros(n_labels, dtype=np.int64)
    t = t0
    for r in order:
        t += 1
        lo, hi = indptr[r], indptr[r + 1]
        multiclass_step(V, counts, scale, indices[lo:hi], data[lo:hi], targets[r], t, lam,
                        dots, z, g, top)
        if prune_period > 0 and t % prune_period == 0:
            prune(V, counts, scale, prune_threshold)
    return t


# ---------------------------------------------------------------------------
# logistic models (last column of W is the bias, paired with a constant 1)
# ---------------------------------------------------------------------------

@njit(cache=True)
def _sigmoid(s):
    if s >= 0:
        return 1.0 / (1.0 + np.exp(-s))
    e = np.exp(s)
    return e / (1.0 + e)


@njit(cache=True)
def logistic_update(W, row, scale, t, lam, y, idx, val):
    """One regularized logistic SGD step on model ``row`` with target ``y`` (+-1)."""
    d = W.shape[1] - 1
    s = W[row, d]
    for n in range(idx.shape[0]):
        s += W[row, idx[n]] * val[n]
    s *= scale[row]
    # -d/ds log(1 + exp(-y s))
    mult = y * _sigmoid(-y * s)
    eta = 1.0 / (lam * t)
    factor = 1.0 - 1.0 / t
    if factor <= 0.0:
        W[row, :] = 0.0
        scale[row] = 1.0
    else:
        scale[row] *= factor
        if scale[row] < _FOLD_BELOW:
            W[row, :] *= scale[row]
            scale[row] = 1.0
    step = eta * mult / scale[row]
    for n in range(idx.shape[0]):
        W[row, idx[n]] += step * val[n]
    W[row, d] += step


@njit(cache=True)
def ovr_epoch(W, scale, steps, indptr, indices, data, rptr, rlab, order, lam):
    n_labels = W.shape[0]
    member = np.zeros(n_labels, dtype=np.bool_)
    for r in order:
        member[:] = False
        for q in range(rptr[r], rptr[r + 1]):
            member[rlab[q]] = True
        lo, hi = indptr[r], indptr[r + 1]
        idx = indices[lo:hi]
        val = data[lo:hi]
        for c in range(n_labels):
            steps[c] += 1
            logistic_update(W, c, scale, steps[c], lam, 1.0 if member[c] else -1.0, idx, val)


@njit(cache=True)
def pairwise_epoch(W, scale, steps, pair_i, pair_j, indptr, indices, data, rptr, rlab,
                   order, lam, n_labels):
    pos = np.zeros(n_labels, dtype=np.int64)
    for r in order:
        pos[:] = -1
        start = rptr[r]
        for q in range(start, rptr[r + 1]):
            pos[rlab[q]] = q - start
        lo, hi = indptr[r], indptr[r + 1]
        idx = indices[lo:hi]
        val = data[lo:hi]
        for p in range(pair_i.shape[0]):
            pi = pos[pair_i[p]]
            pj = pos[pair_j[p]]
            if pi == -1 and pj == -1:
                continue
            y = 1.0 if (pi != -1 and (pj == -1 or pi < pj)) else -1.0
            steps[p] += 1
            logistic_update(W, p, scale, steps[p], lam, y, idx, val)
