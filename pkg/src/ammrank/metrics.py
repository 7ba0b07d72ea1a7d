"""Disagreement error and precision/recall/F1 at the top K ranks."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, TextIO

import numpy as np


def _positions(ranking: Sequence[int], n_labels: int, missing: int) -> np.ndarray:
    pos = np.full(n_labels, missing, dtype=np.int64)
    pos[np.asarray(ranking, dtype=np.int64) - 1] = np.arange(len(ranking))
    return pos


def _check_full(pred: Sequence[int], n_labels: int) -> None:
    if len(pred) != n_labels or set(int(a) for a in pred) != set(range(1, n_labels + 1)):
        raise ValueError(f"prediction {list(pred)} is not a permutation of 1..{n_labels}")


def instance_disagreement(pred: Sequence[int], truth: Sequence[int], n_labels: int) -> float:
    """Fraction of preference pairs of ``truth`` that ``pred`` orders wrongly.

    Pairs are (ranked label, any label below it or unranked); there are
    ``L_t (L - (L_t + 1) / 2)`` of them. With ``L = 1`` there are none and
    the error is 0.
    """
    _check_full(pred, n_labels)
    L_t = len(truth)
    pred_pos = _positions(pred, n_labels, n_labels)
    true_pos = _positions(truth, n_labels, n_labels)
    ranked = np.asarray(truth, dtype=np.int64) - 1
    worse = true_pos[None, :] > true_pos[ranked][:, None]
    flipped = pred_pos[None, :] < pred_pos[ranked][:, None]
    n_pairs = L_t * (n_labels - 0.5 * (L_t + 1))
    if n_pairs == 0:
        return 0.0
    return float(np.count_nonzero(worse & flipped)) / n_pairs


def disagreement_error(preds: Sequence[Sequence[int]], truths: Sequence[Sequence[int]],
                       n_labels: int) -> float:
    if len(preds) != len(truths):
        raise ValueError("predictions and truths differ in length")
    if not len(truths):
        raise ValueError("no instances to evaluate")
    return float(np.mean([instance_disagreement(p, t, n_labels) for p, t in zip(preds, truths)]))


def topk_metrics(preds: Sequence[Sequence[int]], truths: Sequence[Sequence[int]],
                 k: int) -> tuple[float, float, float]:
    """Dataset-averaged precision@K and recall@K, and F1 from those two averages."""
    if len(preds) != len(truths):
        raise ValueError("predictions and truths differ in length")
    if not len(truths):
        raise ValueError("no instances to evaluate")
    n_labels = len(preds[0])
    if not 1 <= k <= n_labels:
        raise ValueError(f"K must be in 1..{n_labels}, got {k}")
    prec = rec = 0.0
    for pred, truth in zip(preds, truths):
        hits = len(set(int(a) for a in pred[:k]) & set(int(a) for a in truth))
        prec += hits / k
        rec += hits / len(truth)
    prec /= len(truths)
    rec /= len(truths)
    f1 = 0.0 if prec + rec == 0 else 2 * prec * rec / (prec + rec)
    return prec, rec, f1


@dataclass
class EvalReport:
    dis_error: float
    n_test: int
    precision: list[float] = field(default_factory=list)
    recall: list[float] = field(default_factory=list)
    f1: list[float] = field(default_factory=list)

    @property
    def k_max(self) -> int:
        return len(self.precision)

    def write_text(self, stream: TextIO) -> None:
        stream.write(f"n_test={self.n_test}\n")
        stream.write(f"dis_error={self.dis_error!r}\n")
        for k in range(1, self.k_max + 1):
            stream.write(f"precision@{k}={self.precision[k - 1]!r}\n")
            stream.write(f"recall@{k}={self.recall[k - 1]!r}\n")
            stream.write(f"f1@{k}={self.f1[k - 1]!r}\n")

    def write_csv(self, stream: TextIO) -> None:
        stream.write("K,precision,recall,f1\n")
        for k in range(1, self.k_max + 1):
            stream.write(f"{k},{self.precision[k - 1]!r},{self.recall[k - 1]!r},"
                         f"{self.f1[k - 1]!r}\n")

    @classmethod
    def read_text(cls, stream: TextIO) -> EvalReport:
        kv = dict(line.strip().split("=", 1) for line in stream if "=" in line)
        k_max = sum(1 for key in kv if key.startswith("precision@"))
        return cls(
            dis_error=float(kv["dis_error"]),
            n_test=int(kv["n_test"]),
            precision=[float(kv[f"precision@{k}"]) for k in range(1, k_max + 1)],
            recall=[float(kv[f"recall@{k}"]) for k in range(1, k_max + 1)],
            f1=[float(kv[f"f1@{k}"]) for k in range(1, k_max + 1)],
        )


def evaluate(preds: Sequence[Sequence[int]], truths: Sequence[Sequence[int]], n_labels: int,
             k_max: int = 10) -> EvalReport:
    k_max = min(k_max, n_labels)
    report = EvalReport(disagreement_error(preds, truths, n_labels), len(truths))
    for k in range(1, k_max + 1):
        p, r, f = topk_metrics(preds, truths, k)
        report.precision.append(p)
        report.recall.append(r)
        report.f1.append(f)
    return report
