import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ammrank.metrics import (EvalReport, disagreement_error, evaluate, instance_disagreement,
                             topk_metrics)
from conftest import random_ranking


def oracle_disagreement(pred, truth, L):
    """Enumerate preference pairs of ``truth`` one by one."""
    where = {a: i for i, a in enumerate(pred)}
    unranked = [j for j in range(1, L + 1) if j not in truth]
    wrong = total = 0
    for i, a in enumerate(truth):
        for b in list(truth[i + 1:]) + unranked:
            total += 1
            wrong += where[a] > where[b]
    return wrong / total if total else 0.0


def oracle_topk(preds, truths, k):
    p = [len(set(pr[:k]) & set(t)) / k for pr, t in zip(preds, truths)]
    r = [len(set(pr[:k]) & set(t)) / len(t) for pr, t in zip(preds, truths)]
    P, R = sum(p) / len(p), sum(r) / len(r)
    return P, R, (2 * P * R / (P + R) if P + R else 0.0)


def random_cases(seed, n):
    rng = np.random.default_rng(seed)
    for _ in range(n):
        L = int(rng.integers(1, 9))
        yield L, tuple(int(a) for a in rng.permutation(L) + 1), random_ranking(rng, L)


class TestDisagreement:

    def test_examples(self):
        assert instance_disagreement((1, 2, 3, 4), (3, 1), 4) == pytest.approx(0.4)
        assert instance_disagreement((3, 1, 2, 4), (3, 1), 4) == 0.0
        assert instance_disagreement((1, 3, 2), (2,), 3) == 1.0

    def test_matches_oracle(self):
        for L, pred, truth in random_cases(0, 1000):
            assert instance_disagreement(pred, truth, L) == oracle_disagreement(pred, truth, L)

    def test_reverse_complements(self):
        for L, pred, truth in random_cases(1, 300):
            if L < 2:
                continue
            total = (instance_disagreement(pred, truth, L)
                     + instance_disagreement(pred[::-1], truth, L))
            assert total == pytest.approx(1.0)

    def test_single_label_has_no_pairs(self):
        assert instance_disagreement((1,), (1,), 1) == 0.0

    def test_full_truth_normalizer(self):
        # L_t = L gives L (L - 1) / 2 pairs
        assert instance_disagreement((2, 1, 3), (1, 2, 3), 3) == pytest.approx(1 / 3)

    def test_errors(self):
        with pytest.raises(ValueError):
            instance_disagreement((1, 2), (1,), 3)
        with pytest.raises(ValueError):
            disagreement_error([(1, 2)], [], 2)
        with pytest.raises(ValueError):
            disagreement_error([], [], 2)


class TestTopK:

    def test_examples(self):
        assert topk_metrics([(1, 2, 3, 4)], [(3, 1)], 2) == (0.5, 0.5, 0.5)
        assert topk_metrics([(1, 2, 3, 4)], [(4,)], 2) == (0.0, 0.0, 0.0)
        _, recall, _ = topk_metrics([(2, 1, 3), (3, 1, 2)], [(1,), (2, 3)], 3)
        assert recall == 1.0

    def test_errors(self):
        with pytest.raises(ValueError):
            topk_metrics([(1, 2)], [(1,)], 3)
        with pytest.raises(ValueError):
            topk_metrics([(1, 2)], [(1,)], 0)

    def test_matches_oracle(self):
        cases = list(random_cases(2, 1000))
        by_L = {}
        for L, pred, truth in cases:
            by_L.setdefault(L, ([], []))
            by_L[L][0].append(pred)
            by_L[L][1].append(truth)
        for L, (preds, truths) in by_L.items():
            for k in range(1, L + 1):
                assert topk_metrics(preds, truths, k) == pytest.approx(
                    oracle_topk(preds, truths, k), abs=1e-15)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_monotone_in_k(self, seed):
        rng = np.random.default_rng(seed)
        L = int(rng.integers(1, 9))
        preds = [tuple(rng.permutation(L) + 1) for _ in range(5)]
        truths = [random_ranking(rng, L) for _ in range(5)]
        rows = [topk_metrics(preds, truths, k) for k in range(1, L + 1)]
        recalls = [r for _, r, _ in rows]
        hits = [k * p for k, (p, _, _) in enumerate(rows, start=1)]
        assert recalls == sorted(recalls)
        assert all(b >= a - 1e-12 for a, b in zip(hits, hits[1:]))
        assert all(0 <= v <= 1 for row in rows for v in row)


class TestReport:

    def test_perfect_and_reversed(self):
        truths = [(1, 2, 3, 4), (2, 1, 4, 3)]
        good = evaluate(truths, truths, 4)
        assert good.dis_error == 0.0 and good.recall[-1] == 1.0 and good.k_max == 4
        bad = evaluate([t[::-1] for t in truths], truths, 4)
        assert bad.dis_error == 1.0

    def test_files(self):
        report = evaluate([(1, 2, 3)], [(2,)], 3, k_max=10)
        text, csv = io.StringIO(), io.StringIO()
        report.write_text(text)
        report.write_csv(csv)
        assert EvalReport.read_text(io.StringIO(text.getvalue())) == report
        lines = csv.getvalue().splitlines()
        assert lines[0] == "K,precision,recall,f1" and len(lines) == 1 + 3
