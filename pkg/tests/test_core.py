import io

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from ammrank.core import (FormatError, RankedDataset, SparseVector, check_ranking,
                          l2_normalize_rows, parse_ranked_dataset, ranking_from_scores,
                          rankings_from_score_matrix, read_feature_rows,
                          serialize_ranked_dataset)


def parse(text):
    return parse_ranked_dataset(io.StringIO(text))


class TestSparseVector:

    def test_from_pairs_is_one_based(self):
        x = SparseVector.from_pairs([(3, 1.0), (1, 0.5)], dim=3)
        np.testing.assert_array_equal(x.indices, [0, 2])
        np.testing.assert_array_equal(x.to_dense(), [0.5, 0.0, 1.0])
        assert x.pairs() == [(1, 0.5), (3, 1.0)]

    def test_zeros_dropped(self):
        x = SparseVector.from_dense([0.0, 2.0, 0.0])
        assert x.nnz == 1

    @pytest.mark.parametrize("idx, val, dim", [
        ([1, 0], [1.0, 1.0], 3),   # unsorted
        ([0, 0], [1.0, 1.0], 3),   # duplicate
        ([3], [1.0], 3),           # out of range
        ([0], [0.0], 3),           # stored zero
        ([0, 1], [1.0], 3),        # length mismatch
    ])
    def test_invalid(self, idx, val, dim):
        with pytest.raises(ValueError):
            SparseVector(np.array(idx), np.array(val), dim)

    def test_normalized(self):
        x = SparseVector.from_dense([3.0, 0.0, 4.0]).normalized()
        np.testing.assert_allclose(x.to_dense(), [0.6, 0.0, 0.8])
        empty = SparseVector.from_dense([0.0, 0.0])
        assert empty.normalized() == empty


class TestRankings:

    def test_check_ranking(self):
        assert check_ranking([3, 1], 4) == (3, 1)
        for bad in ([], [1, 1], [0, 2]):
            with pytest.raises(ValueError):
                check_ranking(bad, 4)
        with pytest.raises(ValueError):
            check_ranking([5], 4)

    def test_sort_with_ties(self):
        assert ranking_from_scores([0.5, 2.0, 0.0]) == (2, 1, 3)
        assert ranking_from_scores([1.0, 1.0, 1.0]) == (1, 2, 3)
        assert ranking_from_scores([0.0, 1.0, 1.0, 0.0]) == (2, 3, 1, 4)

    @given(st.lists(st.integers(-3, 3), min_size=1, max_size=12))
    def test_full_permutation_descending(self, scores):
        r = ranking_from_scores(scores)
        assert sorted(r) == list(range(1, len(scores) + 1))
        ordered = [scores[a - 1] for a in r]
        assert ordered == sorted(scores, reverse=True)
        # equal scores keep ascending label order
        for a, b in zip(r, r[1:]):
            if scores[a - 1] == scores[b - 1]:
                assert a < b

    def test_matrix_matches_rowwise(self, rng):
        S = rng.integers(0, 3, size=(50, 6)).astype(float)
        M = rankings_from_score_matrix(S)
        for row, r in zip(S, M):
            assert tuple(r) == ranking_from_scores(row)


class TestParser:

    def test_header_example(self):
        ds = parse("#L=4 d=3\n3,1 | 1:0.5 3:1.0\n")
        assert (len(ds), ds.L, ds.d) == (1, 4, 3)
        assert ds.rankings[0] == (3, 1)
        assert ds.features(0).pairs() == [(1, 0.5), (3, 1.0)]

    def test_inferred_dims(self):
        ds = parse("2 | 4:1\n1,3 | 2:0.25\n")
        assert (ds.L, ds.d) == (3, 4)

    @pytest.mark.parametrize("text, line, fragment", [
        ("3,3 | 1:0.5\n", 1, "duplicate label"),
        ("| 1:0.5\n", 1, "empty ranking"),
        ("#L=2 d=3\n1 | 1:1\n3 | 1:1\n", 3, "exceeds L"),
        ("#L=2 d=3\n1 | 4:1\n", 2, "exceeds d"),
        ("1 | 1:1\n2 1:1\n", 2, "separator"),
        ("1 | 1=1\n", 1, "bad feature"),
        ("1 | 0:1\n", 1, "< 1"),
        ("1 | 1:1 1:2\n", 1, "duplicate feature"),
        ("x | 1:1\n", 1, "bad label"),
        ("#L=two\n", 1, "header"),
    ])
    def test_errors_carry_line(self, text, line, fragment):
        with pytest.raises(FormatError) as err:
            parse(text)
        assert err.value.line == line
        assert fragment in str(err.value)

    def test_feature_rows_allow_missing_labels(self):
        X, L, d = read_feature_rows(io.StringIO("#L=3 d=2\n | 1:1\n2 | 2:2\n"))
        assert (X.shape, L, d) == ((2, 2), 3, 2)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_round_trip(self, seed):
        rng = np.random.default_rng(seed)
        n, L, d = int(rng.integers(1, 8)), int(rng.integers(1, 6)), int(rng.integers(1, 6))
        X = sp.random(n, d, density=0.6, random_state=rng, format="csr")
        X.data = rng.standard_normal(X.data.size) * 10.0 ** rng.integers(-8, 8, X.data.size)
        rankings = [tuple(rng.permutation(L)[:rng.integers(1, L + 1)] + 1) for _ in range(n)]
        ds = RankedDataset(X, rankings, L, d)
        buf = io.StringIO()
        serialize_ranked_dataset(ds, buf)
        back = parse(buf.getvalue())
        assert back.rankings == ds.rankings and (back.L, back.d) == (L, d)
        assert (back.X != ds.X).nnz == 0


class TestDataset:

    def test_shape_checks(self):
        X = sp.csr_matrix(np.ones((2, 3)))
        with pytest.raises(ValueError):
            RankedDataset(X, [(1,)], 2, 3)
        with pytest.raises(ValueError):
            RankedDataset(X, [(1,), (2,)], 2, 4)

    def test_subset_and_iteration(self, rng):
        X = sp.csr_matrix(rng.random((5, 3)))
        ds = RankedDataset(X, [(1,), (2,), (1, 2), (2, 1), (1,)], 2, 3)
        sub = ds.subset([1, 3])
        assert sub.rankings == [(2,), (2, 1)]
        np.testing.assert_array_equal(sub[1].features.to_dense(), X[3].toarray().ravel())
        assert [inst.truth for inst in ds] == ds.rankings
        ptr, lab = ds.ranking_arrays()
        np.testing.assert_array_equal(ptr, [0, 1, 2, 4, 6, 7])
        np.testing.assert_array_equal(lab, [0, 1, 0, 1, 1, 0, 0])

    def test_row_normalization(self, rng):
        X = sp.csr_matrix(np.vstack([rng.random((3, 4)), np.zeros((1, 4))]))
        N = l2_normalize_rows(X).toarray()
        np.testing.assert_allclose(np.linalg.norm(N[:3], axis=1), 1.0)
        np.testing.assert_array_equal(N[3], 0.0)
