import numpy as np
import pytest
import scipy.sparse as sp

from ammrank.amm_model import ZERO_SLOT, AmmModel, TrainConfig, predict_rankings
from ammrank.amm_multiclass import multiclass_loss, multiclass_sgd_step, train_multiclass
from ammrank.amm_rank import active_indices
from ammrank.core import RankedDataset
from conftest import dense_vector, random_dataset, random_model
from gradcheck import multiclass_gradient_errors


def scored_model(other, own):
    m = AmmModel(2, 1)
    m.add_weight(1, [other])
    m.add_weight(2, [own])
    return m


class TestLoss:

    def test_empty_model(self):
        assert multiclass_loss(AmmModel(3, 2), dense_vector([1, 1]), 2, ZERO_SLOT) == 1.0

    def test_margin_satisfied(self):
        assert multiclass_loss(scored_model(0.2, 1.5), dense_vector([1.0]), 2, 0) == 0.0

    def test_hinge_arithmetic(self):
        loss = multiclass_loss(scored_model(0.2, 0.9), dense_vector([1.0]), 2, 0)
        assert loss == pytest.approx(0.3)

    def test_errors(self):
        m = AmmModel(2, 1)
        with pytest.raises(ValueError):
            multiclass_loss(m, dense_vector([1.0]), 3, ZERO_SLOT)
        with pytest.raises(ValueError):
            multiclass_loss(m, dense_vector([1.0]), 1, 0)

    def test_zero_loss_means_correct_top1(self, rng):
        for _ in range(200):
            m = random_model(rng, 4, 3)
            x = dense_vector(rng.random(3))
            y = int(rng.integers(1, 5))
            z = int(active_indices(m, x)[y - 1])
            if multiclass_loss(m, x, y, z) == 0:
                g = [max(0.0, float(np.max(m.weights(c) @ x.to_dense()))) for c in range(1, 5)]
                assert all(g[y - 1] >= g[c] + 1 for c in range(4) if c != y - 1)


class TestStep:

    def test_both_updates_fire(self):
        m = AmmModel(2, 2)
        loss = multiclass_sgd_step(m, dense_vector([1.0, 0.0]), 2, t=1, lam=1.0)
        assert loss == 1.0
        np.testing.assert_array_equal(m.weights(2), [[1.0, 0.0]])
        np.testing.assert_array_equal(m.weights(1), [[-1.0, 0.0]])

    def test_zero_loss_only_shrinks(self):
        m = scored_model(0.0, 3.0)
        multiclass_sgd_step(m, dense_vector([1.0]), 2, t=2, lam=1.0)
        np.testing.assert_allclose(m.weights(2), [[1.5]])
        np.testing.assert_allclose(m.weights(1), [[0.0]])
        assert m.n_weights(1) == 1

    def test_rival_tie_goes_to_lowest_label(self):
        m = AmmModel(3, 1)
        multiclass_sgd_step(m, dense_vector([1.0]), 3, t=1, lam=1.0)
        assert (m.n_weights(1), m.n_weights(2)) == (1, 0)

    def test_step_sizes_decay(self):
        m = AmmModel(2, 1)
        for t in (1, 10, 100):
            probe = m.copy()
            multiclass_sgd_step(probe, dense_vector([1.0]), 1, t=t, lam=1.0)
            assert probe.weights(1)[0, 0] == pytest.approx(1.0 / t)

    def test_gradient(self):
        assert max(multiclass_gradient_errors(40, seed=5)) <= 1e-5


class TestTraining:

    def test_separable_toy(self, rng):
        X = rng.standard_normal((200, 2))
        X[:, 0] += np.sign(X[:, 0]) * 0.3
        labels = [(1,) if v > 0 else (2,) for v in X[:, 0]]
        ds = RankedDataset(sp.csr_matrix(X), labels, 2, 2)
        model = train_multiclass(ds, TrainConfig(lam=1e-3, seed=0, l2_normalize=False))
        top = predict_rankings(model, ds.X)[:, 0]
        assert np.array_equal(top, [r[0] for r in labels])

    def test_uses_top_label_only(self, rng):
        ds = random_dataset(rng, 100, 4, 5)
        top_only = type(ds)(ds.X, [r[:1] for r in ds.rankings], 4, 5)
        cfg = TrainConfig(seed=1, epochs=2)
        assert train_multiclass(ds, cfg) == train_multiclass(top_only, cfg)

    def test_deterministic(self, rng):
        ds = random_dataset(rng, 100, 3, 4)
        cfg = TrainConfig(seed=9, epochs=2)
        assert train_multiclass(ds, cfg) == train_multiclass(ds, cfg)
