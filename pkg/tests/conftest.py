import numpy as np
import pytest
import scipy.sparse as sp

from ammrank.amm_model import AmmModel
from ammrank.core import RankedDataset, SparseVector


def random_ranking(rng, n_labels, full=False):
    L_t = n_labels if full else int(rng.integers(1, n_labels + 1))
    return tuple(int(a) for a in rng.permutation(n_labels)[:L_t] + 1)


def random_dataset(rng, n, n_labels, dim, density=0.5, full=False):
    X = sp.random(n, dim, density=density, random_state=rng, format="csr")
    X.data = rng.random(X.data.size) + 0.1
    return RankedDataset(X, [random_ranking(rng, n_labels, full) for _ in range(n)],
                         n_labels, dim)


def random_model(rng, n_labels, dim, max_per_class=3, capacity=20):
    model = AmmModel(n_labels, dim, capacity)
    for label in range(1, n_labels + 1):
        for _ in range(int(rng.integers(1, max_per_class + 1))):
            model.add_weight(label, rng.standard_normal(dim))
    return model


def dense_vector(x):
    return SparseVector.from_dense(np.asarray(x, dtype=float))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
