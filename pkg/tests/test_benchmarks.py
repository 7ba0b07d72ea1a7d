import io

import numpy as np
import pytest

from ammrank import benchmarks as bench
from ammrank.amm_model import TrainConfig
from ammrank.data_pipeline import SyntheticConfig, build_dataset, generate_synthetic
from conftest import random_dataset


class TestFolds:

    @pytest.mark.parametrize("n, k", [(10, 2), (11, 3), (100, 5), (5, 5)])
    def test_partition(self, n, k):
        a = bench.fold_assignment(n, k, seed=3)
        assert np.array_equal(a, bench.fold_assignment(n, k, seed=3))
        sizes = np.bincount(a, minlength=k)
        assert sizes.sum() == n and sizes.max() - sizes.min() <= 1

    def test_errors(self):
        with pytest.raises(ValueError):
            bench.fold_assignment(10, 1, 0)
        with pytest.raises(ValueError):
            bench.fold_assignment(3, 4, 0)


class TestLinearBenchmark:

    def test_rankings_follow_scores(self):
        ds, W = bench.make_linear_rankings(50, 4, 3, seed=0)
        X = ds.X.toarray()
        for x, r in zip(X, ds.rankings):
            s = W @ x
            assert all(s[a - 1] >= s[b - 1] for a, b in zip(r, r[1:]))
        again, _ = bench.make_linear_rankings(50, 4, 3, seed=5, W=W)
        assert again.L == 4 and again.d == 3


class TestCrossValidation:

    def test_every_instance_tested_once(self, rng):
        ds = random_dataset(rng, 60, 4, 14)
        summary = bench.cross_validate(ds, ["central-mal", "lr"], TrainConfig(epochs=1),
                                       folds=3, lambda_grid=[1e-4, 1e-2], k_max=3)
        for algo in ("central-mal", "lr"):
            assert sum(f.report.n_test for f in summary.per_algo(algo)) == 60
        assert all(f.lam in (1e-4, 1e-2) for f in summary.per_algo("lr"))
        assert all(f.lam is None for f in summary.per_algo("central-mal"))
        out = io.StringIO()
        summary.write_csv(out)
        lines = out.getvalue().splitlines()
        assert len(lines) == 3 and lines[0].startswith("algo,dis_error,dis_error_std")

    def test_parallel_matches_serial(self, rng):
        ds = random_dataset(rng, 40, 3, 14)
        cfg = TrainConfig(epochs=1)
        a = bench.cross_validate(ds, ["amm-rank", "ag-mal"], cfg, folds=2, jobs=1)
        b = bench.cross_validate(ds, ["amm-rank", "ag-mal"], cfg, folds=2, jobs=2)
        assert [f.report for f in a.folds] == [f.report for f in b.folds]

    def test_unknown_algo(self, rng):
        with pytest.raises(ValueError):
            bench.cross_validate(random_dataset(rng, 10, 3, 3), ["svm"], TrainConfig())

    def test_select_lambda_picks_grid_value(self, rng):
        ds = random_dataset(rng, 80, 3, 5)
        lam = bench.select_lambda("amm-rank", ds, TrainConfig(epochs=1), [1e-5, 1e-1])
        assert lam in (1e-5, 1e-1)
        assert bench.select_lambda("central-mal", ds, TrainConfig(), [1e-5, 1e-1]) == 1e-5

    @pytest.mark.slow
    def test_single_prototype_central_is_competitive(self):
        # one user type: a single central ranking explains most of the data
        log, demo = generate_synthetic(SyntheticConfig(n_users=10_000, L=20, n_prototypes=1,
                                                       seed=5))
        _, ds = build_dataset(log, demo, 90, 120)
        summary = bench.cross_validate(ds, ["amm-rank", "central-mal"], TrainConfig(), folds=2,
                                       lambda_grid=[1e-6, 1e-5, 1e-4, 1e-3, 1e-2])
        gap = summary.mean_dis_error("central-mal") - summary.mean_dis_error("amm-rank")
        assert gap <= 0.05


class TestModelIo:

    @pytest.mark.parametrize("algo", bench.TRAINABLE)
    def test_save_load_predict(self, rng, algo):
        ds = random_dataset(rng, 40, 4, 14)
        model = bench.fit(algo, ds, TrainConfig(epochs=1))
        buf = io.StringIO()
        bench.save(model, buf)
        back = bench.load(io.StringIO(buf.getvalue()))
        np.testing.assert_array_equal(bench.predict(back, ds.X), bench.predict(model, ds.X))

    def test_label_mismatch(self, rng):
        model = bench.fit("central-mal", random_dataset(rng, 10, 3, 3), TrainConfig())
        with pytest.raises(ValueError):
            bench.evaluate_model(model, random_dataset(rng, 10, 4, 3))
