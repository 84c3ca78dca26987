import numpy as np
import pytest

from gcqrf import (BadInput, Dataset, GKind, KnockoffFailure, MuteStrategy,
                   TauGrid, TuningSpace, gaussian_knockoffs, gen_dataset,
                   importance_cross_fit, mute, vimp_preset)
from gcqrf.forest import ForestConfig
from gcqrf.importance import KnockoffSampler, rank_by_delta
from gcqrf.tree import TreeConfig


def gaussian_design(n=2000, q=4, seed=0):
    rng = np.random.default_rng(seed)
    cov = 0.5 ** np.abs(np.subtract.outer(np.arange(q), np.arange(q)))
    X = rng.standard_normal((n, q)) @ np.linalg.cholesky(cov).T
    return X, cov


class TestGaussianKnockoffs:
    def test_moment_identities(self):
        X, _ = gaussian_design(n=8000, seed=1)
        Xk = gaussian_knockoffs(X, np.random.default_rng(2))
        assert Xk.shape == X.shape
        emp_cov = np.cov(X, rowvar=False)
        k_cov = np.cov(Xk, rowvar=False)
        assert np.max(np.abs(k_cov - emp_cov)) < 0.08
        # cross-covariance off the diagonal matches the original
        for i in range(X.shape[1]):
            for j in range(X.shape[1]):
                if i != j:
                    c = np.cov(X[:, i], Xk[:, j])[0, 1]
                    assert abs(c - emp_cov[i, j]) < 0.08

    def test_single_column_decorrelates(self):
        rng = np.random.default_rng(3)
        X = rng.standard_normal((5000, 1))
        Xk = KnockoffSampler.fit(X).sample(X, np.random.default_rng(4))
        corr = np.corrcoef(X[:, 0], Xk[:, 0])[0, 1]
        assert abs(corr) < 3.0 / np.sqrt(5000) + 0.02
        assert abs(Xk.mean() - X.mean()) < 0.05
        assert abs(Xk.var() - X.var()) < 0.1

    def test_duplicate_columns_copy_through(self):
        rng = np.random.default_rng(5)
        base = rng.standard_normal(3000)
        X = np.column_stack([base, base])
        Xk = gaussian_knockoffs(X, np.random.default_rng(6))
        # equicorrelated s collapses to ~0, so knockoffs ~= originals
        assert np.max(np.abs(Xk - X)) < 1e-3

    def test_self_correlation_matches_one_minus_s(self):
        X, _ = gaussian_design(n=10000, q=3, seed=7)
        sampler = KnockoffSampler.fit(X)
        Xk = sampler.sample(X, np.random.default_rng(8))
        for j in range(3):
            corr = np.corrcoef(X[:, j], Xk[:, j])[0, 1]
            assert abs(corr - (1.0 - sampler.s_corr)) < 0.05

    def test_cov_error_shrinks_with_n(self):
        errs = []
        for n in (1000, 10000):
            X, _ = gaussian_design(n=n, seed=9)
            Xk = gaussian_knockoffs(X, np.random.default_rng(10))
            errs.append(np.max(np.abs(np.cov(Xk, rowvar=False)
                                      - np.cov(X, rowvar=False))))
        assert errs[1] < errs[0]

    def test_needs_more_rows_than_columns(self):
        with pytest.raises(KnockoffFailure):
            KnockoffSampler.fit(np.zeros((3, 5)))


def toy_dataset(n=50, p=4, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    t = X[:, 0] + rng.normal(0, 0.5, n)
    c = rng.uniform(-1, 4, n)
    y, d = np.minimum(t, c), t <= c
    if not d.any():
        d[0] = True
    return Dataset(X, y, d, [f"f{i}" for i in range(p)])


class TestMute:
    def test_drop_removes_columns(self):
        ds = toy_dataset()
        out = mute(ds, [1, 3], MuteStrategy.DROP)
        assert out.p == 2
        assert out.columns == ["f0", "f2"]
        assert np.array_equal(out.X, ds.X[:, [0, 2]])
        assert np.array_equal(out.y, ds.y)

    def test_permute_is_rearrangement(self):
        ds = toy_dataset()
        out = mute(ds, [0, 2], MuteStrategy.PERMUTE,
                   np.random.default_rng(1))
        assert sorted(out.X[:, 0]) == sorted(ds.X[:, 0])
        assert np.array_equal(out.X[:, 1], ds.X[:, 1])
        assert not np.array_equal(out.X[:, 0], ds.X[:, 0])

    def test_permute_keeps_within_group_pairs(self):
        ds = toy_dataset()
        out = mute(ds, [0, 2], MuteStrategy.PERMUTE,
                   np.random.default_rng(2))
        pairs = set(map(tuple, ds.X[:, [0, 2]]))
        assert set(map(tuple, out.X[:, [0, 2]])) == pairs

    def test_knockoff_touches_only_group(self):
        ds = toy_dataset(n=80)
        out = mute(ds, [1], MuteStrategy.KNOCKOFF, np.random.default_rng(3))
        assert np.array_equal(out.X[:, [0, 2, 3]], ds.X[:, [0, 2, 3]])
        assert not np.array_equal(out.X[:, 1], ds.X[:, 1])

    def test_empty_group_is_noop(self):
        ds = toy_dataset()
        out = mute(ds, [], MuteStrategy.DROP)
        assert np.array_equal(out.X, ds.X)

    def test_invalid_indices(self):
        ds = toy_dataset()
        for group in ([9], [-1], [1, 1]):
            with pytest.raises(BadInput):
                mute(ds, group, MuteStrategy.DROP)

    def test_drop_all_columns_gives_featureless_data(self):
        ds = toy_dataset()
        out = mute(ds, list(range(ds.p)), MuteStrategy.DROP)
        assert out.p == 0
        from gcqrf import fit_forest, predict_matrix
        cfg = ForestConfig(tree=TreeConfig(mtry=1, nodesize=5), ntree=3,
                           subsample_rate=0.8, seed=0)
        forest = fit_forest(out, cfg)
        preds = predict_matrix(forest, np.zeros((4, 0)))
        assert np.all(preds == preds[0])


class TestRanks:
    def test_rank_is_permutation_and_stable(self):
        ranks = rank_by_delta([0.3, 0.1, 0.3, -0.2])
        assert sorted(ranks) == [1, 2, 3, 4]
        assert ranks[3] == 1
        assert ranks[1] == 2
        assert ranks[0] == 3 and ranks[2] == 4

    def test_shift_invariance(self):
        rng = np.random.default_rng(4)
        deltas = rng.normal(0, 1, 6)
        assert np.array_equal(rank_by_delta(deltas),
                              rank_by_delta(deltas + 5.0))


def tiny_cfg(seed=0):
    return ForestConfig(
        tree=TreeConfig(mtry=2, nodesize=8, grid=TauGrid.regular(0.2, 0.5, 0.1)),
        ntree=15, subsample_rate=0.6, seed=seed)


TINY_SPACE = TuningSpace((0.5,), (0.6,), (8,))


class TestCrossFit:
    def test_deterministic(self):
        ds = toy_dataset(n=60, seed=5)
        grid = TauGrid.regular(0.2, 0.5, 0.1)
        kw = dict(groups=[[0], [1]], k=2, strategy=MuteStrategy.PERMUTE,
                  base_cfg=tiny_cfg(), tuning_space=TINY_SPACE,
                  eval_grid=grid, seed=11, tuning_ntree=10)
        r1 = importance_cross_fit(ds, **kw)
        r2 = importance_cross_fit(ds, **kw)
        assert np.array_equal(r1.per_fold_deltas, r2.per_fold_deltas)
        assert np.array_equal(r1.rank, r2.rank)

    def test_empty_group_has_zero_delta(self):
        ds = toy_dataset(n=60, seed=6)
        grid = TauGrid.regular(0.2, 0.5, 0.1)
        report = importance_cross_fit(
            ds, [[], [0]], 2, MuteStrategy.DROP, tiny_cfg(), TINY_SPACE,
            grid, seed=12, tuning_ntree=10)
        assert np.all(report.per_fold_deltas[:, 0] == 0.0)

    def test_signal_feature_beats_noise(self):
        ds = toy_dataset(n=120, seed=7)
        grid = TauGrid.regular(0.2, 0.5, 0.1)
        report = importance_cross_fit(
            ds, [[0], [3]], 3, MuteStrategy.DROP, tiny_cfg(1), TINY_SPACE,
            grid, seed=13, tuning_ntree=10)
        # feature 0 carries the signal, feature 3 is noise
        assert report.rank[0] > report.rank[1]

    def test_validates_k(self):
        ds = toy_dataset()
        grid = TauGrid.regular(0.2, 0.5, 0.1)
        with pytest.raises(BadInput):
            importance_cross_fit(ds, [[0]], 1, MuteStrategy.DROP, tiny_cfg(),
                                 TINY_SPACE, grid)

    def test_report_csv(self, tmp_path):
        ds = toy_dataset(n=60, seed=8)
        grid = TauGrid.regular(0.2, 0.5, 0.1)
        report = importance_cross_fit(
            ds, [[0], [1]], 2, MuteStrategy.PERMUTE, tiny_cfg(), TINY_SPACE,
            grid, seed=14, tuning_ntree=10)
        path = tmp_path / "imp.csv"
        report.to_csv(path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "group,fold,delta,mean_delta,rank"
        assert len(lines) == 1 + 2 * 2


class TestMutingTargetAgreement:
    def test_strategies_agree_without_censoring(self):
        # with Y == T observed, dropping / permuting / knockoffing a feature
        # targets the same muted conditional quantile, so measured deltas
        # should agree up to Monte-Carlo error
        setting = vimp_preset(GKind.HOMO, rho=0.0, n=400, seed=21,
                              target_censoring=0.0)
        sim = gen_dataset(setting)
        grid = TauGrid.regular(0.4, 0.6, 0.05)
        cfg = ForestConfig(
            tree=TreeConfig(mtry=3, nodesize=20, grid=grid), ntree=40,
            subsample_rate=0.5, seed=3)
        space = TuningSpace((0.4,), (0.5,), (20,))
        deltas = {}
        for strategy in MuteStrategy:
            report = importance_cross_fit(
                sim.dataset, [[0]], 2, strategy, cfg, space, grid, seed=22,
                tuning_ntree=20)
            deltas[strategy] = float(report.mean_delta[0])
        vals = np.array(list(deltas.values()))
        assert np.all(vals > 0)
        assert vals.max() / vals.min() < 2.5, deltas
