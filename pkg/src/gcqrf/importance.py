"""Conditional feature importance by refit-based muting with cross-fitting.

For each fold, a fully tuned forest on the remaining folds provides the
reference held-out loss; for each feature group a second forest is tuned and
fit on the same folds with the group muted (dropped, jointly permuted, or
swapped for second-order Gaussian knockoffs), and the held-out fold is muted
the same way. Groups are ranked by the mean held-out loss increase; rank 1 is
least important.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .data import Dataset
from .errors import BadInput, FoldDegenerate, KnockoffFailure
from .evaluate import ipcw_iqloss
from .forest import ForestConfig, TuningSpace, fit_forest, predict_matrix, tune
from .loss import TauGrid
from .survival import censoring_fit


class MuteStrategy(str, Enum):
    DROP = "drop"
    PERMUTE = "permute"
    KNOCKOFF = "knockoff"


# ---------------------------------------------------------------------------
# second-order Gaussian knockoffs

@dataclass(frozen=True)
class KnockoffSampler:
    """Fitted second-order Gaussian knockoff generator.

    Uses the equicorrelated construction: each feature's knockoff decorrelates
    from the original by ``s_j = min(2 * lambda_min(corr), 1)`` on the
    correlation scale, which preserves means, covariance, and between-feature
    cross-covariances in population.
    """

    mean: np.ndarray
    cov: np.ndarray
    s_corr: float
    _shift: np.ndarray     # I - Sigma^{-1} S
    _noise_sqrt: np.ndarray

    @classmethod
    def fit(cls, X, ridge_steps=(0.0, 1e-8, 1e-6, 1e-4, 1e-2)) -> "KnockoffSampler":
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        n, q = X.shape
        if n <= q:
            raise KnockoffFailure(f"need n > q for a knockoff fit, got {n} <= {q}")
        mean = X.mean(axis=0)
        base = np.cov(X, rowvar=False, ddof=1).reshape(q, q)
        scale = float(np.trace(base)) / q
        cov = None
        for eps in ridge_steps:
            trial = base + eps * scale * np.eye(q)
            if np.linalg.eigvalsh(trial).min() > 1e-10 * scale:
                cov = trial
                break
        if cov is None:
            raise KnockoffFailure("covariance singular after ridge repair")
        sd = np.sqrt(np.diag(cov))
        corr = cov / np.outer(sd, sd)
        lam_min = float(np.linalg.eigvalsh(corr).min())
        s_corr = min(2.0 * max(lam_min, 0.0), 1.0)
        s_cov = s_corr * np.diag(cov)
        sigma_inv_s = np.linalg.solve(cov, np.diag(s_cov))
        shift = np.eye(q) - sigma_inv_s
        noise_cov = 2.0 * np.diag(s_cov) - np.diag(s_cov) @ sigma_inv_s
        noise_cov = 0.5 * (noise_cov + noise_cov.T)
        evals, evecs = np.linalg.eigh(noise_cov)
        noise_sqrt = evecs * np.sqrt(np.maximum(evals, 0.0))
        return cls(mean, cov, s_corr, shift, noise_sqrt)

    def sample(self, X, rng: np.random.Generator) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        centered = X - self.mean
        cond_mean = self.mean + centered @ self._shift
        noise = rng.standard_normal(X.shape) @ self._noise_sqrt.T
        return cond_mean + noise


def gaussian_knockoffs(X, rng: np.random.Generator) -> np.ndarray:
    """Knockoff copies of every column, fit and sampled on the same data."""
    return KnockoffSampler.fit(X).sample(X, rng)


# ---------------------------------------------------------------------------
# muting

def mute(dataset: Dataset, group, strategy: MuteStrategy,
         rng: np.random.Generator | None = None,
         sampler: KnockoffSampler | None = None) -> Dataset:
    """Dataset with the group's conditional signal removed.

    Drop removes the columns; permute applies one joint row permutation to
    them; knockoff replaces them with their knockoff counterparts (generated
    jointly from all columns, non-group columns untouched). An empty group is
    a no-op.
    """
    strategy = MuteStrategy(strategy)
    group = np.asarray(group, dtype=np.int64).ravel()
    if group.size == 0:
        return Dataset(dataset.X.copy(), dataset.y, dataset.delta,
                       list(dataset.columns))
    if group.min() < 0 or group.max() >= dataset.p or \
            np.unique(group).size != group.size:
        raise BadInput(f"invalid feature group {group.tolist()} for p={dataset.p}")
    if strategy is MuteStrategy.DROP:
        keep = np.setdiff1d(np.arange(dataset.p), group)
        return dataset.with_features(
            dataset.X[:, keep], [dataset.columns[j] for j in keep])
    if rng is None:
        raise BadInput("permute/knockoff muting needs an rng")
    X = dataset.X.copy()
    if strategy is MuteStrategy.PERMUTE:
        perm = rng.permutation(dataset.n)
        X[:, group] = dataset.X[perm][:, group]
    else:
        if sampler is None:
            sampler = KnockoffSampler.fit(dataset.X)
        X[:, group] = sampler.sample(dataset.X, rng)[:, group]
    return dataset.with_features(X, list(dataset.columns))


# ---------------------------------------------------------------------------
# cross-fitted importance

@dataclass
class ImportanceReport:
    """Cross-fitted loss increases and the resulting ranks (1 = least)."""

    groups: list
    group_names: list
    per_fold_deltas: np.ndarray     # K x n_groups
    full_losses: np.ndarray         # K
    mean_delta: np.ndarray
    rank: np.ndarray
    strategy: MuteStrategy

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["group", "fold", "delta", "mean_delta", "rank"])
            for gi, name in enumerate(self.group_names):
                for k in range(self.per_fold_deltas.shape[0]):
                    writer.writerow([
                        name, k + 1,
                        repr(float(self.per_fold_deltas[k, gi])),
                        repr(float(self.mean_delta[gi])),
                        int(self.rank[gi]),
                    ])


def rank_by_delta(mean_delta) -> np.ndarray:
    """Ascending ranks (1 = smallest increase); ties keep enumeration order."""
    order = np.argsort(np.asarray(mean_delta), kind="stable")
    rank = np.empty(order.size, dtype=np.int64)
    rank[order] = np.arange(1, order.size + 1)
    return rank


def make_folds(n: int, k: int, rng: np.random.Generator) -> list:
    perm = rng.permutation(n)
    return [np.sort(part) for part in np.array_split(perm, k)]


def _fit_and_score(train: Dataset, test: Dataset, base_cfg: ForestConfig,
                   space: TuningSpace, grid: TauGrid, tuning_ntree: int,
                   n_jobs: int) -> float:
    best_cfg, _ = tune(train, space, base_cfg, tuning_ntree=tuning_ntree,
                       n_jobs=n_jobs)
    forest = fit_forest(train, best_cfg, n_jobs=n_jobs)
    g_hat = censoring_fit(train.y, train.delta, forest.u_resolved)
    preds = predict_matrix(forest, test.X, grid)
    return ipcw_iqloss(test.y, test.delta, preds, grid, forest.u_resolved,
                       g_hat, floor=forest.config.tree.g_floor)


def importance_cross_fit(dataset: Dataset, groups, k: int,
                         strategy: MuteStrategy, base_cfg: ForestConfig,
                         tuning_space: TuningSpace, eval_grid: TauGrid,
                         seed: int | None = None, tuning_ntree: int = 100,
                         group_names=None, n_jobs: int = 1) -> ImportanceReport:
    """Cross-fitted conditional importance of each feature group.

    Both the reference and every muted model are tuned independently on the
    training folds; knockoff parameters and held-out muting never see the
    evaluation fold's responses.
    """
    strategy = MuteStrategy(strategy)
    if k < 2:
        raise BadInput("need at least 2 folds")
    if dataset.n < 2 * k:
        raise BadInput(f"need n >= 2k, got n={dataset.n}, k={k}")
    groups = [np.asarray(g, dtype=np.int64).ravel() for g in groups]
    if group_names is None:
        group_names = ["+".join(dataset.columns[j] for j in g) if g.size else "(empty)"
                       for g in groups]
    if seed is None:
        seed = base_cfg.seed
    ss_folds, ss_seeds, ss_mute = np.random.SeedSequence(seed).spawn(3)
    folds = make_folds(dataset.n, k, np.random.default_rng(ss_folds))
    model_seeds = np.random.default_rng(ss_seeds).integers(
        0, 2 ** 62, size=(k, len(groups) + 1))
    mute_seeds = ss_mute.spawn(k * len(groups))

    # the grid being scored is also the grid the forests train on
    base_cfg = replace(base_cfg, tree=replace(base_cfg.tree, grid=eval_grid))

    per_fold = np.empty((k, len(groups)))
    full_losses = np.empty(k)
    for fold_i, test_rows in enumerate(folds):
        train_rows = np.setdiff1d(np.arange(dataset.n), test_rows)
        train, test = dataset.subset(train_rows), dataset.subset(test_rows)
        if not train.delta.any() or not test.delta.any():
            raise FoldDegenerate(f"fold {fold_i + 1} has no uncensored rows")
        cfg_full = replace(base_cfg, seed=int(model_seeds[fold_i, 0]))
        full_losses[fold_i] = _fit_and_score(
            train, test, cfg_full, tuning_space, eval_grid, tuning_ntree, n_jobs)
        for gi, group in enumerate(groups):
            if group.size == 0:
                per_fold[fold_i, gi] = 0.0
                continue
            stream = mute_seeds[fold_i * len(groups) + gi].spawn(2)
            rng_train = np.random.default_rng(stream[0])
            rng_test = np.random.default_rng(stream[1])
            sampler = (KnockoffSampler.fit(train.X)
                       if strategy is MuteStrategy.KNOCKOFF else None)
            muted_train = mute(train, group, strategy, rng_train, sampler)
            muted_test = mute(test, group, strategy, rng_test, sampler)
            cfg_muted = replace(base_cfg, seed=int(model_seeds[fold_i, gi + 1]))
            loss = _fit_and_score(muted_train, muted_test, cfg_muted,
                                  tuning_space, eval_grid, tuning_ntree, n_jobs)
            per_fold[fold_i, gi] = loss - full_losses[fold_i]

    mean_delta = per_fold.mean(axis=0)
    return ImportanceReport(
        groups=[g.tolist() for g in groups], group_names=list(group_names),
        per_fold_deltas=per_fold, full_losses=full_losses,
        mean_delta=mean_delta, rank=rank_by_delta(mean_delta),
        strategy=strategy)
