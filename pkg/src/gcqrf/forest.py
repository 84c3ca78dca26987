"""Forest growth, prediction aggregation, OOB loss, and grid-search tuning.

Per-tree randomness comes from counter-based child streams spawned off the
master seed, so fits are bit-identical regardless of worker count. Forest
predictions average tree quantile values per grid level and are then
isotonized by running maximum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from joblib import Parallel, delayed

from .data import Dataset
from .errors import BadInput, NoOOBCoverage, NoUncensored
from .evaluate import ipcw_iqloss
from .loss import QuantileProcess, TauGrid, isotonize
from .survival import censoring_fit
from .tree import TreeConfig, grow_tree, tree_values

DEFAULT_NTREE = 500
TUNING_NTREE = 100


@dataclass(frozen=True)
class ForestConfig:
    """Forest parameters; ``u`` overrides the empirical-quantile horizon policy."""

    tree: TreeConfig
    ntree: int = DEFAULT_NTREE
    subsample_rate: float = 0.7
    seed: int = 0
    u: float | None = None
    u_quantile: float = 0.95

    def __post_init__(self):
        if self.ntree < 1:
            raise BadInput("ntree must be >= 1")
        if not 0.0 < self.subsample_rate <= 1.0:
            raise BadInput("subsample_rate must be in (0, 1]")
        if self.u is None and not 0.0 < self.u_quantile < 1.0:
            raise BadInput("u_quantile must be in (0, 1)")


@dataclass
class Forest:
    trees: list
    subsample_indices: list
    config: ForestConfig
    u_resolved: float
    n_features: int

    @property
    def ntree(self) -> int:
        return len(self.trees)


@dataclass(frozen=True)
class OOBResult:
    loss: float
    coverage: float
    n_evaluated: int


def resolve_u(cfg: ForestConfig, y) -> float:
    if cfg.u is not None:
        return float(cfg.u)
    return float(np.quantile(np.asarray(y, dtype=np.float64), cfg.u_quantile))


def subsample_size(n: int, rate: float) -> int:
    return min(n, max(1, math.ceil(rate * n)))


def draw_subsample(n: int, s_n: int, deltas, rng: np.random.Generator) -> np.ndarray:
    """Uniform without-replacement draw, redrawn until it holds an event."""
    deltas = np.asarray(deltas, dtype=bool)
    if not deltas.any():
        raise NoUncensored("dataset has no uncensored observation")
    if s_n > n:
        raise BadInput(f"s_n={s_n} exceeds n={n}")
    for _ in range(100000):
        idx = rng.choice(n, size=s_n, replace=False)
        if deltas[idx].any():
            return np.sort(idx)
    raise RuntimeError("subsample redraw limit hit")  # pragma: no cover


def _fit_one_tree(X, y, delta, tree_cfg, n, s_n, seed_seq):
    rng = np.random.default_rng(seed_seq)
    idx = draw_subsample(n, s_n, delta, rng)
    root = grow_tree(X[idx], y[idx], delta[idx], tree_cfg, rng)
    return root, idx


def fit_forest(dataset: Dataset, cfg: ForestConfig, n_jobs: int = 1) -> Forest:
    """Grow ``cfg.ntree`` trees on without-replacement subsamples.

    The result is a deterministic function of (dataset, config); ``n_jobs``
    only distributes the per-tree work.
    """
    n, p = dataset.X.shape
    if n < 2:
        raise BadInput("need at least 2 observations")
    if not dataset.delta.any():
        raise NoUncensored("dataset has no uncensored observation")
    if p > 0 and not 1 <= cfg.tree.mtry <= p:
        raise BadInput(f"mtry={cfg.tree.mtry} out of range for p={p}")
    u_res = resolve_u(cfg, dataset.y)
    tree_cfg = replace(cfg.tree, u=u_res)
    s_n = subsample_size(n, cfg.subsample_rate)
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.ntree)
    if n_jobs == 1:
        fitted = [_fit_one_tree(dataset.X, dataset.y, dataset.delta, tree_cfg,
                                n, s_n, ss) for ss in seeds]
    else:
        fitted = Parallel(n_jobs=n_jobs)(
            delayed(_fit_one_tree)(dataset.X, dataset.y, dataset.delta,
                                   tree_cfg, n, s_n, ss) for ss in seeds)
    trees = [t for t, _ in fitted]
    indices = [i for _, i in fitted]
    return Forest(trees, indices, cfg, u_res, p)


def _check_x_dim(forest: Forest, X):
    if forest.n_features > 0 and X.shape[1] != forest.n_features:
        raise BadInput(f"x has {X.shape[1]} components, forest was grown "
                       f"on {forest.n_features}")


def predict_matrix(forest: Forest, X, grid: TauGrid | None = None) -> np.ndarray:
    """Isotonized forest predictions for every row: (n, levels) array."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    _check_x_dim(forest, X)
    grid = grid or forest.config.tree.grid
    rule = forest.config.tree.tail_rule
    stack = np.stack([tree_values(t, X, grid, rule) for t in forest.trees])
    mean = np.mean(stack, axis=0)
    return np.maximum.accumulate(mean, axis=1)


def forest_predict(forest: Forest, x, grid: TauGrid | None = None) -> QuantileProcess:
    """Average of the tree quantile processes at ``x``, isotonized."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise BadInput("x must be a single feature vector")
    grid = grid or forest.config.tree.grid
    values = predict_matrix(forest, x[None, :], grid)[0]
    return QuantileProcess(grid, values)


def oob_predictions(forest: Forest, dataset: Dataset,
                    grid: TauGrid | None = None):
    """Out-of-bag predictions on the training rows.

    Returns (preds, n_oob): rows with no out-of-bag tree get NaN predictions
    and n_oob 0.
    """
    grid = grid or forest.config.tree.grid
    rule = forest.config.tree.tail_rule
    n = dataset.n
    ntree = forest.ntree
    inbag = np.zeros((ntree, n), dtype=bool)
    for b, idx in enumerate(forest.subsample_indices):
        inbag[b, idx] = True
    stack = np.stack([tree_values(t, dataset.X, grid, rule)
                      for t in forest.trees])
    preds = np.full((n, len(grid)), np.nan)
    n_oob = (~inbag).sum(axis=0)
    for i in range(n):
        oob = ~inbag[:, i]
        if n_oob[i] > 0:
            preds[i] = np.mean(stack[oob, i, :], axis=0)
    preds[n_oob > 0] = np.maximum.accumulate(preds[n_oob > 0], axis=1)
    return preds, n_oob


def oob_iqloss(forest: Forest, dataset: Dataset,
               grid: TauGrid | None = None) -> OOBResult:
    """IPCW I-QLoss of OOB predictions against the training rows.

    The censoring fit is the marginal Nelson-Aalen estimate on the full
    training data. Rows that are in-bag for every tree are skipped; the
    returned coverage reports the evaluated fraction.
    """
    grid = grid or forest.config.tree.grid
    preds, n_oob = oob_predictions(forest, dataset, grid)
    covered = n_oob > 0
    if not covered.any():
        raise NoOOBCoverage("no observation is out-of-bag; use a smaller "
                            "subsample rate or more trees")
    g_hat = censoring_fit(dataset.y, dataset.delta, forest.u_resolved)
    loss = ipcw_iqloss(dataset.y[covered], dataset.delta[covered],
                       preds[covered], grid, forest.u_resolved, g_hat,
                       floor=forest.config.tree.g_floor)
    return OOBResult(loss=loss, coverage=float(covered.mean()),
                     n_evaluated=int(covered.sum()))


# ---------------------------------------------------------------------------
# tuning

@dataclass(frozen=True)
class TuningSpace:
    """Grid of (mtry fraction, subsample rate, nodesize) combinations."""

    mtry_fractions: tuple
    subsample_rates: tuple
    nodesizes: tuple

    def __post_init__(self):
        if not (self.mtry_fractions and self.subsample_rates and self.nodesizes):
            raise BadInput("tuning space must be nonempty")

    def cells(self):
        for mf in self.mtry_fractions:
            for rate in self.subsample_rates:
                for ns in self.nodesizes:
                    yield float(mf), float(rate), int(ns)


def mtry_from_fraction(fraction: float, p: int) -> int:
    return max(1, round(fraction * p))


def nodesize_grid(n: int, count: int = 5) -> tuple:
    """nodesize = n**eta for ``count`` exponents spanning [5, n/4]."""
    lo = math.log(5.0) / math.log(n)
    hi = math.log(n / 4.0) / math.log(n)
    etas = np.linspace(lo, hi, count)
    sizes = []
    for eta in etas:
        s = max(1, int(round(n ** eta)))
        if s not in sizes:
            sizes.append(s)
    return tuple(sizes)


def paper_tuning_space(n: int, p: int = 0) -> TuningSpace:
    return TuningSpace(mtry_fractions=(0.1, 0.3, 0.5, 0.7, 0.9),
                       subsample_rates=(0.3, 0.5, 0.7, 0.9),
                       nodesizes=nodesize_grid(n, 5))


def reduced_tuning_space(n: int, p: int = 0) -> TuningSpace:
    """Coarse grid for desk-scale runs: corners of the full space."""
    return TuningSpace(mtry_fractions=(0.3, 0.9),
                       subsample_rates=(0.5, 0.9),
                       nodesizes=nodesize_grid(n, 2))


def tune(dataset: Dataset, space: TuningSpace, base_cfg: ForestConfig,
         tuning_ntree: int = TUNING_NTREE, n_jobs: int = 1):
    """Grid search minimizing OOB I-QLoss.

    Every cell is fit with ``tuning_ntree`` trees and the master seed from
    ``base_cfg``; the winning cell (ties go to the first in enumeration
    order) is returned at ``base_cfg.ntree`` trees, together with the full
    (params, loss) table.
    """
    p = dataset.p
    table = []
    best = None
    best_loss = np.inf
    for mf, rate, ns in space.cells():
        cell_cfg = replace(
            base_cfg, ntree=tuning_ntree, subsample_rate=rate,
            tree=replace(base_cfg.tree, mtry=mtry_from_fraction(mf, p),
                         nodesize=ns,
                         nodesize_min=min(base_cfg.tree.nodesize_min, ns)))
        forest = fit_forest(dataset, cell_cfg, n_jobs=n_jobs)
        oob = oob_iqloss(forest, dataset)
        table.append({"mtry_fraction": mf, "mtry": cell_cfg.tree.mtry,
                      "subsample_rate": rate, "nodesize": ns,
                      "oob_iqloss": oob.loss, "oob_coverage": oob.coverage})
        if oob.loss < best_loss:
            best_loss = oob.loss
            best = cell_cfg
    best_cfg = replace(best, ntree=base_cfg.ntree)
    return best_cfg, table
