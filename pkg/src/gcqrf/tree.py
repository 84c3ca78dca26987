"""Single-tree growth: recursive axis-aligned partitioning of censored data.

Trees are grown breadth-first. A node is split by exhaustively searching the
candidate cuts of a random feature subset for the largest size-weighted loss
drop, where each candidate child is refit from scratch (its own hazard fit,
its own censoring fit, its own quantile process). Leaves keep their
Nelson-Aalen fit together with the member observations so tail rules can be
applied at prediction time.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .errors import BadInput, NoUncensored
from .loss import QuantileProcess, TauGrid
from .survival import StepSurvival, TailRule, nelson_aalen

_TAIL_CODE = {
    TailRule.LARGEST_OBSERVATION: _kernels.TAIL_LARGEST_OBSERVATION,
    TailRule.LARGEST_UNCENSORED: _kernels.TAIL_LARGEST_UNCENSORED,
    TailRule.EXPONENTIAL: _kernels.TAIL_EXPONENTIAL,
}


def tail_code(rule: TailRule) -> int:
    return _TAIL_CODE[TailRule(rule)]


@dataclass(frozen=True)
class TreeConfig:
    """Growth parameters for one tree.

    ``nodesize`` is the minimum count of uncensored members for a node to be
    splittable; ``nodesize_min`` the minimum count of distinct uncensored
    response values each child must keep. ``u`` is the horizon used for IPCW
    truncation; forests resolve it from their policy before growing.
    """

    mtry: int
    nodesize: int = 5
    nodesize_min: int = 1
    maxnodes: int | None = None
    tail_rule: TailRule = TailRule.LARGEST_OBSERVATION
    u: float | None = None
    grid: TauGrid = field(default_factory=lambda: TauGrid.regular(0.05, 0.5, 0.05))
    g_floor: float = 0.05

    def __post_init__(self):
        if self.mtry < 1:
            raise BadInput("mtry must be >= 1")
        if self.nodesize_min < 1 or self.nodesize < self.nodesize_min:
            raise BadInput("need nodesize >= nodesize_min >= 1")
        if self.maxnodes is not None and self.maxnodes < 1:
            raise BadInput("maxnodes must be >= 1 when set")
        if not 0.0 < self.g_floor < 1.0:
            raise BadInput("g_floor must be in (0, 1)")


@dataclass
class Leaf:
    fit: StepSurvival
    member_times: np.ndarray
    member_events: np.ndarray


@dataclass
class Internal:
    feature: int
    threshold: float
    left: "Leaf | Internal | None" = None
    right: "Leaf | Internal | None" = None


def candidate_cuts(values) -> np.ndarray:
    """Midpoints between consecutive distinct sorted values."""
    v = np.unique(np.asarray(values, dtype=np.float64))
    if v.size < 2:
        return np.empty(0, dtype=np.float64)
    return 0.5 * (v[:-1] + v[1:])


def node_loss(y, delta, cfg: TreeConfig) -> float:
    """Node I-QLoss under the config's grid, horizon, and tail rule."""
    y = np.asarray(y, dtype=np.float64)
    d8 = np.asarray(delta, dtype=bool).astype(np.uint8)
    return _kernels.node_loss(y, d8, cfg.grid.levels, cfg.u, cfg.g_floor,
                              tail_code(cfg.tail_rule))


def best_split(X_node, y, delta, features, cfg: TreeConfig):
    """Best admissible (feature, threshold, gain) or None.

    Ties resolve to the lowest feature index, then the lowest threshold.
    """
    X_node = np.ascontiguousarray(X_node, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    d8 = np.asarray(delta, dtype=bool).astype(np.uint8)
    feats = np.sort(np.asarray(features, dtype=np.int64))
    parent_loss = _kernels.node_loss(y, d8, cfg.grid.levels, cfg.u,
                                     cfg.g_floor, tail_code(cfg.tail_rule))
    f, thr, gain, found = _kernels.best_split_kernel(
        X_node, y, d8, feats, cfg.grid.levels, cfg.u, cfg.g_floor,
        tail_code(cfg.tail_rule), cfg.nodesize_min, parent_loss)
    if not found:
        return None
    return int(f), float(thr), float(gain)


def grow_tree(X, y, delta, cfg: TreeConfig, rng: np.random.Generator):
    """Grow one tree on a subsample; returns the root node.

    Breadth-first work queue; a node becomes a leaf when it has fewer than
    ``nodesize`` uncensored members, all feature rows are equal, no admissible
    split exists, or the ``maxnodes`` leaf budget is exhausted. ``mtry``
    candidate features are drawn from ``rng`` at each split attempt, so
    growth is a deterministic function of (data, config, stream).
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    delta = np.asarray(delta, dtype=bool)
    n, p = X.shape
    if n == 0 or not delta.any():
        raise NoUncensored("subsample must contain an uncensored observation")
    if cfg.u is None:
        raise BadInput("grow_tree needs a resolved truncation time u")
    if p > 0 and not cfg.mtry <= p:
        raise BadInput(f"mtry={cfg.mtry} exceeds feature count {p}")

    root = None
    n_terminal = 0
    queue = deque([(np.arange(n), None, "")])
    while queue:
        idx, parent, side = queue.popleft()
        ys = y[idx]
        ds = delta[idx]
        result = None
        budget_blocked = (cfg.maxnodes is not None
                          and n_terminal + len(queue) + 2 > cfg.maxnodes)
        splittable = (int(ds.sum()) >= cfg.nodesize
                      and not budget_blocked
                      and p > 0
                      and not bool(np.all(X[idx] == X[idx[0]])))
        if splittable:
            feats = rng.choice(p, size=cfg.mtry, replace=False)
            result = best_split(X[idx], ys, ds, feats, cfg)
        if result is None:
            node = Leaf(nelson_aalen(ys, ds), ys.copy(), ds.copy())
            n_terminal += 1
        else:
            f, thr, _ = result
            node = Internal(feature=f, threshold=thr)
            mask = X[idx, f] <= thr
            queue.append((idx[mask], node, "left"))
            queue.append((idx[~mask], node, "right"))
        if parent is None:
            root = node
        else:
            setattr(parent, side, node)
    return root


def assign_leaves(root, X) -> np.ndarray:
    """Leaf object each row of X falls into (object array of length n)."""
    X = np.asarray(X, dtype=np.float64)
    out = np.empty(X.shape[0], dtype=object)
    stack = [(root, np.arange(X.shape[0]))]
    while stack:
        node, idx = stack.pop()
        if idx.size == 0:
            continue
        if isinstance(node, Leaf):
            out[idx] = node
        else:
            mask = X[idx, node.feature] <= node.threshold
            stack.append((node.left, idx[mask]))
            stack.append((node.right, idx[~mask]))
    return out


def tree_values(root, X, grid: TauGrid, rule: TailRule) -> np.ndarray:
    """Per-row quantile values (n x levels) for one tree."""
    leaves = assign_leaves(root, X)
    cache: dict[int, np.ndarray] = {}
    out = np.empty((X.shape[0], len(grid)), dtype=np.float64)
    for i, leaf in enumerate(leaves):
        key = id(leaf)
        vals = cache.get(key)
        if vals is None:
            vals = leaf.fit.quantile_grid(grid.levels, rule,
                                          leaf.member_times, leaf.member_events)
            cache[key] = vals
        out[i] = vals
    return out


def tree_predict(root, x, grid: TauGrid, rule: TailRule) -> QuantileProcess:
    """Quantile process of the leaf that x falls into (raw, not isotonized)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise BadInput("x must be a single feature vector")
    node = root
    while isinstance(node, Internal):
        if node.feature >= x.size:
            raise BadInput(f"x has {x.size} components, tree needs feature "
                           f"{node.feature}")
        node = node.left if x[node.feature] <= node.threshold else node.right
    values = node.fit.quantile_grid(grid.levels, rule, node.member_times,
                                    node.member_events)
    return QuantileProcess(grid, values)


def count_leaves(root) -> int:
    stack, n = [root], 0
    while stack:
        node = stack.pop()
        if isinstance(node, Leaf):
            n += 1
        else:
            stack.extend((node.left, node.right))
    return n


def resolved(cfg: TreeConfig, u: float) -> TreeConfig:
    """Copy of cfg with the horizon filled in."""
    return replace(cfg, u=float(u))
