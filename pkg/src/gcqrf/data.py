"""Dataset container, CSV ingestion, and model persistence.

Models persist as versioned JSON ("gcqrf-model/1"): config, resolved
horizon, per-tree subsample indices, and flattened node records. Floats are
written with Python's shortest round-trip representation, so a load-save
cycle reproduces every numeric field exactly.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, replace

import numpy as np

from .errors import BadInput, ParseError, UnsupportedVersion
from .loss import TauGrid
from .survival import StepSurvival, TailRule

MODEL_FORMAT = "gcqrf-model/1"


@dataclass
class Dataset:
    """Feature matrix plus observed time and event indicator."""

    X: np.ndarray
    y: np.ndarray
    delta: np.ndarray
    columns: list

    def __post_init__(self):
        X = np.ascontiguousarray(np.atleast_2d(np.asarray(self.X, dtype=np.float64)))
        y = np.asarray(self.y, dtype=np.float64)
        delta = np.asarray(self.delta, dtype=bool)
        if X.shape[0] != y.size or delta.size != y.size:
            raise BadInput("X, y, delta must agree on row count")
        if y.size < 1:
            raise BadInput("dataset must have at least one row")
        if len(self.columns) != X.shape[1]:
            raise BadInput("column names must match feature count")
        if not np.all(np.isfinite(X)) or not np.all(np.isfinite(y)):
            raise BadInput("dataset contains non-finite values")
        self.X = X
        self.y = y
        self.delta = delta
        self.columns = list(self.columns)

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        return Dataset(self.X[rows], self.y[rows], self.delta[rows],
                       list(self.columns))

    def with_features(self, X, columns) -> "Dataset":
        return Dataset(X, self.y, self.delta, columns)

    def with_delta(self, delta) -> "Dataset":
        return Dataset(self.X, self.y, delta, list(self.columns))


def read_csv(path, y_col: str = "y", delta_col: str = "delta") -> Dataset:
    """Load a dataset; all columns other than y/delta become features."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        for name in (y_col, delta_col):
            if name not in header:
                raise ParseError(f"{path}: missing column", column=name)
        y_idx = header.index(y_col)
        d_idx = header.index(delta_col)
        feat_idx = [i for i in range(len(header)) if i not in (y_idx, d_idx)]
        columns = [header[i] for i in feat_idx]
        rows, ys, ds = [], [], []
        for rownum, rec in enumerate(reader, start=2):
            if len(rec) != len(header):
                raise ParseError(f"{path}: expected {len(header)} cells, "
                                 f"got {len(rec)}", row=rownum)
            vals = []
            for i in feat_idx:
                try:
                    v = float(rec[i])
                except ValueError:
                    raise ParseError(f"{path}: non-numeric cell {rec[i]!r}",
                                     row=rownum, column=header[i]) from None
                if not np.isfinite(v):
                    raise ParseError(f"{path}: non-finite cell", row=rownum,
                                     column=header[i])
                vals.append(v)
            try:
                yv = float(rec[y_idx])
            except ValueError:
                raise ParseError(f"{path}: non-numeric cell {rec[y_idx]!r}",
                                 row=rownum, column=y_col) from None
            if not np.isfinite(yv):
                raise ParseError(f"{path}: non-finite cell", row=rownum,
                                 column=y_col)
            dv = rec[d_idx].strip()
            if dv not in ("0", "1"):
                raise ParseError(f"{path}: delta must be 0 or 1, got {dv!r}",
                                 row=rownum, column=delta_col)
            rows.append(vals)
            ys.append(yv)
            ds.append(dv == "1")
    if not ys:
        raise ParseError(f"{path}: no data rows")
    X = np.asarray(rows, dtype=np.float64).reshape(len(ys), len(feat_idx))
    return Dataset(X, np.asarray(ys), np.asarray(ds), columns)


def write_csv(dataset: Dataset, path, y_col: str = "y",
              delta_col: str = "delta") -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(dataset.columns) + [y_col, delta_col])
        for i in range(dataset.n):
            writer.writerow([repr(float(v)) for v in dataset.X[i]]
                            + [repr(float(dataset.y[i])),
                               "1" if dataset.delta[i] else "0"])


# ---------------------------------------------------------------------------
# config serialization

def tree_config_to_dict(cfg) -> dict:
    return {
        "mtry": cfg.mtry,
        "nodesize": cfg.nodesize,
        "nodesize_min": cfg.nodesize_min,
        "maxnodes": cfg.maxnodes,
        "tail_rule": cfg.tail_rule.value,
        "u": cfg.u,
        "grid": [float(t) for t in cfg.grid.levels],
        "g_floor": cfg.g_floor,
    }


def forest_config_to_dict(cfg) -> dict:
    return {
        "ntree": cfg.ntree,
        "subsample_rate": cfg.subsample_rate,
        "seed": cfg.seed,
        "u_policy": {"explicit": cfg.u, "quantile": cfg.u_quantile},
        "tree": tree_config_to_dict(cfg.tree),
    }


def tree_config_from_dict(doc: dict):
    from .tree import TreeConfig
    try:
        return TreeConfig(
            mtry=int(doc["mtry"]),
            nodesize=int(doc["nodesize"]),
            nodesize_min=int(doc["nodesize_min"]),
            maxnodes=None if doc.get("maxnodes") is None else int(doc["maxnodes"]),
            tail_rule=TailRule(doc.get("tail_rule", "largest_observation")),
            u=None if doc.get("u") is None else float(doc["u"]),
            grid=TauGrid(np.asarray(doc["grid"], dtype=np.float64)),
            g_floor=float(doc.get("g_floor", 0.05)),
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise ParseError(f"bad tree config: {exc}") from None


def forest_config_from_dict(doc: dict):
    from .forest import ForestConfig
    try:
        policy = doc.get("u_policy", {})
        return ForestConfig(
            tree=tree_config_from_dict(doc["tree"]),
            ntree=int(doc["ntree"]),
            subsample_rate=float(doc["subsample_rate"]),
            seed=int(doc["seed"]),
            u=None if policy.get("explicit") is None else float(policy["explicit"]),
            u_quantile=float(policy.get("quantile", 0.95)),
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise ParseError(f"bad forest config: {exc}") from None


def save_config(cfg, path) -> None:
    with open(path, "w") as fh:
        json.dump(forest_config_to_dict(cfg), fh, indent=1)


def load_config(path):
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: invalid JSON: {exc}") from None
    return forest_config_from_dict(doc)


# ---------------------------------------------------------------------------
# model serialization

def _flatten_tree(root) -> list:
    from .tree import Leaf
    nodes = []
    stack = [root]
    slots = {}
    order = []
    while stack:
        node = stack.pop()
        slots[id(node)] = len(order)
        order.append(node)
        if not isinstance(node, Leaf):
            stack.append(node.right)
            stack.append(node.left)
    for node in order:
        if isinstance(node, Leaf):
            nodes.append({
                "times": [float(v) for v in node.fit.times],
                "increments": [float(v) for v in node.fit.increments],
                "member_times": [float(v) for v in node.member_times],
                "member_events": [int(v) for v in node.member_events],
            })
        else:
            nodes.append({
                "feature": int(node.feature),
                "threshold": float(node.threshold),
                "left": slots[id(node.left)],
                "right": slots[id(node.right)],
            })
    return nodes


def _rebuild_tree(nodes: list):
    from .tree import Internal, Leaf
    built = [None] * len(nodes)
    for i in range(len(nodes) - 1, -1, -1):
        doc = nodes[i]
        if "feature" in doc:
            built[i] = Internal(feature=int(doc["feature"]),
                                threshold=float(doc["threshold"]),
                                left=built[int(doc["left"])],
                                right=built[int(doc["right"])])
        else:
            times = np.asarray(doc["times"], dtype=np.float64)
            member_times = np.asarray(doc["member_times"], dtype=np.float64)
            member_events = np.asarray(doc["member_events"], dtype=bool)
            # risk counts are recoverable from the members
            sorted_mt = np.sort(member_times)
            n_at_risk = member_times.size - np.searchsorted(sorted_mt, times,
                                                            side="left")
            fit = StepSurvival(times,
                               np.asarray(doc["increments"], dtype=np.float64),
                               n_at_risk.astype(np.int64))
            built[i] = Leaf(fit, member_times, member_events)
    return built[0]


def save_model(forest, path) -> None:
    doc = {
        "format": MODEL_FORMAT,
        "config": forest_config_to_dict(forest.config),
        "u_resolved": float(forest.u_resolved),
        "n_features": int(forest.n_features),
        "trees": [
            {"subsample": [int(i) for i in idx], "nodes": _flatten_tree(root)}
            for root, idx in zip(forest.trees, forest.subsample_indices)
        ],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_model(path):
    from .forest import Forest
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(doc, dict) or "format" not in doc:
        raise ParseError(f"{path}: not a model document")
    if doc["format"] != MODEL_FORMAT:
        raise UnsupportedVersion(f"{path}: unsupported format "
                                 f"{doc['format']!r}, expected {MODEL_FORMAT!r}")
    try:
        cfg = forest_config_from_dict(doc["config"])
        trees = [_rebuild_tree(t["nodes"]) for t in doc["trees"]]
        indices = [np.asarray(t["subsample"], dtype=np.int64)
                   for t in doc["trees"]]
        u_resolved = float(doc["u_resolved"])
        n_features = int(doc["n_features"])
    except (KeyError, TypeError, IndexError) as exc:
        raise ParseError(f"{path}: corrupt model document: {exc}") from None
    cfg = replace(cfg, tree=replace(cfg.tree, u=u_resolved))
    return Forest(trees, indices, cfg, u_resolved, n_features)
