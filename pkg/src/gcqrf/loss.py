"""Check loss, node-level quantile loss, and the split-gain objective.

Node losses come in two branches. A node containing censored observations is
scored with IPCW weights on horizon-truncated responses; a fully uncensored
node is scored with plain check loss on the raw responses. Both carry the
level weight ``tau * (1 - tau)``. Integration over a level grid is the
arithmetic mean across levels.

Accumulation order is part of the contract: sums run over members in stored
order, then over grid levels in order, so results are reproducible bit for
bit and can be checked against straightforward reimplementation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BadInput, EmptyNode, InvalidTau
from .survival import StepSurvival, TailRule, ipcw_weight


@dataclass(frozen=True)
class TauGrid:
    """Strictly increasing quantile levels in (0, 1)."""

    levels: np.ndarray

    def __post_init__(self):
        levels = np.asarray(self.levels, dtype=np.float64)
        if levels.ndim != 1 or levels.size == 0:
            raise BadInput("grid must be a nonempty 1-d array")
        if np.any(levels <= 0.0) or np.any(levels >= 1.0):
            raise BadInput("grid levels must lie in (0, 1)")
        if np.any(np.diff(levels) <= 0.0):
            raise BadInput("grid levels must be strictly increasing")
        object.__setattr__(self, "levels", levels)

    @classmethod
    def regular(cls, start: float, stop: float, step: float) -> "TauGrid":
        """Evenly spaced levels from start to stop inclusive."""
        if step <= 0:
            raise BadInput("step must be positive")
        count = int(round((stop - start) / step)) + 1
        if count < 1 or abs(start + (count - 1) * step - stop) > 1e-9:
            raise BadInput(f"step {step} does not evenly divide [{start}, {stop}]")
        return cls(np.linspace(start, stop, count))

    def __len__(self):
        return self.levels.size

    @property
    def tau_min(self) -> float:
        return float(self.levels[0])

    @property
    def tau_max(self) -> float:
        return float(self.levels[-1])


@dataclass(frozen=True)
class QuantileProcess:
    """Predicted quantiles on a fixed level grid (a step function in tau)."""

    grid: TauGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape != self.grid.levels.shape:
            raise BadInput("values length must match grid length")
        object.__setattr__(self, "values", values)

    def isotonized(self) -> "QuantileProcess":
        return QuantileProcess(self.grid, isotonize(self.values))

    def is_monotone(self) -> bool:
        return bool(np.all(np.diff(self.values) >= 0.0))


def isotonize(values: np.ndarray) -> np.ndarray:
    """Running maximum over tau; fixes monotonicity broken by averaging."""
    return np.maximum.accumulate(np.asarray(values, dtype=np.float64))


def check_loss(tau: float, v):
    """Asymmetric check loss v * (tau - 1{v < 0}); vectorizes over v."""
    if not 0.0 < tau < 1.0:
        raise InvalidTau(f"tau must be in (0, 1), got {tau}")
    v = np.asarray(v, dtype=np.float64)
    out = np.where(v >= 0.0, v * tau, v * (tau - 1.0))
    return float(out) if out.ndim == 0 else out


def node_qloss(y, delta, tau, q_hat, u=None, g_node: StepSurvival | None = None,
               floor: float = 0.05) -> float:
    """Level-tau loss of predicting ``q_hat`` for every member of a node.

    With ``g_node`` supplied, members are weighted by IPCW and responses are
    truncated at ``u`` (censored branch). With ``g_node=None`` the node must
    be censoring-free and raw responses are used.
    """
    if not 0.0 < tau < 1.0:
        raise InvalidTau(f"tau must be in (0, 1), got {tau}")
    y = np.asarray(y, dtype=np.float64)
    delta = np.asarray(delta, dtype=bool)
    m = y.size
    if m == 0:
        raise EmptyNode("node_qloss on empty node")
    t1mt = tau * (1.0 - tau)
    acc = 0.0
    if g_node is None:
        if not delta.all():
            raise BadInput("uncensored branch requires a censoring-free node")
        for i in range(m):
            v = y[i] - q_hat
            rho = v * tau if v >= 0.0 else v * (tau - 1.0)
            acc += t1mt * rho
    else:
        if u is None:
            raise BadInput("censored branch requires a truncation time u")
        for i in range(m):
            w = ipcw_weight(y[i], bool(delta[i]), u, g_node, floor)
            v = min(y[i], u) - q_hat
            rho = v * tau if v >= 0.0 else v * (tau - 1.0)
            acc += (w * t1mt) * rho
    return acc / m


def node_iqloss(y, delta, grid: TauGrid, fit: StepSurvival, rule: TailRule,
                u=None, g_node: StepSurvival | None = None,
                floor: float = 0.05) -> float:
    """Grid-mean of node_qloss with quantiles read off the node fit."""
    y = np.asarray(y, dtype=np.float64)
    delta = np.asarray(delta, dtype=bool)
    if y.size == 0:
        raise EmptyNode("node_iqloss on empty node")
    acc = 0.0
    for tau in grid.levels:
        q = fit.quantile(float(tau), rule, y, delta)
        acc += node_qloss(y, delta, float(tau), q, u=u, g_node=g_node, floor=floor)
    return acc / len(grid)


def split_gain(parent_loss: float, n_parent: int, left_loss: float, n_left: int,
               right_loss: float, n_right: int) -> float:
    """Size-weighted loss drop of a split; may be negative."""
    if n_left + n_right != n_parent:
        raise BadInput("child sizes must sum to the parent size")
    return n_parent * parent_loss - n_left * left_loss - n_right * right_loss
