"""Held-out metrics: quantile MSE against an oracle, IPCW and standard
integrated quantile loss, and relative metrics against the marginal
Nelson-Aalen baseline."""

from __future__ import annotations

import warnings

import numpy as np

from .errors import BadInput, DegenerateBaseline, NoUncensored
from .loss import QuantileProcess, TauGrid, isotonize
from .survival import StepSurvival, TailRule, ipcw_weights, nelson_aalen


def default_eval_grid() -> TauGrid:
    """The evaluation grid used throughout: 0.05 to 0.5 in steps of 0.05."""
    return TauGrid.regular(0.05, 0.5, 0.05)


def qmse(pred, truth, tau: float) -> float:
    """Level-tau weighted mean squared error on conditional quantiles."""
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise BadInput("pred and truth must align")
    t1mt = tau * (1.0 - tau)
    return float(np.mean(t1mt * (truth - pred) ** 2))


def iqmse(preds, truths, grid: TauGrid) -> float:
    """Grid-mean of qmse; preds and truths are (n, levels) matrices."""
    preds = np.atleast_2d(np.asarray(preds, dtype=np.float64))
    truths = np.atleast_2d(np.asarray(truths, dtype=np.float64))
    if preds.shape != truths.shape or preds.shape[1] != len(grid):
        raise BadInput("preds/truths must be (n, levels) matrices")
    total = 0.0
    for j, tau in enumerate(grid.levels):
        total += qmse(preds[:, j], truths[:, j], float(tau))
    return total / len(grid)


def ipcw_iqloss(y, delta, preds, grid: TauGrid, u: float,
                g_hat: StepSurvival, floor: float = 0.05) -> float:
    """IPCW-weighted integrated quantile loss of predictions on (y, delta).

    ``g_hat`` must be a censoring fit from training data only. If every row
    is censored before the horizon the loss is 0 and a warning is issued.
    """
    y = np.asarray(y, dtype=np.float64)
    delta = np.asarray(delta, dtype=bool)
    preds = np.atleast_2d(np.asarray(preds, dtype=np.float64))
    if preds.shape != (y.size, len(grid)):
        raise BadInput("preds must be (n, levels)")
    w = ipcw_weights(y, delta, u, g_hat, floor)
    if not np.any(w > 0):
        warnings.warn("all rows censored before the horizon; IPCW loss is 0",
                      stacklevel=2)
        return 0.0
    yu = np.minimum(y, u)
    total = 0.0
    for j, tau in enumerate(grid.levels):
        t1mt = tau * (1.0 - tau)
        v = yu - preds[:, j]
        rho = np.where(v >= 0.0, v * tau, v * (tau - 1.0))
        total += float(np.mean(w * t1mt * rho))
    return total / len(grid)


def standard_iqloss(t_true, preds, grid: TauGrid) -> float:
    """Integrated quantile loss against the true (oracle) response."""
    t_true = np.asarray(t_true, dtype=np.float64)
    preds = np.atleast_2d(np.asarray(preds, dtype=np.float64))
    if preds.shape != (t_true.size, len(grid)):
        raise BadInput("preds must be (n, levels)")
    total = 0.0
    for j, tau in enumerate(grid.levels):
        t1mt = tau * (1.0 - tau)
        v = t_true - preds[:, j]
        rho = np.where(v >= 0.0, v * tau, v * (tau - 1.0))
        total += float(np.mean(t1mt * rho))
    return total / len(grid)


def na_baseline(y, delta, grid: TauGrid,
                rule: TailRule = TailRule.LARGEST_OBSERVATION) -> QuantileProcess:
    """Feature-free baseline: marginal Nelson-Aalen fit inverted on the grid."""
    y = np.asarray(y, dtype=np.float64)
    delta = np.asarray(delta, dtype=bool)
    if not delta.any():
        raise NoUncensored("baseline needs an uncensored observation")
    fit = nelson_aalen(y, delta)
    values = fit.quantile_grid(grid.levels, rule, y, delta)
    return QuantileProcess(grid, isotonize(values))


def relative_metric(model_loss: float, baseline_loss: float) -> float:
    """Ratio of a model loss to the baseline's."""
    if baseline_loss == 0.0:
        raise DegenerateBaseline("baseline loss is zero")
    return model_loss / baseline_loss
