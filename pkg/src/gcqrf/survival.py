"""Nelson-Aalen estimation, survival curves, and quantile inversion.

Conventions used throughout the package:

* The cumulative hazard ``L(t)`` is a right-continuous step function with
  jumps ``d/r`` at each distinct time carrying at least one event, where
  ``d`` counts events at the time and ``r`` counts subjects with observed
  time ``>= t`` (so censorings tied with an event stay in its risk set).
* Survival is ``S(t) = exp(-L(t))``, which stays strictly positive, so the
  largest invertible quantile level is ``1 - exp(-L(inf)) < 1``.
* Inverse-probability-of-censoring weights evaluate the censoring survival
  at the left limit ``S(t-)`` so an event tied with the last censoring time
  never divides by zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import BadInput, EmptyNode, InvalidTau


class TailRule(str, Enum):
    """How to extend quantiles beyond the largest invertible level."""

    LARGEST_OBSERVATION = "largest_observation"
    LARGEST_UNCENSORED = "largest_uncensored"
    EXPONENTIAL = "exponential"


@dataclass(frozen=True)
class StepSurvival:
    """A fitted cumulative-hazard step function.

    Fields
    ------
    times : strictly increasing times carrying at least one event
    increments : hazard jumps d/r at each time (all >= 0)
    n_at_risk : risk-set sizes at each time, kept for audit
    """

    times: np.ndarray
    increments: np.ndarray
    n_at_risk: np.ndarray
    _cum: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=np.float64)
        inc = np.asarray(self.increments, dtype=np.float64)
        nrisk = np.asarray(self.n_at_risk, dtype=np.int64)
        if times.ndim != 1 or inc.shape != times.shape or nrisk.shape != times.shape:
            raise BadInput("times, increments, n_at_risk must be 1-d and equal length")
        if times.size and not np.all(np.diff(times) > 0):
            raise BadInput("times must be strictly increasing")
        if np.any(inc < 0):
            raise BadInput("increments must be nonnegative")
        if not np.all(np.isfinite(times)) or not np.all(np.isfinite(inc)):
            raise BadInput("non-finite entry in step function")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "increments", inc)
        object.__setattr__(self, "n_at_risk", nrisk)
        object.__setattr__(self, "_cum", np.cumsum(inc))

    def cumulative_hazard(self, t):
        """L(t), right-continuous; 0 before the first jump."""
        idx = np.searchsorted(self.times, t, side="right")
        cum = np.concatenate(([0.0], self._cum))
        return cum[idx]

    def survival_at(self, t):
        """S(t) = exp(-L(t)), right-continuous."""
        return np.exp(-self.cumulative_hazard(t))

    def survival_left_limit(self, t):
        """S(t-): survival just below t; >= survival_at(t)."""
        idx = np.searchsorted(self.times, t, side="left")
        cum = np.concatenate(([0.0], self._cum))
        return np.exp(-cum[idx])

    def max_estimable_tau(self) -> float:
        """Largest level at which the fit can be inverted: 1 - min S."""
        if self.times.size == 0:
            return 0.0
        return 1.0 - math.exp(-float(self._cum[-1]))

    def quantile(self, tau, rule: TailRule, node_times, node_events) -> float:
        """Invert the fit at level ``tau``.

        Returns the smallest stored time with ``S(t) <= 1 - tau``; beyond the
        largest invertible level, applies ``rule`` using the observations the
        fit came from.
        """
        if not 0.0 < tau < 1.0:
            raise InvalidTau(f"tau must be in (0, 1), got {tau}")
        if self.times.size:
            surv = np.exp(-self._cum)
            hit = np.nonzero(surv <= 1.0 - tau)[0]
            if hit.size:
                return float(self.times[hit[0]])
        node_times = np.asarray(node_times, dtype=np.float64)
        node_events = np.asarray(node_events, dtype=bool)
        if rule is TailRule.LARGEST_OBSERVATION:
            if node_times.size == 0:
                raise EmptyNode("tail rule needs node observations")
            return float(node_times.max())
        if rule is TailRule.LARGEST_UNCENSORED:
            # every node carries >= 1 uncensored observation by construction
            assert node_events.any(), "no uncensored observation for tail rule"
            return float(node_times[node_events].max())
        if rule is TailRule.EXPONENTIAL:
            if self.times.size == 0:
                raise EmptyNode("exponential tail needs at least one event")
            t_max = float(self.times[-1])
            if t_max == 0.0:
                return 0.0
            rate = float(self._cum[-1]) / t_max
            return -math.log(1.0 - tau) / rate
        raise BadInput(f"unknown tail rule {rule!r}")

    def quantile_grid(self, levels, rule: TailRule, node_times, node_events) -> np.ndarray:
        return np.array(
            [self.quantile(float(t), rule, node_times, node_events) for t in levels],
            dtype=np.float64,
        )


def nelson_aalen(times, events) -> StepSurvival:
    """Nelson-Aalen fit: increment d/r at each distinct time with d >= 1 events.

    ``events`` marks which observations are events (True) versus censored.
    Times may be any finite reals; ties are handled by counting all events at
    a time against the risk set of everything still observed at that time.
    """
    t = np.asarray(times, dtype=np.float64)
    e = np.asarray(events, dtype=bool)
    if t.size == 0:
        raise EmptyNode("nelson_aalen on empty sample")
    if t.shape != e.shape or t.ndim != 1:
        raise BadInput("times and events must be 1-d and equal length")
    if not np.all(np.isfinite(t)):
        raise BadInput("non-finite time")
    order = np.argsort(t, kind="mergesort")
    ts, es = t[order], e[order]
    n = ts.size
    out_t, out_inc, out_risk = [], [], []
    j = 0
    while j < n:
        k = j
        d = 0
        while k < n and ts[k] == ts[j]:
            if es[k]:
                d += 1
            k += 1
        if d > 0:
            r = n - j
            out_t.append(ts[j])
            out_inc.append(d / r)
            out_risk.append(r)
        j = k
    return StepSurvival(
        np.asarray(out_t, dtype=np.float64),
        np.asarray(out_inc, dtype=np.float64),
        np.asarray(out_risk, dtype=np.int64),
    )


def censoring_fit(times, deltas, u) -> StepSurvival:
    """Nelson-Aalen fit of the censoring distribution, truncated at ``u``.

    An observation is a censoring event iff it was censored at or before the
    horizon (delta false and y <= u); everything enters the risk set at
    ``min(y, u)``. No censoring events is valid and yields G == 1.
    """
    t = np.asarray(times, dtype=np.float64)
    d = np.asarray(deltas, dtype=bool)
    cens_event = (~d) & (t <= u)
    return nelson_aalen(np.minimum(t, u), cens_event)


def ipcw_weight(y, delta, u, g: StepSurvival, floor: float) -> float:
    """Inverse-probability-of-censoring weight for one observation.

    The event-by-horizon indicator is 1 when ``y > u`` or the observation is
    an event; the weight divides it by the floored left limit of the
    censoring survival at ``min(y, u)``.
    """
    if not 0.0 < floor < 1.0:
        raise BadInput(f"floor must be in (0, 1), got {floor}")
    observed = 1.0 if (y > u or delta) else 0.0
    if observed == 0.0:
        return 0.0
    g_left = float(g.survival_left_limit(min(y, u)))
    return observed / max(g_left, floor)


def ipcw_weights(y, delta, u, g: StepSurvival, floor: float) -> np.ndarray:
    """Vectorized ipcw_weight over aligned arrays."""
    if not 0.0 < floor < 1.0:
        raise BadInput(f"floor must be in (0, 1), got {floor}")
    y = np.asarray(y, dtype=np.float64)
    delta = np.asarray(delta, dtype=bool)
    observed = (y > u) | delta
    g_left = np.asarray(g.survival_left_limit(np.minimum(y, u)), dtype=np.float64)
    w = observed / np.maximum(g_left, floor)
    return np.where(observed, w, 0.0)
