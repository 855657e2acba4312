"""Model-agnostic survival utilities: concordance index, Kaplan-Meier,
and the two-point Weibull parameter solve.

All functions are pure and operate on plain numpy arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .exceptions import ConcordanceUndefinedError, DataError


@dataclass(frozen=True)
class WeibullParams:
    """Weibull survival S(t) = exp(-scale * t**shape)."""

    scale: float
    shape: float

    def __post_init__(self):
        if not (self.scale > 0 and self.shape > 0):
            raise DataError("Weibull scale and shape must be positive")

    def survival(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=np.float64)
        return np.exp(-self.scale * t**self.shape)


@njit(cache=True)
def _concordance_counts(times, events, scores):
    n_c = 0
    credit = 0.0
    n = times.shape[0]
    for i in range(n):
        if events[i] != 1:
            continue
        for k in range(n):
            if k == i:
                continue
            # usable: k outlives i, or k censored at i's event time
            if times[k] > times[i] or (times[k] == times[i] and events[k] == 0):
                n_c += 1
                if scores[k] < scores[i]:
                    credit += 1.0
                elif scores[k] == scores[i]:
                    credit += 0.5
    return n_c, credit


def concordance_index(times, events, scores) -> float:
    """Harrell's C-index: fraction of usable pairs whose risk-score order
    matches survival order, with half credit for tied scores.

    A pair (i, k) is usable when i has an event and k survives longer;
    a censored k at exactly i's event time counts as surviving longer.

    Raises:
        ConcordanceUndefinedError: if no usable pair exists.
    """
    times = np.ascontiguousarray(times, dtype=np.float64)
    events = np.ascontiguousarray(events, dtype=np.int64)
    scores = np.ascontiguousarray(scores, dtype=np.float64)
    if not (times.shape == events.shape == scores.shape):
        raise DataError("times, events and scores must have equal length")
    if times.shape[0] < 2:
        raise DataError("need at least two observations")
    if not np.all(np.isfinite(scores)):
        raise DataError("risk scores must be finite")
    n_c, credit = _concordance_counts(times, events, scores)
    if n_c == 0:
        raise ConcordanceUndefinedError("no usable pairs: concordance is undefined")
    return credit / n_c


@dataclass(frozen=True)
class KaplanMeierEstimate:
    """Product-limit estimate as a right-continuous step function."""

    event_times: np.ndarray
    survival: np.ndarray

    @property
    def steps(self) -> list[tuple[float, float]]:
        return [(float(t), float(s)) for t, s in zip(self.event_times, self.survival)]

    def __call__(self, t) -> np.ndarray | float:
        t = np.asarray(t, dtype=np.float64)
        idx = np.searchsorted(self.event_times, t, side="right") - 1
        out = np.where(idx >= 0, np.concatenate([[1.0], self.survival])[idx + 1], 1.0)
        return float(out) if out.ndim == 0 else out


def kaplan_meier(times, events) -> KaplanMeierEstimate:
    """Kaplan-Meier estimator. Events at a tied time are counted before
    censorings at that time (the censored stay in the risk set for it).
    """
    times = np.asarray(times, dtype=np.float64)
    events = np.asarray(events, dtype=np.int64)
    if times.shape != events.shape or times.ndim != 1:
        raise DataError("times and events must be equal-length vectors")
    if times.shape[0] == 0:
        raise DataError("need at least one observation")

    order = np.argsort(times, kind="stable")
    t_sorted = times[order]
    e_sorted = events[order]
    uniq = np.unique(t_sorted[e_sorted == 1])
    surv = []
    s = 1.0
    n = times.shape[0]
    for t in uniq:
        at_risk = int(np.sum(t_sorted >= t))
        d = int(np.sum((t_sorted == t) & (e_sorted == 1)))
        s *= 1.0 - d / at_risk
        surv.append(s)
    return KaplanMeierEstimate(
        event_times=uniq, survival=np.asarray(surv, dtype=np.float64)
    )


def weibull_from_survival_points(
    t1: float, s1: float, t2: float, s2: float
) -> WeibullParams:
    """Solve S(t) = exp(-scale * t**shape) through two survival anchors.

    Requires 0 < t1 < t2 and 0 < s2 < s1 < 1.
    """
    if not (0 < t1 < t2):
        raise DataError(f"need 0 < t1 < t2, got t1={t1}, t2={t2}")
    if not (0 < s2 < s1 < 1):
        raise DataError(f"need 0 < s2 < s1 < 1, got s1={s1}, s2={s2}")
    shape = math.log(math.log(s2) / math.log(s1)) / math.log(t2 / t1)
    scale = -math.log(s1) / t1**shape
    return WeibullParams(scale=scale, shape=shape)
