"""Non-parametric survival estimation for interval-censored inspections.

An inspection only brackets the age at which a pipe crossed a severity
threshold: pipes already at or past the threshold at inspection age ``y``
are events with the crossing age in ``[0, y)``; pipes still below it are
non-events with the crossing age in ``[y, +inf)``.  The NPMLE for such
data places probability mass on a finite set of intervals (the maximal
intersections of the observation intervals) and is computed here by
self-consistency EM.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .chain import N_STATES, StateProbabilityCurve
from .errors import DataFormatError

INF = math.inf

_MASS_EPS = 1e-12


@dataclass(frozen=True)
class CensoredInterval:
    """A censoring interval for one observation.

    Endpoint closedness matters when observation endpoints coincide:
    events are ``[0, y)``, non-events ``[y, +inf)``, and an exactly
    observed time is the degenerate ``[y, y]``.
    """

    left: float
    right: float
    left_closed: bool = True
    right_closed: bool = False

    def __post_init__(self):
        if self.left < 0.0 or self.right < self.left:
            raise DataFormatError(f"invalid censoring interval [{self.left}, {self.right}]")
        if self.left == self.right and not (self.left_closed and self.right_closed):
            raise DataFormatError("a degenerate interval must be closed on both sides")

    @classmethod
    def event(cls, y: float) -> "CensoredInterval":
        return cls(0.0, float(y), True, False)

    @classmethod
    def non_event(cls, y: float) -> "CensoredInterval":
        return cls(float(y), INF, True, False)

    @classmethod
    def exact(cls, y: float) -> "CensoredInterval":
        return cls(float(y), float(y), True, True)


def binarize(observations, k_bin: int) -> list[CensoredInterval]:
    """Split observations into events/non-events at severity ``k_bin``.

    ``observations`` are ``(age, state)`` pairs with states 1..6 (6 = F).
    States below the threshold are non-events ``[y, +inf)``; states at or
    above it are events ``[0, y)``.
    """
    if not 2 <= k_bin <= N_STATES:
        raise DataFormatError(f"threshold k_bin must be in 2..{N_STATES}, got {k_bin}")
    out = []
    for age, state in observations:
        if not 1 <= state <= N_STATES:
            raise DataFormatError(f"state {state} outside 1..{N_STATES}")
        if age < 0.0:
            raise DataFormatError(f"negative age {age}")
        if state < k_bin:
            out.append(CensoredInterval.non_event(age))
        else:
            out.append(CensoredInterval.event(age))
    return out


# Endpoint ordinalization: each distinct finite value v_i occupies three
# slots (just-before, at, just-after) so open/closed endpoints order
# correctly without epsilon arithmetic.
def _ordinalize(intervals):
    values = sorted({iv.left for iv in intervals} | {iv.right for iv in intervals if iv.right != INF})
    index = {v: i for i, v in enumerate(values)}
    inf_ord = 3 * len(values) + 1

    def left_ord(iv):
        i = index[iv.left]
        return 3 * i + 1 if iv.left_closed else 3 * i + 2

    def right_ord(iv):
        if iv.right == INF:
            return inf_ord
        i = index[iv.right]
        return 3 * i + 1 if iv.right_closed else 3 * i

    return [(left_ord(iv), right_ord(iv)) for iv in intervals], inf_ord


@dataclass
class TurnbullCurve:
    """NPMLE survival as probability masses on disjoint intervals.

    ``intervals`` are ``(left, right, unbounded)`` with real endpoints;
    ``masses`` sum to one.  Between intervals the survival function is a
    right-continuous step; inside a positive-mass bounded interval the
    NPMLE is undefined and evaluation takes the value at the interval's
    right endpoint.  Ages strictly beyond the left endpoint of a
    positive-mass unbounded interval are not evaluable.
    """

    intervals: list[tuple[float, float, bool]]
    masses: np.ndarray
    converged: bool
    n_iterations: int
    log_likelihood: float
    log_likelihood_trace: np.ndarray

    def survival(self, age: float) -> float:
        """Conventional survival value at ``age`` (see class docstring).

        Non-evaluable ages return the plateau value reached at the last
        evaluable age.
        """
        dropped = 0.0
        for (left, right, unbounded), p in zip(self.intervals, self.masses):
            if unbounded:
                continue
            if age > left or age >= right:
                dropped += p
        return 1.0 - dropped

    def evaluable(self, age: float) -> bool:
        for (left, _right, unbounded), p in zip(self.intervals, self.masses):
            if unbounded and p > _MASS_EPS and age > left:
                return False
        return True


def turnbull_fit(intervals, tol: float = 1e-8, max_iterations: int = 1000) -> TurnbullCurve:
    """Self-consistency EM for the interval-censored NPMLE.

    Mass intervals are the maximal intersections of the observation
    intervals.  EM starts from the uniform mass vector and stops when the
    largest mass change falls below ``tol`` (or at the iteration cap, in
    which case ``converged`` is False).
    """
    intervals = list(intervals)
    if not intervals:
        raise DataFormatError("turnbull_fit needs at least one interval")
    obs_ords, _ = _ordinalize(intervals)

    # maximal intersections: a left endpoint immediately followed by a
    # right endpoint in the sorted endpoint sequence (lefts first on ties)
    endpoints = []
    for left, right in set(obs_ords):
        endpoints.append((left, 0))
        endpoints.append((right, 1))
    endpoints.sort()
    mass_ords = []
    prev = None
    for ordv, kind in endpoints:
        if kind == 1 and prev is not None and prev[1] == 0:
            mass_ords.append((prev[0], ordv))
        prev = (ordv, kind)
    m = len(mass_ords)

    # collapse duplicate observations; EM cost scales with distinct rows
    uniq: dict[tuple[int, int], int] = {}
    for o in obs_ords:
        uniq[o] = uniq.get(o, 0) + 1
    rows = list(uniq)
    weights = np.array([uniq[o] for o in rows], dtype=float)
    n_total = weights.sum()

    compat = np.zeros((len(rows), m))
    for i, (ol, orr) in enumerate(rows):
        for j, (ql, qr) in enumerate(mass_ords):
            if ol <= ql and qr <= orr:
                compat[i, j] = 1.0

    p = np.full(m, 1.0 / m)
    converged = False
    iterations = 0
    trace = []
    for iterations in range(1, max_iterations + 1):
        denom = compat @ p
        if np.any(denom <= 0.0):
            raise DataFormatError("an observation is incompatible with every mass interval")
        p_new = p * (compat.T @ (weights / denom)) / n_total
        delta = np.abs(p_new - p).max()
        p = p_new
        trace.append(float(weights @ np.log(compat @ p)))
        if delta < tol:
            converged = True
            break
    loglik = float(weights @ np.log(compat @ p))

    # map ordinal mass intervals back to real endpoints
    ord_to_value = {}
    values = sorted({iv.left for iv in intervals} | {iv.right for iv in intervals if iv.right != INF})
    for i, v in enumerate(values):
        for slot in range(3):
            ord_to_value[3 * i + slot] = v
    real_intervals = []
    for ql, qr in mass_ords:
        left = ord_to_value[ql]
        unbounded = qr == 3 * len(values) + 1
        right = INF if unbounded else ord_to_value[qr]
        real_intervals.append((left, right, unbounded))
    return TurnbullCurve(real_intervals, p, converged, iterations, loglik, np.asarray(trace))


def fit_thresholds(observations, tol: float = 1e-8, max_iterations: int = 1000) -> dict[int, TurnbullCurve]:
    """One Turnbull estimator per severity threshold k_bin in 2..6."""
    observations = list(observations)
    if not observations:
        raise DataFormatError("no observations to fit")
    return {
        k_bin: turnbull_fit(binarize(observations, k_bin), tol=tol, max_iterations=max_iterations)
        for k_bin in range(2, N_STATES + 1)
    }


def turnbull_state_probs(observations, ages) -> StateProbabilityCurve:
    """Per-state probability baseline from the five threshold estimators.

    Threshold curve k_bin estimates P(state < k_bin); differences give
    per-state probabilities.  Independent per-threshold fits may cross,
    so negative differences are clipped to zero and rows renormalized.
    """
    curves = fit_thresholds(observations)
    return state_probs_from_curves(curves, ages)


def state_probs_from_curves(curves: dict[int, TurnbullCurve], ages) -> StateProbabilityCurve:
    ages = np.asarray(ages, dtype=float)
    s = {k: np.array([curves[k].survival(a) for a in ages]) for k in range(2, N_STATES + 1)}
    probs = np.empty((ages.size, N_STATES))
    probs[:, 0] = s[2]
    for k in (2, 3, 4):  # P(k) = S^{(k+1)} - S^{(k)}
        probs[:, k - 1] = s[k + 1] - s[k]
    probs[:, 4] = s[6] - s[5]
    probs[:, 5] = 1.0 - s[6]
    probs = np.clip(probs, 0.0, None)
    probs /= probs.sum(axis=1, keepdims=True)
    return StateProbabilityCurve(ages, probs)


def evaluable_ages(curves: dict[int, TurnbullCurve], ages) -> np.ndarray:
    """Subset of ``ages`` where every threshold curve is evaluable."""
    ages = np.asarray(ages, dtype=float)
    keep = [a for a in ages if all(c.evaluable(a) for c in curves.values())]
    return np.asarray(keep, dtype=float)


def write_turnbull_csv(curves: dict[int, TurnbullCurve], ages, path) -> None:
    """Export threshold survival curves as ``k_bin,age,survival`` rows."""
    from .chain import STATE_LABELS

    with open(path, "w", encoding="utf-8") as fh:
        fh.write("k_bin,age,survival\n")
        for k_bin in sorted(curves):
            curve = curves[k_bin]
            for age in ages:
                if curve.evaluable(age):
                    fh.write(f"{STATE_LABELS[k_bin - 1]},{age:.6g},{curve.survival(age):.6g}\n")
