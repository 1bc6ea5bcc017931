"""Goodness-of-fit scoring and train/test splitting.

AIC and BIC penalize the maximized log-likelihood by the parameter count;
RMSE measures the distance between a model's state-probability curve and
the non-parametric baseline over an evaluation age grid.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .chain import N_STATES, StateProbabilityCurve
from .errors import DataFormatError


@dataclass(frozen=True)
class MetricSet:
    rmse: float
    aic: float
    bic: float
    n_obs: int
    n_params: int

    def to_dict(self) -> dict:
        return asdict(self)


def aic(loglik: float, n_params: int) -> float:
    """Akaike information criterion, 2k - 2l."""
    return 2.0 * n_params - 2.0 * loglik


def bic(loglik: float, n_params: int, n_obs: int) -> float:
    """Bayesian information criterion, ln(n) k - 2l.

    ``n_obs`` is the number of observations contributing likelihood terms
    in the evaluated split.
    """
    if n_obs < 1:
        raise DataFormatError("bic requires n_obs >= 1")
    return math.log(n_obs) * n_params - 2.0 * loglik


def rmse(model: StateProbabilityCurve, baseline: StateProbabilityCurve, ages) -> float:
    """Root-mean-square distance between two curves over a shared grid.

    Averages squared per-state differences over ``len(ages) * 6`` cells;
    both curves must contain every requested age.
    """
    ages = np.asarray(ages, dtype=float)
    if ages.size == 0:
        raise DataFormatError("rmse needs a non-empty evaluation grid")
    diff = np.array([model.at(a) - baseline.at(a) for a in ages])
    return float(np.sqrt((diff**2).sum() / (ages.size * N_STATES)))


def split(pipe_ids, ratio: float = 0.7, seed: int = 0) -> tuple[list, list]:
    """Deterministic random partition of pipes into train/test sets.

    Splitting is by pipe, so every inspection of a pipe lands on the same
    side.  Ids are sorted before shuffling, making the partition invariant
    to input order.
    """
    if not 0.0 < ratio < 1.0:
        raise DataFormatError(f"split ratio must be in (0, 1), got {ratio}")
    ids = sorted(set(pipe_ids))
    if len(ids) < 2:
        raise DataFormatError("need at least 2 pipes to split")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(ids))
    n_train = int(math.floor(ratio * len(ids) + 0.5))
    train = sorted(ids[i] for i in order[:n_train])
    test = sorted(ids[i] for i in order[n_train:])
    return train, test


def relative_error(best_inhomogeneous: float, best_homogeneous: float) -> float:
    """Improvement of the best inhomogeneous over the best homogeneous
    model, relative to the larger of the two scores.

    Positive when the inhomogeneous model scores lower (better).
    """
    largest = max(best_homogeneous, best_inhomogeneous)
    return (best_homogeneous - best_inhomogeneous) / largest


def metrics_json(family: str, split_name: str, metric_set: MetricSet) -> str:
    payload = {"family": family, "split": split_name}
    payload.update(metric_set.to_dict())
    return json.dumps(payload)


def write_metrics_csv(rows: list[dict], path) -> None:
    """Combined per-model score table (one train + test row per model)."""
    columns = (
        "type",
        "family",
        "n_params",
        "rmse_train",
        "aic_train",
        "bic_train",
        "rmse_test",
        "aic_test",
        "bic_test",
    )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            cells = []
            for col in columns:
                value = row[col]
                cells.append(f"{value:.6g}" if isinstance(value, float) else str(value))
            fh.write(",".join(cells) + "\n")
