"""Likelihood evaluation and two-stage calibration (M-H then SLSQP).

The likelihood of a cross-sectional inspection dataset multiplies, over
distinct integer ages t and severity grades k, the transition density
``-dS_k/dt`` raised to the count of age-t pipes found in a state reachable
from k.  That derivative has the closed form

    lambda_{k,k+1}(t) S_k(t) + sum_{m<=k} lambda_{mF}(t) S_m(t)

which is evaluated directly from the solved master equation rather than by
numerical differentiation.

Calibration first runs a random-walk Metropolis sampler over the boxed
parameter space (initial distribution proposed in unconstrained softmax
coordinates), then refines the posterior mean with SLSQP under the same
boxes and the simplex equality constraint.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from . import hazards, metrics
from .chain import ARCS, N_STATES, ChainParams, solve_master
from .errors import CalibrationError, DataFormatError, IntegrationError
from .hazards import HazardFamily

LOG_FLOOR = 1e-300  # keeps the sampler ergodic where the density underflows
SOFTMAX_SCALE = 4.0  # nominal coordinate width for initial-state proposals
_INIT_CANDIDATES = 50  # prior draws scanned for the chain's starting point

_N_TRANSIENT = N_STATES - 1  # severity grades that have successors


@dataclass
class CountTable:
    """Counts n_{k,t}: pipes of integer age t observed in a successor of k."""

    counts: dict[tuple[int, int], int]
    n: int  # observations that produced at least one increment

    def __post_init__(self):
        for (k, t), c in self.counts.items():
            if not 1 <= k <= _N_TRANSIENT or t < 0 or c < 0:
                raise DataFormatError(f"bad count entry n_[{k},{t}] = {c}")

    def ages(self) -> list[int]:
        return sorted({t for _, t in self.counts})

    def is_empty(self) -> bool:
        return not self.counts

    def arrays(self, age_index: dict[int, int]):
        k_idx = np.array([k - 1 for (k, _t) in self.counts], dtype=int)
        t_idx = np.array([age_index[t] for (_k, t) in self.counts], dtype=int)
        values = np.array(list(self.counts.values()), dtype=float)
        return k_idx, t_idx, values


def build_counts(observations, failure_mode: str = "all") -> CountTable:
    """Tabulate observations into the likelihood count table.

    A pipe seen in grade j in 2..5 was reached from j-1 (the unique
    sequential predecessor); a pipe seen in F lies in the successor set of
    every grade and increments all five rows (``failure_mode="all"``, the
    default) or only the k=5 row (``failure_mode="terminal"``).  Grade-1
    observations contribute nothing.
    """
    if failure_mode not in ("all", "terminal"):
        raise DataFormatError(f"failure_mode must be 'all' or 'terminal', got {failure_mode!r}")
    counts: dict[tuple[int, int], int] = {}
    contributing = 0
    for age, state in observations:
        if not 1 <= state <= N_STATES:
            raise DataFormatError(f"state {state} outside 1..{N_STATES}")
        if age < 0:
            raise DataFormatError(f"negative age {age}")
        t = int(round(float(age)))
        if state == 1:
            continue
        contributing += 1
        if state == N_STATES:
            rows = range(1, _N_TRANSIENT + 1) if failure_mode == "all" else (_N_TRANSIENT,)
            for k in rows:
                counts[(k, t)] = counts.get((k, t), 0) + 1
        else:
            counts[(state - 1, t)] = counts.get((state - 1, t), 0) + 1
    return CountTable(counts, contributing)


def transition_flux(params: ChainParams, ages, curve=None) -> np.ndarray:
    """Closed-form -d(cumulative occupancy of 1..k)/dt, rows k=1..5.

    ``ages`` must be sorted distinct ages; pass a pre-solved ``curve``
    whose grid covers them to skip the master-equation solve.
    """
    ages = np.asarray(ages, dtype=float)
    if curve is None:
        grid = ages if ages.size and ages[0] == 0.0 else np.concatenate(([0.0], ages))
        curve = solve_master(params, grid)
    probs = np.array([curve.at(a) for a in ages])
    rates = hazards.arc_rate_table(params.family, params.thetas, ages)
    seq, fail = rates[:4], rates[4:]
    flux = np.empty((_N_TRANSIENT, ages.size))
    fail_cum = np.cumsum(fail * probs.T[:_N_TRANSIENT], axis=0)
    for k_idx in range(_N_TRANSIENT):
        flux[k_idx] = fail_cum[k_idx]
        if k_idx < 4:
            flux[k_idx] += seq[k_idx] * probs[:, k_idx]
    return flux


def log_likelihood(params: ChainParams, counts: CountTable) -> float:
    """Count-weighted log transition densities; empty tables give 0."""
    if counts.is_empty():
        return 0.0
    ages = counts.ages()
    flux = transition_flux(params, np.asarray(ages, dtype=float))
    k_idx, t_idx, values = counts.arrays({t: i for i, t in enumerate(ages)})
    dens = np.maximum(flux[k_idx, t_idx], LOG_FLOOR)
    return float(values @ np.log(dens))


@dataclass(frozen=True)
class McmcConfig:
    iterations: int = 50_000
    burn_in: int = 49_000
    step_fraction: float | tuple = 0.05  # of each parameter's bound width
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.burn_in < self.iterations:
            raise DataFormatError("require 0 <= burn_in < iterations")


@dataclass(frozen=True)
class SqpConfig:
    eps: float = 1e-5  # forward finite-difference step
    ftol: float = 1e-50
    max_iterations: int = 300

    def __post_init__(self):
        if self.eps <= 0 or self.ftol <= 0 or self.max_iterations <= 0:
            raise DataFormatError("SqpConfig fields must be positive")


def _theta_bounds(family: HazardFamily, bounds) -> np.ndarray:
    per_param = np.asarray(bounds if bounds is not None else hazards.default_bounds(family), dtype=float)
    return np.tile(per_param, (len(ARCS), 1))


def _softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max())
    return e / e.sum()


def _params_from_vector(family, vec, bounds) -> ChainParams:
    p = family.n_params
    thetas = vec[: len(ARCS) * p].reshape(len(ARCS), p)
    s0 = np.asarray(vec[len(ARCS) * p :], dtype=float)
    s0 = np.clip(s0, 0.0, None)
    return ChainParams(family, thetas, s0 / s0.sum(), bounds)


def mh_sample(
    counts: CountTable,
    family: HazardFamily,
    bounds=None,
    config: McmcConfig = McmcConfig(),
    initial: ChainParams | None = None,
):
    """Random-walk Metropolis over the chain parameters.

    Gaussian per-parameter proposals with standard deviation
    ``step_fraction x bound width``; proposals leaving the box have prior
    zero and are rejected without a likelihood evaluation.  The initial
    distribution walks in softmax coordinates.  Returns the component-wise
    mean of the post-burn-in samples and sampler diagnostics.
    """
    rng = np.random.default_rng(config.seed)
    p = family.n_params
    box = _theta_bounds(family, bounds)
    spec_bounds = tuple(tuple(b) for b in (bounds if bounds is not None else hazards.default_bounds(family)))
    n_theta = len(ARCS) * p
    widths = box[:, 1] - box[:, 0]
    frac = np.asarray(config.step_fraction, dtype=float)
    if frac.ndim == 0:
        frac = np.full(n_theta + N_STATES, float(frac))
    elif frac.size != n_theta + N_STATES:
        raise DataFormatError(f"step_fraction must be scalar or length {n_theta + N_STATES}")
    sd = np.concatenate([frac[:n_theta] * widths, frac[n_theta:] * SOFTMAX_SCALE])

    def loglik(theta_flat, z):
        params = ChainParams(family, theta_flat.reshape(len(ARCS), p), _softmax(z), spec_bounds)
        return log_likelihood(params, counts)

    resamples = 0
    if initial is not None:
        theta = initial.thetas.ravel().copy()
        z = np.log(np.maximum(initial.s0, 1e-12))
        current = loglik(theta, z)
    else:
        # start at the best of several prior draws: still a prior-supported
        # initialization, but it keeps the chain (and the downstream local
        # optimizer) out of regions where every density sits on the log
        # floor and gradients vanish
        theta = z = current = None
        attempts = 0
        while resamples < _INIT_CANDIDATES and attempts < 100:
            attempts += 1
            theta_try = rng.uniform(box[:, 0], box[:, 1])
            # nudge off the boundary so strict-interior validation holds
            theta_try = np.clip(theta_try, box[:, 0] + 1e-12 * widths, box[:, 1] - 1e-12 * widths)
            z_try = np.log(rng.dirichlet(np.ones(N_STATES)))
            try:
                ll_try = loglik(theta_try, z_try)
            except IntegrationError:
                continue
            resamples += 1
            if current is None or ll_try > current:
                theta, z, current = theta_try, z_try, ll_try
        if current is None:
            raise CalibrationError("no valid M-H starting point after 100 resamples")

    keep = config.iterations - config.burn_in
    theta_sum = np.zeros(n_theta)
    s0_sum = np.zeros(N_STATES)
    accepted = 0
    for it in range(config.iterations):
        prop = np.concatenate([theta, z]) + sd * rng.standard_normal(n_theta + N_STATES)
        theta_prop, z_prop = prop[:n_theta], prop[n_theta:]
        u = rng.uniform()
        if np.all(theta_prop > box[:, 0]) and np.all(theta_prop < box[:, 1]):
            try:
                cand = loglik(theta_prop, z_prop)
            except IntegrationError:
                cand = -math.inf
            if min(1.0, math.exp(min(cand - current, 0.0))) > u:
                theta, z, current = theta_prop, z_prop, cand
                accepted += 1
        if it >= config.burn_in:
            theta_sum += theta
            s0_sum += _softmax(z)

    s0_mean = s0_sum / keep
    gamma_mh = ChainParams(
        family, (theta_sum / keep).reshape(len(ARCS), p), s0_mean / s0_mean.sum(), spec_bounds
    )
    diagnostics = {
        "acceptance_rate": accepted / config.iterations,
        "initial_resamples": resamples,
        "loglik_last": current,
        "post_burn_in_samples": keep,
    }
    return gamma_mh, diagnostics


def slsqp_minimize(objective, x0, bounds, config: SqpConfig, equality=None):
    """Boxed SLSQP with forward finite-difference gradients."""
    constraints = [{"type": "eq", "fun": equality}] if equality is not None else []
    with warnings.catch_warnings():
        # the optimizer clips its own out-of-box probes; nothing actionable
        warnings.filterwarnings("ignore", message="Values in x were outside bounds")
        return minimize(
            objective,
            np.asarray(x0, dtype=float),
            method="SLSQP",
            bounds=bounds,
            constraints=constraints,
            options={"maxiter": config.max_iterations, "ftol": config.ftol, "eps": config.eps},
        )


def sqp_refine(
    start: ChainParams,
    counts: CountTable,
    config: SqpConfig = SqpConfig(),
):
    """Maximize the likelihood from ``start`` under boxes and the simplex.

    Returns the better of the optimizer's final iterate and the start, so
    refinement never reports a worse objective than it was given.
    """
    family = start.family
    p = family.n_params
    box = _theta_bounds(family, start.bounds)
    widths = box[:, 1] - box[:, 0]
    x0 = np.concatenate([start.thetas.ravel(), start.s0])
    # project an infeasible start into the box / onto the simplex
    x0[: box.shape[0]] = np.clip(x0[: box.shape[0]], box[:, 0], box[:, 1])
    x0[box.shape[0] :] = np.clip(x0[box.shape[0] :], 0.0, 1.0)
    x0[box.shape[0] :] /= x0[box.shape[0] :].sum()

    def clean(vec) -> ChainParams:
        theta = np.clip(
            vec[: box.shape[0]], box[:, 0] + 1e-12 * widths, box[:, 1] - 1e-12 * widths
        )
        return _params_from_vector(family, np.concatenate([theta, vec[box.shape[0] :]]), start.bounds)

    def objective(vec):
        try:
            return -log_likelihood(clean(vec), counts)
        except IntegrationError:
            return math.inf

    bounds_list = [tuple(b) for b in box] + [(0.0, 1.0)] * N_STATES
    res = slsqp_minimize(
        objective, x0, bounds_list, config, equality=lambda v: v[box.shape[0] :].sum() - 1.0
    )
    candidate = clean(res.x)
    ll_start = log_likelihood(clean(x0), counts)
    ll_candidate = -objective(res.x)
    if ll_candidate >= ll_start:
        best, ll_best, improved = candidate, ll_candidate, True
    else:
        best, ll_best, improved = clean(x0), ll_start, False
    diagnostics = {
        "iterations": int(res.nit),
        "converged": bool(res.success) and improved,
        "status": int(res.status),
        "message": str(res.message),
        "loglik": ll_best,
    }
    return best, diagnostics


@dataclass
class FitReport:
    """Calibration result with goodness-of-fit scores for both splits."""

    family: HazardFamily
    model_type: str  # IHCTMC, HCTMC or HDTMC
    gamma_mh: ChainParams
    gamma_star: ChainParams
    loglik_train: float
    metrics_train: metrics.MetricSet
    loglik_test: float | None = None
    metrics_test: metrics.MetricSet | None = None
    diagnostics: dict = field(default_factory=dict)
    seed: int = 0
    config: dict = field(default_factory=dict)

    def to_json(self) -> str:
        payload = {
            "family": self.family.value,
            "model_type": self.model_type,
            "gamma_mh": self.gamma_mh.to_dict(),
            "gamma_star": self.gamma_star.to_dict(),
            "loglik_train": self.loglik_train,
            "loglik_test": self.loglik_test,
            "metrics_train": self.metrics_train.to_dict(),
            "metrics_test": self.metrics_test.to_dict() if self.metrics_test else None,
            "diagnostics": self.diagnostics,
            "seed": self.seed,
            "config": self.config,
        }
        return json.dumps(payload, indent=2)


def fit(
    dataset,
    family: HazardFamily,
    mcmc_config: McmcConfig = McmcConfig(),
    sqp_config: SqpConfig = SqpConfig(),
    bounds=None,
    failure_mode: str = "all",
) -> FitReport:
    """Full calibration pipeline on one (training) dataset.

    Builds the count table, samples with M-H, refines with SLSQP and
    scores AIC/BIC on the training split.  RMSE and test-split scores
    require the non-parametric baseline and are filled in by the caller
    (see ``pipeline.score_fit``); they are NaN here.
    """
    counts = build_counts(dataset.age_states(), failure_mode=failure_mode)
    gamma_mh, mh_diag = mh_sample(counts, family, bounds=bounds, config=mcmc_config)
    gamma_star, sqp_diag = sqp_refine(gamma_mh, counts, config=sqp_config)
    ll = log_likelihood(gamma_star, counts)
    train = metrics.MetricSet(
        rmse=math.nan,
        aic=metrics.aic(ll, gamma_star.n_params),
        bic=metrics.bic(ll, gamma_star.n_params, max(counts.n, 1)),
        n_obs=counts.n,
        n_params=gamma_star.n_params,
    )
    model_type = "HCTMC" if family is HazardFamily.EXPONENTIAL else "IHCTMC"
    return FitReport(
        family=family,
        model_type=model_type,
        gamma_mh=gamma_mh,
        gamma_star=gamma_star,
        loglik_train=ll,
        metrics_train=train,
        diagnostics={"mh": mh_diag, "sqp": sqp_diag},
        seed=mcmc_config.seed,
        config={
            "mcmc": {
                "iterations": mcmc_config.iterations,
                "burn_in": mcmc_config.burn_in,
                "step_fraction": mcmc_config.step_fraction
                if np.ndim(mcmc_config.step_fraction) == 0
                else list(mcmc_config.step_fraction),
            },
            "sqp": {
                "eps": sqp_config.eps,
                "ftol": sqp_config.ftol,
                "max_iterations": sqp_config.max_iterations,
            },
            "failure_mode": failure_mode,
        },
    )
