"""Six-state progression chain: generator, master equation, transition matrices.

States are the severity grades 1..5 plus the absorbing functional-failure
state F.  Nine arcs exist: the four forward steps 1->2, 2->3, 3->4, 4->5
and a jump k->F from every severity grade.  No repair arcs: probability
mass only ever moves toward worse states.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from . import hazards
from .errors import IntegrationError, ParameterDomainError
from .hazards import HazardFamily, HazardSpec

N_STATES = 6
FAILURE = 5  # row/column index of state F
STATE_LABELS = ("1", "2", "3", "4", "5", "F")

SEQUENTIAL_ARCS = ((0, 1), (1, 2), (2, 3), (3, 4))
FAILURE_ARCS = ((0, 5), (1, 5), (2, 5), (3, 5), (4, 5))
ARCS = SEQUENTIAL_ARCS + FAILURE_ARCS
ARC_LABELS = tuple(f"{STATE_LABELS[i]}->{STATE_LABELS[j]}" for i, j in ARCS)

# default integrator tolerances; tighter than every downstream metric
# tolerance so solver error never dominates a comparison
RTOL = 1e-8
ATOL = 1e-10

_ROW_SUM_TOL = 1e-6
_CLIP_TOL = 1e-8


@dataclass(frozen=True)
class ChainParams:
    """Full parameter set of one chain: per-arc hazards plus initial state.

    ``thetas`` holds one row per arc in ``ARCS`` order (sequential arcs
    first, then the failure arcs), all sharing ``family``.  ``s0`` is the
    initial distribution over the six states.  Parameter count is
    ``9 * params_per_family + 6``: 24 for the two-parameter families, 15
    for the Exponential.
    """

    family: HazardFamily
    thetas: np.ndarray
    s0: np.ndarray
    bounds: tuple[tuple[float, float], ...] = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.bounds is None:
            object.__setattr__(self, "bounds", hazards.default_bounds(self.family))
        thetas = np.array(self.thetas, dtype=float)
        s0 = np.array(self.s0, dtype=float)
        if thetas.shape != (len(ARCS), self.family.n_params):
            raise ParameterDomainError(
                f"thetas must have shape (9, {self.family.n_params}), got {thetas.shape}"
            )
        if s0.shape != (N_STATES,):
            raise ParameterDomainError(f"s0 must have length {N_STATES}, got {s0.shape}")
        if np.any(s0 < 0.0) or np.any(s0 > 1.0):
            raise ParameterDomainError(f"s0 components must lie in [0, 1]: {s0}")
        if abs(s0.sum() - 1.0) > 1e-12:
            raise ParameterDomainError(f"s0 must sum to 1 within 1e-12, sums to {s0.sum()!r}")
        thetas.setflags(write=False)
        s0.setflags(write=False)
        object.__setattr__(self, "thetas", thetas)
        object.__setattr__(self, "s0", s0)
        for row in thetas:  # bounds + positivity checks per arc
            HazardSpec(self.family, tuple(row), self.bounds)

    @property
    def n_params(self) -> int:
        return len(ARCS) * self.family.n_params + N_STATES

    def arc_spec(self, arc_index: int) -> HazardSpec:
        return HazardSpec(self.family, tuple(self.thetas[arc_index]), self.bounds)

    def to_dict(self) -> dict:
        return {
            "family": self.family.value,
            "arcs": {label: list(row) for label, row in zip(ARC_LABELS, self.thetas)},
            "s0": list(self.s0),
            "bounds": [list(b) for b in self.bounds],
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "ChainParams":
        family = HazardFamily.parse(payload["family"])
        thetas = np.array([payload["arcs"][label] for label in ARC_LABELS], dtype=float)
        bounds = tuple(tuple(b) for b in payload["bounds"]) if "bounds" in payload else None
        return cls(family, thetas, np.array(payload["s0"], dtype=float), bounds)


@dataclass
class StateProbabilityCurve:
    """State-occupancy probabilities on an age grid; rows sum to one."""

    grid: np.ndarray
    probs: np.ndarray  # shape (len(grid), 6)

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.probs = np.asarray(self.probs, dtype=float)
        if self.probs.shape != (self.grid.size, N_STATES):
            raise ParameterDomainError(
                f"probs shape {self.probs.shape} does not match grid of {self.grid.size}"
            )
        if np.any(np.diff(self.grid) <= 0.0):
            raise ParameterDomainError("grid ages must be strictly increasing")
        self.probs = _clean_rows(self.probs)

    def at(self, age: float) -> np.ndarray:
        """Probability row at one grid age (must be a grid point)."""
        idx = np.searchsorted(self.grid, age)
        if idx >= self.grid.size or not math.isclose(self.grid[idx], age, abs_tol=1e-9):
            raise ParameterDomainError(f"age {age} is not on the curve grid")
        return self.probs[idx]


@dataclass
class TransitionMatrixSeries:
    """Row-stochastic transition matrices P(t, tau) on a tau grid."""

    t: float
    tau_grid: np.ndarray
    matrices: np.ndarray  # shape (len(tau_grid), 6, 6)

    def __post_init__(self):
        self.tau_grid = np.asarray(self.tau_grid, dtype=float)
        self.matrices = np.asarray(self.matrices, dtype=float)

    def at(self, tau: float) -> np.ndarray:
        idx = np.searchsorted(self.tau_grid, tau)
        if idx >= self.tau_grid.size or not math.isclose(self.tau_grid[idx], tau, abs_tol=1e-9):
            raise ParameterDomainError(f"tau {tau} is not on the series grid")
        return self.matrices[idx]


def _clean_rows(probs: np.ndarray) -> np.ndarray:
    """Clip integrator round-off and renormalize; reject real violations."""
    worst = max(float((-probs).max(initial=0.0)), float((probs - 1.0).max(initial=0.0)))
    if worst > _CLIP_TOL:
        raise IntegrationError(f"probability deviates from [0, 1] by {worst:.3e}")
    clipped = np.clip(probs, 0.0, 1.0)
    sums = clipped.sum(axis=-1, keepdims=True)
    bad = np.abs(sums - 1.0) > _ROW_SUM_TOL
    if np.any(bad):
        raise IntegrationError(f"probability row sums off by up to {np.abs(sums - 1.0).max():.3e}")
    return clipped / sums


def build_generator(params: ChainParams, t: float) -> np.ndarray:
    """Time-dependent rate matrix Q(t): hazards off-diagonal, zero row sums.

    Row F is identically zero (absorbing state).
    """
    if t < 0.0:
        raise ParameterDomainError("generator requires t >= 0")
    rates = hazards.arc_rate_function(params.family, params.thetas)(float(t))
    Q = np.zeros((N_STATES, N_STATES))
    for (i, j), r in zip(ARCS, rates):
        Q[i, j] = r
    np.fill_diagonal(Q, -Q.sum(axis=1))
    return Q


def _master_rhs(params: ChainParams):
    rate_fn = hazards.arc_rate_function(params.family, params.thetas)

    def rhs(t, s):
        r = rate_fn(t)
        r12, r23, r34, r45 = r[0], r[1], r[2], r[3]
        f1, f2, f3, f4, f5 = r[4], r[5], r[6], r[7], r[8]
        s1, s2, s3, s4, s5 = s[0], s[1], s[2], s[3], s[4]
        return (
            -(r12 + f1) * s1,
            r12 * s1 - (r23 + f2) * s2,
            r23 * s2 - (r34 + f3) * s3,
            r34 * s3 - (r45 + f4) * s4,
            r45 * s4 - f5 * s5,
            f1 * s1 + f2 * s2 + f3 * s3 + f4 * s4 + f5 * s5,
        )

    return rhs


def solve_master(params: ChainParams, grid, rtol: float = RTOL, atol: float = ATOL) -> StateProbabilityCurve:
    """Integrate the master equation dS/dt = S Q(t) from S(0) = s0.

    Uses an adaptive stiffness-switching integrator (LSODA) and reports
    the state distribution at every grid age.  The grid must start at 0.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0 or grid[0] != 0.0:
        raise ParameterDomainError("solve_master grid must start at age 0")
    if grid.size == 1:
        return StateProbabilityCurve(grid, params.s0[None, :].copy())
    with warnings.catch_warnings():
        # failures surface as IntegrationError; the warning is redundant
        warnings.filterwarnings("ignore", message="lsoda:")
        sol = solve_ivp(
            _master_rhs(params),
            (0.0, float(grid[-1])),
            params.s0,
            method="LSODA",
            t_eval=grid,
            rtol=rtol,
            atol=atol,
        )
    if not sol.success:
        raise IntegrationError(f"master equation failed: {sol.message}", time=float(sol.t[-1]) if sol.t.size else 0.0)
    return StateProbabilityCurve(grid, sol.y.T)


def survival_curve(curve: StateProbabilityCurve, k: int) -> np.ndarray:
    """Cumulative occupancy of states 1..k on the curve grid.

    ``k`` is the 1-based severity rank, with 6 meaning F; the k=F curve is
    identically one.
    """
    if not 1 <= k <= N_STATES:
        raise ParameterDomainError(f"state rank must be 1..{N_STATES}, got {k}")
    if k == N_STATES:
        return np.ones(curve.grid.size)
    return curve.probs[:, :k].sum(axis=1)


def transition_matrix(
    params: ChainParams, t: float, tau_grid, rtol: float = RTOL, atol: float = ATOL
) -> TransitionMatrixSeries:
    """Solve dP(t, tau)/dtau = P Q(tau) with P(t, t) = I on a tau grid."""
    tau_grid = np.asarray(tau_grid, dtype=float)
    if tau_grid.size == 0 or not math.isclose(tau_grid[0], t, abs_tol=1e-12):
        raise ParameterDomainError("tau grid must start at the anchor time t")
    rate_fn = hazards.arc_rate_function(params.family, params.thetas)

    def rhs(tau, p):
        r = rate_fn(tau)
        Q = np.zeros((N_STATES, N_STATES))
        for (i, j), rij in zip(ARCS, r):
            Q[i, j] = rij
        np.fill_diagonal(Q, -Q.sum(axis=1))
        return (p.reshape(N_STATES, N_STATES) @ Q).ravel()

    if tau_grid.size == 1:
        mats = np.eye(N_STATES)[None, :, :]
        return TransitionMatrixSeries(float(t), tau_grid, mats)
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message="lsoda:")
        sol = solve_ivp(
            rhs,
            (float(t), float(tau_grid[-1])),
            np.eye(N_STATES).ravel(),
            method="LSODA",
            t_eval=tau_grid,
            rtol=rtol,
            atol=atol,
        )
    if not sol.success:
        raise IntegrationError(f"transition-matrix ODE failed: {sol.message}")
    mats = sol.y.T.reshape(-1, N_STATES, N_STATES)
    # progression-only topology: severity regression entries are exactly 0
    mats[:, np.tril_indices(N_STATES, k=-1)[0], np.tril_indices(N_STATES, k=-1)[1]] = 0.0
    mats = _clean_rows(mats)
    return TransitionMatrixSeries(float(t), tau_grid, mats)


def hdtmc_step_matrix(Q: np.ndarray, dt: float) -> np.ndarray:
    """One-step transition matrix exp(Q dt) of the discrete-time chain.

    ``Q`` must be a generator: non-negative off-diagonals and zero row
    sums.  The exponential of a generator is row stochastic.
    """
    Q = np.asarray(Q, dtype=float)
    if dt <= 0.0:
        raise ParameterDomainError("dt must be positive")
    if Q.shape[0] != Q.shape[1]:
        raise ParameterDomainError(f"Q must be square, got {Q.shape}")
    off = Q - np.diag(np.diag(Q))
    if off.min() < -1e-12:
        raise ParameterDomainError("generator off-diagonals must be non-negative")
    if np.abs(Q.sum(axis=1)).max() > 1e-9:
        raise ParameterDomainError("generator rows must sum to zero")
    return expm(Q * dt)


def hdtmc_evolve(s0: np.ndarray, P: np.ndarray, n: int) -> np.ndarray:
    """Distribution after n steps of the discrete chain: s0 P^n."""
    s0 = np.asarray(s0, dtype=float)
    if n < 0:
        raise ParameterDomainError("step count must be >= 0")
    if abs(s0.sum() - 1.0) > 1e-9:
        raise ParameterDomainError("s0 must sum to 1")
    return s0 @ np.linalg.matrix_power(np.asarray(P, dtype=float), n)


def write_curve_csv(curve: StateProbabilityCurve, path) -> None:
    """Export a curve as ``age,S1,S2,S3,S4,S5,SF`` (6 significant digits)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("age," + ",".join(f"S{label}" for label in STATE_LABELS) + "\n")
        for age, row in zip(curve.grid, curve.probs):
            fh.write(f"{age:.6g}," + ",".join(f"{p:.6g}" for p in row) + "\n")


def write_matrix_series_csv(series: TransitionMatrixSeries, path) -> None:
    """Export a matrix series as ``t,tau,i,j,p`` rows."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("t,tau,i,j,p\n")
        for tau, mat in zip(series.tau_grid, series.matrices):
            for i in range(N_STATES):
                for j in range(N_STATES):
                    fh.write(
                        f"{series.t:.6g},{tau:.6g},{STATE_LABELS[i]},{STATE_LABELS[j]},{mat[i, j]:.6g}\n"
                    )
