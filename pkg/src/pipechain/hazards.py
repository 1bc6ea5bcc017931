"""Hazard-rate families for transition intensities.

Five parametric families drive the transition rates of the degradation
chain: Exponential, Gompertz, Weibull, Log-Logistic and Log-Normal.  The
first four have closed-form hazards;

* Exponential   ``lambda(t) = alpha``
* Gompertz      ``lambda(t) = alpha * beta * exp(beta * t)``
* Weibull       ``lambda(t) = (beta / alpha) * (t / alpha) ** (beta - 1)``
* Log-Logistic  ``lambda(t) = (beta/alpha) * (t/alpha)**(beta-1) / (1 + (t/alpha)**beta)``

The Log-Normal hazard has no closed form and is computed as the ratio of
density to survival, evaluated in log space so the right tail does not
degenerate to 0/0.

Ages are in years and rates in 1/year throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.integrate import quad
from scipy.special import log_ndtr

from .errors import ParameterDomainError

# Hazard evaluation clamps the age at this floor: Weibull and Log-Logistic
# hazards diverge at t=0 for shape < 1, and assets are never inspected at
# exactly age zero.
T_MIN = 1e-6

# Evaluated rates are capped here.  A transition faster than ~30 seconds is
# indistinguishable from instantaneous in yearly inspection data, and the
# cap keeps the master equation integrable at the prior box corners.
RATE_CAP = 1e6

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


class HazardFamily(Enum):
    """Density family used to parameterize a transition hazard."""

    EXPONENTIAL = "exponential"
    GOMPERTZ = "gompertz"
    WEIBULL = "weibull"
    LOG_LOGISTIC = "log-logistic"
    LOG_NORMAL = "log-normal"

    @property
    def n_params(self) -> int:
        return 1 if self is HazardFamily.EXPONENTIAL else 2

    @property
    def param_names(self) -> tuple[str, ...]:
        if self is HazardFamily.EXPONENTIAL:
            return ("alpha",)
        if self is HazardFamily.LOG_NORMAL:
            return ("mu", "sigma")
        return ("alpha", "beta")

    @classmethod
    def parse(cls, name: str) -> "HazardFamily":
        key = name.strip().lower().replace("_", "-")
        aliases = {"exp": "exponential", "loglogistic": "log-logistic", "lognormal": "log-normal"}
        key = aliases.get(key, key)
        for fam in cls:
            if fam.value == key:
                return fam
        raise ParameterDomainError(f"unknown hazard family: {name!r}")


#: Default prior bounds per parameter, wide enough to cover plausible
#: sewer-pipe lifetimes (decades).  Overridable per fit.
DEFAULT_BOUNDS: dict[HazardFamily, tuple[tuple[float, float], ...]] = {
    HazardFamily.EXPONENTIAL: ((1e-5, 2.0),),
    HazardFamily.GOMPERTZ: ((1e-6, 1.0), (1e-4, 0.5)),
    HazardFamily.WEIBULL: ((1.0, 500.0), (0.2, 10.0)),
    HazardFamily.LOG_LOGISTIC: ((1.0, 500.0), (0.2, 10.0)),
    HazardFamily.LOG_NORMAL: ((0.0, 7.0), (0.05, 3.0)),
}

#: Parameters that may take either sign (everything else must be > 0).
_SIGN_FREE = {(HazardFamily.LOG_NORMAL, 0)}  # Log-Normal mu


def default_bounds(family: HazardFamily) -> tuple[tuple[float, float], ...]:
    return DEFAULT_BOUNDS[family]


@dataclass(frozen=True)
class HazardSpec:
    """A hazard family together with its parameters and box bounds.

    Parameters must lie strictly inside their bounds, and bounds must be
    positive wherever the family requires a positive parameter.
    """

    family: HazardFamily
    theta: tuple[float, ...]
    bounds: tuple[tuple[float, float], ...] = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.bounds is None:
            object.__setattr__(self, "bounds", DEFAULT_BOUNDS[self.family])
        theta = tuple(float(x) for x in self.theta)
        bounds = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "bounds", bounds)
        self._validate()

    def _validate(self):
        fam = self.family
        if len(self.theta) != fam.n_params or len(self.bounds) != fam.n_params:
            raise ParameterDomainError(
                f"{fam.value} takes {fam.n_params} parameter(s), "
                f"got theta={self.theta}, bounds={self.bounds}"
            )
        for i, (value, (lo, hi)) in enumerate(zip(self.theta, self.bounds)):
            name = fam.param_names[i]
            if not lo < hi:
                raise ParameterDomainError(f"{fam.value} {name}: empty bounds [{lo}, {hi}]")
            if (fam, i) not in _SIGN_FREE and lo <= 0.0:
                raise ParameterDomainError(
                    f"{fam.value} {name} must be positive; lower bound {lo} is not"
                )
            if not (lo < value < hi) or not math.isfinite(value):
                raise ParameterDomainError(
                    f"{fam.value} {name}={value} outside its bounds ({lo}, {hi})"
                )


def _lognormal_log_hazard(t, mu, sigma):
    """log(f/S) for the Log-Normal, stable deep into the right tail."""
    z = (np.log(t) - mu) / sigma
    log_pdf = -0.5 * z * z - _LOG_SQRT_2PI - np.log(t * sigma)
    return log_pdf - log_ndtr(-z)


def _rate(family: HazardFamily, theta, t):
    """Hazard at clamped age ``t`` (scalar or array), no validation."""
    t = np.maximum(t, T_MIN)
    if family is HazardFamily.EXPONENTIAL:
        out = np.broadcast_to(theta[0], np.shape(t)).copy() if np.ndim(t) else theta[0]
        return np.minimum(out, RATE_CAP)
    a, b = theta
    if family is HazardFamily.GOMPERTZ:
        out = a * b * np.exp(np.minimum(b * t, 700.0))
    elif family is HazardFamily.WEIBULL:
        out = (b / a) * (t / a) ** (b - 1.0)
    elif family is HazardFamily.LOG_LOGISTIC:
        out = (b / a) * (t / a) ** (b - 1.0) / (1.0 + (t / a) ** b)
    else:  # Log-Normal: theta = (mu, sigma)
        out = np.exp(np.minimum(_lognormal_log_hazard(t, a, b), 700.0))
    return np.minimum(out, RATE_CAP)


def hazard_rate(spec: HazardSpec, t):
    """Evaluate the hazard rate at age ``t`` (years, scalar or array).

    Ages below ``T_MIN`` are clamped to ``T_MIN`` and rates above
    ``RATE_CAP`` are capped.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t < 0.0):
        raise ParameterDomainError("hazard_rate requires t >= 0")
    out = _rate(spec.family, spec.theta, t)
    return float(out) if np.ndim(out) == 0 and t.ndim == 0 else np.asarray(out, dtype=float)


def cumulative_hazard(spec: HazardSpec, t0: float, t1: float) -> float:
    """Integrated hazard over ``[t0, t1]`` via the family's closed form.

    The Log-Normal has no closed form and falls back to adaptive
    quadrature of the hazard ratio.
    """
    t0, t1 = float(t0), float(t1)
    if not 0.0 <= t0 <= t1:
        raise ParameterDomainError(f"require 0 <= t0 <= t1, got [{t0}, {t1}]")
    if t0 == t1:
        return 0.0
    fam, theta = spec.family, spec.theta
    if fam is HazardFamily.EXPONENTIAL:
        return theta[0] * (t1 - t0)
    a, b = theta
    if fam is HazardFamily.GOMPERTZ:
        return a * (math.exp(b * t1) - math.exp(b * t0))
    if fam is HazardFamily.WEIBULL:
        return (t1 / a) ** b - (t0 / a) ** b
    if fam is HazardFamily.LOG_LOGISTIC:
        return math.log1p((t1 / a) ** b) - math.log1p((t0 / a) ** b)
    value, _ = quad(lambda u: _rate(fam, theta, u), t0, t1, epsabs=1e-13, epsrel=1e-11, limit=200)
    return value


def survival(spec: HazardSpec, t: float) -> float:
    """Single-transition survival ``exp(-H(0, t))``."""
    return math.exp(-cumulative_hazard(spec, 0.0, t))


def arc_rate_function(family: HazardFamily, thetas: np.ndarray):
    """Build a fast evaluator for several same-family hazards at once.

    ``thetas`` has one row per arc.  Returns ``f(t) -> rates`` where ``t``
    is a scalar age and ``rates`` has one entry per row.  Used in the ODE
    right-hand side, so it avoids per-call validation.
    """
    thetas = np.asarray(thetas, dtype=float)
    if family is HazardFamily.EXPONENTIAL:
        rates = np.minimum(thetas[:, 0], RATE_CAP)
        return lambda t: rates
    a = thetas[:, 0].copy()
    b = thetas[:, 1].copy()
    if family is HazardFamily.GOMPERTZ:
        ab = a * b
        return lambda t: np.minimum(ab * np.exp(np.minimum(b * max(t, T_MIN), 700.0)), RATE_CAP)
    if family is HazardFamily.WEIBULL:
        b_over_a = b / a
        bm1 = b - 1.0
        return lambda t: np.minimum(b_over_a * (max(t, T_MIN) / a) ** bm1, RATE_CAP)
    if family is HazardFamily.LOG_LOGISTIC:
        b_over_a = b / a
        bm1 = b - 1.0

        def _ll(t):
            u = max(t, T_MIN) / a
            return np.minimum(b_over_a * u**bm1 / (1.0 + u**b), RATE_CAP)

        return _ll

    def _ln(t):
        return np.minimum(np.exp(np.minimum(_lognormal_log_hazard(max(t, T_MIN), a, b), 700.0)), RATE_CAP)

    return _ln


def arc_rate_table(family: HazardFamily, thetas: np.ndarray, ts: np.ndarray) -> np.ndarray:
    """Hazards for each arc (rows) at each age in ``ts`` (columns)."""
    thetas = np.asarray(thetas, dtype=float)
    tc = np.maximum(np.asarray(ts, dtype=float), T_MIN)[None, :]
    if family is HazardFamily.EXPONENTIAL:
        out = np.repeat(thetas[:, :1], tc.shape[1], axis=1)
    else:
        a = thetas[:, 0][:, None]
        b = thetas[:, 1][:, None]
        if family is HazardFamily.GOMPERTZ:
            out = a * b * np.exp(np.minimum(b * tc, 700.0))
        elif family is HazardFamily.WEIBULL:
            out = (b / a) * (tc / a) ** (b - 1.0)
        elif family is HazardFamily.LOG_LOGISTIC:
            out = (b / a) * (tc / a) ** (b - 1.0) / (1.0 + (tc / a) ** b)
        else:
            out = np.exp(np.minimum(_lognormal_log_hazard(tc, a, b), 700.0))
    return np.minimum(out, RATE_CAP)
