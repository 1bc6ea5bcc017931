"""Inspection-record ingestion, cohort construction, and a synthetic
cohort simulator used as a verification oracle.

The normalized input CSV schema is::

    pipe_id,material,content,construction_year,inspection_date,damage_code,severity

with severity one of ``1..5``, ``F``, or empty (no damage observed).
A cohort reduces this to cross-sectional ``(pipe_id, age, state)``
observations: one state per pipe inspection, taking the worst severity
recorded for the cohort's damage code.
"""

from __future__ import annotations

import csv
import datetime as dt
import hashlib
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.optimize import minimize_scalar

from . import hazards
from .chain import ARCS, FAILURE, N_STATES, STATE_LABELS, ChainParams
from .errors import CohortEmptyError, DataFormatError, SimulationError
from .hazards import T_MIN, HazardFamily

CSV_COLUMNS = (
    "pipe_id",
    "material",
    "content",
    "construction_year",
    "inspection_date",
    "damage_code",
    "severity",
)

_SEVERITY_CODES = {"1": 1, "2": 2, "3": 3, "4": 4, "5": 5, "F": 6}


@dataclass(frozen=True)
class InspectionRecord:
    pipe_id: str
    material: str
    content: str
    construction_year: int
    inspection_date: dt.date
    damage_code: str
    severity: int | None  # 1..6 (6 = F); None when no damage was observed

    def __post_init__(self):
        if self.inspection_date.year < self.construction_year:
            raise DataFormatError(
                f"pipe {self.pipe_id}: inspected {self.inspection_date.year}, "
                f"built {self.construction_year}"
            )
        if self.severity is not None and not 1 <= self.severity <= N_STATES:
            raise DataFormatError(f"severity {self.severity} outside 1..{N_STATES}")


@dataclass(frozen=True)
class CohortSpec:
    """Filter defining one cohort: pipe material, content, damage code."""

    material: str
    content: str
    damage_code: str

    def __post_init__(self):
        for name in ("material", "content", "damage_code"):
            if not getattr(self, name):
                raise DataFormatError(f"cohort spec field {name} must be non-empty")


class Observation(NamedTuple):
    pipe_id: str
    age: float
    state: int


@dataclass
class CohortDataset:
    observations: list[Observation]
    provenance: dict = field(default_factory=dict)

    def pipe_ids(self) -> list[str]:
        return sorted({o.pipe_id for o in self.observations})

    def subset(self, pipe_ids) -> "CohortDataset":
        keep = set(pipe_ids)
        return CohortDataset(
            [o for o in self.observations if o.pipe_id in keep],
            dict(self.provenance, subset=len(keep)),
        )

    def age_states(self) -> list[tuple[float, int]]:
        return [(o.age, o.state) for o in self.observations]


@dataclass
class LoadResult:
    records: list[InspectionRecord]
    rejected: list[tuple[int, str]]  # (1-based data row number, reason)

    @property
    def n_accepted(self) -> int:
        return len(self.records)

    @property
    def n_rejected(self) -> int:
        return len(self.rejected)


def _parse_severity(cell: str) -> int | None:
    cell = cell.strip()
    if cell == "":
        return None
    if cell not in _SEVERITY_CODES:
        raise DataFormatError(f"severity {cell!r} not one of 1..5, F, or empty")
    return _SEVERITY_CODES[cell]


def load_inspections(path) -> LoadResult:
    """Parse the inspection CSV, rejecting malformed rows individually.

    Raises only for structural problems (missing file or columns); bad
    rows are reported with their row number in the result instead.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DataFormatError(f"{path}: empty file, expected header {','.join(CSV_COLUMNS)}")
        missing = [c for c in CSV_COLUMNS if c not in reader.fieldnames]
        if missing:
            raise DataFormatError(f"{path}: missing required column(s) {', '.join(missing)}")
        records: list[InspectionRecord] = []
        rejected: list[tuple[int, str]] = []
        for row_no, row in enumerate(reader, start=1):
            try:
                records.append(
                    InspectionRecord(
                        pipe_id=row["pipe_id"].strip(),
                        material=row["material"].strip(),
                        content=row["content"].strip(),
                        construction_year=int(row["construction_year"]),
                        inspection_date=dt.date.fromisoformat(row["inspection_date"].strip()),
                        damage_code=row["damage_code"].strip(),
                        severity=_parse_severity(row["severity"] or ""),
                    )
                )
            except (DataFormatError, ValueError, KeyError, TypeError) as exc:
                rejected.append((row_no, str(exc)))
    return LoadResult(records, rejected)


def write_inspections(records, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for r in records:
            severity = "" if r.severity is None else STATE_LABELS[r.severity - 1]
            writer.writerow(
                [
                    r.pipe_id,
                    r.material,
                    r.content,
                    r.construction_year,
                    r.inspection_date.isoformat(),
                    r.damage_code,
                    severity,
                ]
            )


def build_cohort(records, spec: CohortSpec) -> CohortDataset:
    """Reduce records to one observation per (pipe, inspection).

    Records are filtered by material and content; the state of an
    inspection is the worst severity among its rows carrying the cohort's
    damage code, or 1 when no such damage was recorded.  Age is the whole
    number of years between construction and inspection.
    """
    grouped: dict[tuple[str, dt.date], tuple[int, int]] = {}
    for rec in records:
        if rec.material != spec.material or rec.content != spec.content:
            continue
        key = (rec.pipe_id, rec.inspection_date)
        age = rec.inspection_date.year - rec.construction_year
        state = grouped.get(key, (age, 1))[1]
        if rec.damage_code == spec.damage_code and rec.severity is not None:
            state = max(state, rec.severity)
        grouped[key] = (age, state)
    if not grouped:
        raise CohortEmptyError(f"no inspections match cohort {spec}")
    observations = sorted(
        Observation(pipe_id, float(age), state) for (pipe_id, _), (age, state) in grouped.items()
    )
    return CohortDataset(observations, {"cohort": spec.__dict__.copy()})


def write_cohort_csv(dataset: CohortDataset, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["pipe_id", "age", "state"])
        for o in dataset.observations:
            writer.writerow([o.pipe_id, f"{o.age:.6g}", STATE_LABELS[o.state - 1]])


def read_cohort_csv(path) -> CohortDataset:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"pipe_id", "age", "state"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise DataFormatError(f"{path}: expected header pipe_id,age,state")
        observations = []
        for row_no, row in enumerate(reader, start=1):
            state_cell = row["state"].strip()
            if state_cell not in _SEVERITY_CODES:
                raise DataFormatError(f"{path} row {row_no}: bad state {state_cell!r}")
            age = float(row["age"])
            if age < 0:
                raise DataFormatError(f"{path} row {row_no}: negative age")
            observations.append(Observation(row["pipe_id"].strip(), age, _SEVERITY_CODES[state_cell]))
    return CohortDataset(observations, {"source": str(path)})


def dataset_digest(dataset: CohortDataset) -> str:
    h = hashlib.sha256()
    for o in dataset.observations:
        h.update(f"{o.pipe_id},{o.age},{o.state};".encode())
    return h.hexdigest()[:16]


# ---------------------------------------------------------------------------
# synthetic cohorts


def _arc_rate_max(family: HazardFamily, theta, a: float, b: float) -> float:
    """Upper bound for one arc's hazard on [a, b] (thinning envelope)."""
    a = max(a, T_MIN)
    lam_a = hazards._rate(family, theta, a)
    lam_b = hazards._rate(family, theta, b)
    peak = max(lam_a, lam_b)
    if family is HazardFamily.LOG_LOGISTIC:
        alpha, beta = theta
        if beta > 1.0:
            t_star = alpha * (beta - 1.0) ** (1.0 / beta)
            if a < t_star < b:
                peak = max(peak, hazards._rate(family, theta, t_star))
    elif family is HazardFamily.LOG_NORMAL:
        # unimodal but without a closed-form mode; bounded search + padding
        res = minimize_scalar(
            lambda t: -hazards._rate(family, theta, t), bounds=(a, b), method="bounded"
        )
        peak = max(peak, -res.fun) * 1.001
    return float(peak)


def _exit_arcs(state: int):
    return [idx for idx, (i, _j) in enumerate(ARCS) if i == state]


class TransitionSampler:
    """Thinning sampler with envelopes precomputed on a window grid.

    Per state, the constant envelope on each age window ``[kW, (k+1)W)``
    is the sum of the per-arc hazard maxima there, so it dominates the
    total exit hazard everywhere in the window.  Acceptance then uses the
    exact ratio of the total exit hazard to the envelope.  Precomputation
    makes repeated trajectory draws cheap.
    """

    def __init__(self, params: ChainParams, horizon: float, window: float = 5.0):
        if horizon <= 0.0 or window <= 0.0:
            raise SimulationError("horizon and window must be positive")
        self.params = params
        self.horizon = float(horizon)
        self.window = float(window)
        n_win = max(1, math.ceil(self.horizon / self.window))
        self._envelopes = np.zeros((FAILURE, n_win))
        self._rate_fns = []
        for state in range(FAILURE):
            arc_indices = _exit_arcs(state)
            self._rate_fns.append(hazards.arc_rate_function(params.family, params.thetas[arc_indices]))
            for w in range(n_win):
                a = w * self.window
                b = min((w + 1) * self.window, self.horizon)
                self._envelopes[state, w] = sum(
                    _arc_rate_max(params.family, tuple(params.thetas[idx]), a, b)
                    for idx in arc_indices
                )
        if not np.all(np.isfinite(self._envelopes)):
            raise SimulationError("unbounded exit hazard on the simulation horizon")

    def total_rate(self, state: int, t: float) -> float:
        return float(self._rate_fns[state](t).sum())

    def first_transition_time(self, state: int, t0: float, horizon: float, rng):
        """Next exit time from ``state`` after ``t0``, or None by ``horizon``."""
        if state == FAILURE:
            return None
        if horizon > self.horizon:
            raise SimulationError(f"horizon {horizon} exceeds the precomputed {self.horizon}")
        t = t0
        while t < horizon:
            w = int(t // self.window)
            w_end = min((w + 1) * self.window, horizon)
            lam_star = self._envelopes[state, w]
            if lam_star <= 0.0:
                t = w_end
                continue
            while True:
                t += rng.exponential(1.0 / lam_star)
                if t >= w_end:
                    t = w_end
                    break
                total = self.total_rate(state, t)
                if total > lam_star * (1.0 + 1e-9):
                    raise SimulationError(
                        f"thinning envelope {lam_star} violated at t={t} (rate {total})"
                    )
                if rng.uniform() * lam_star <= total:
                    return t
        return None

    def simulate_pipe(self, age: float, rng) -> int:
        """State (1..6) occupied at the inspection age for one pipe."""
        state = int(rng.choice(N_STATES, p=self.params.s0))
        t = 0.0
        while state != FAILURE:
            event = self.first_transition_time(state, t, age, rng)
            if event is None:
                break
            arc_indices = _exit_arcs(state)
            rates = self._rate_fns[state](event)
            pick = rng.uniform() * rates.sum()
            state = ARCS[arc_indices[0]][1] if pick <= rates[0] else ARCS[arc_indices[-1]][1]
            t = event
        return state + 1


def first_transition_time(params: ChainParams, state: int, t0: float, horizon: float, rng):
    """One-off convenience wrapper around :class:`TransitionSampler`."""
    return TransitionSampler(params, horizon).first_transition_time(state, t0, horizon, rng)


def simulate_cohort(
    params: ChainParams,
    n_pipes: int,
    age_range: tuple[float, float] = (1.0, 70.0),
    seed: int = 0,
) -> CohortDataset:
    """Cross-sectional synthetic cohort: each pipe inspected once.

    Inspection ages are uniform on ``age_range`` (recorded to the nearest
    whole year); trajectories follow the chain's competing transitions via
    thinning.  Reproducible for a fixed seed, with independent per-pipe
    substreams so results do not depend on evaluation order.
    """
    if n_pipes < 0:
        raise SimulationError("n_pipes must be >= 0")
    lo, hi = age_range
    if not 0.0 <= lo <= hi:
        raise SimulationError(f"bad age range {age_range}")
    sampler = TransitionSampler(params, horizon=max(hi, 1.0))
    streams = np.random.SeedSequence(seed).spawn(n_pipes)
    width = len(str(max(n_pipes - 1, 0)))
    observations = []
    for i, ss in enumerate(streams):
        rng = np.random.default_rng(ss)
        age = lo if lo == hi else rng.uniform(lo, hi)
        state = sampler.simulate_pipe(age, rng)
        observations.append(Observation(f"sim{i:0{width}d}", float(round(age)), state))
    return CohortDataset(
        observations,
        {"simulated": True, "seed": seed, "n_pipes": n_pipes, "age_range": list(age_range),
         "family": params.family.value},
    )
