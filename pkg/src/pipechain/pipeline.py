"""End-to-end orchestration: split, calibrate, score, export.

This is the layer the CLI drives.  It owns the run configuration, the
cross-validation loop over hazard families, and the file artifacts
(delimited tables, parameter JSON, and figures).
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import chain, inference, metrics, turnbull
from .chain import ChainParams, solve_master
from .data import CohortDataset, CohortSpec, build_cohort, dataset_digest, load_inspections, read_cohort_csv
from .errors import ConfigError, IntegrationError
from .hazards import HazardFamily
from .inference import FitReport, McmcConfig, SqpConfig


@dataclass
class RunConfig:
    input_path: str
    out_dir: str
    families: list[HazardFamily] = field(default_factory=lambda: [HazardFamily.GOMPERTZ])
    seed: int = 0
    ratio: float = 0.7
    horizon: int = 120
    cohort: CohortSpec | None = None
    mcmc: McmcConfig = field(default_factory=McmcConfig)
    sqp: SqpConfig = field(default_factory=SqpConfig)
    jobs: int = 1
    plots: bool = True
    failure_mode: str = "all"

    @classmethod
    def from_json(cls, path: str, overrides: dict | None = None) -> "RunConfig":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                raw = json.load(fh)
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(raw, overrides)

    @classmethod
    def from_dict(cls, raw: dict, overrides: dict | None = None) -> "RunConfig":
        merged = dict(raw)
        for key, value in (overrides or {}).items():
            if value is not None:
                merged[key] = value
        try:
            families = [HazardFamily.parse(f) for f in merged.get("families", ["gompertz"])]
            cohort = CohortSpec(**merged["cohort"]) if merged.get("cohort") else None
            mcmc = McmcConfig(**merged.get("mcmc", {}))
            sqp = SqpConfig(**merged.get("sqp", {}))
            return cls(
                input_path=merged["input"],
                out_dir=merged["out"],
                families=families,
                seed=int(merged.get("seed", 0)),
                ratio=float(merged.get("ratio", 0.7)),
                horizon=int(merged.get("horizon", 120)),
                cohort=cohort,
                mcmc=mcmc,
                sqp=sqp,
                jobs=int(merged.get("jobs", 1)),
                plots=bool(merged.get("plots", True)),
                failure_mode=merged.get("failure_mode", "all"),
            )
        except KeyError as exc:
            raise ConfigError(f"config is missing required key {exc}") from exc

    def __post_init__(self):
        if not self.families:
            raise ConfigError("at least one hazard family must be selected")
        if not 0.0 < self.ratio < 1.0:
            raise ConfigError(f"split ratio must be in (0, 1), got {self.ratio}")
        if self.horizon < 1:
            raise ConfigError("curve horizon must be at least 1 year")


def load_dataset(path: str, cohort: CohortSpec | None) -> CohortDataset:
    """Read either the inspection schema or a ``pipe_id,age,state`` cohort."""
    if not os.path.exists(path):
        raise ConfigError(f"input file not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
    if header.startswith("pipe_id,age,state"):
        return read_cohort_csv(path)
    result = load_inspections(path)
    if cohort is None:
        raise ConfigError("inspection-schema input needs a cohort spec (material/content/damage_code)")
    dataset = build_cohort(result.records, cohort)
    dataset.provenance["source"] = str(path)
    dataset.provenance["rejected_rows"] = result.n_rejected
    return dataset


def integer_ages(dataset: CohortDataset) -> list[int]:
    return sorted({int(round(o.age)) for o in dataset.observations})


def evaluation_grid(dataset: CohortDataset, curves: dict[int, turnbull.TurnbullCurve]) -> np.ndarray:
    """Distinct integer ages of the split where the baseline is evaluable."""
    return turnbull.evaluable_ages(curves, np.asarray(integer_ages(dataset), dtype=float))


def _rmse_against_baseline(params: ChainParams, curves, grid: np.ndarray) -> float:
    if grid.size == 0:
        return math.nan
    solve_grid = grid if grid[0] == 0.0 else np.concatenate(([0.0], grid))
    model = solve_master(params, solve_grid)
    baseline = turnbull.state_probs_from_curves(curves, grid)
    return metrics.rmse(model, baseline, grid)


def score_fit(
    report: FitReport,
    train: CohortDataset,
    test: CohortDataset,
    train_curves: dict[int, turnbull.TurnbullCurve],
    test_curves: dict[int, turnbull.TurnbullCurve],
    failure_mode: str = "all",
) -> FitReport:
    """Fill RMSE and test-split metrics into a freshly fitted report."""
    gamma = report.gamma_star
    counts_test = inference.build_counts(test.age_states(), failure_mode=failure_mode)
    ll_test = inference.log_likelihood(gamma, counts_test)
    rmse_train = _rmse_against_baseline(gamma, train_curves, evaluation_grid(train, train_curves))
    rmse_test = _rmse_against_baseline(gamma, test_curves, evaluation_grid(test, test_curves))
    report.metrics_train = metrics.MetricSet(
        rmse=rmse_train,
        aic=report.metrics_train.aic,
        bic=report.metrics_train.bic,
        n_obs=report.metrics_train.n_obs,
        n_params=report.metrics_train.n_params,
    )
    report.loglik_test = ll_test
    report.metrics_test = metrics.MetricSet(
        rmse=rmse_test,
        aic=metrics.aic(ll_test, gamma.n_params),
        bic=metrics.bic(ll_test, gamma.n_params, max(counts_test.n, 1)),
        n_obs=counts_test.n,
        n_params=gamma.n_params,
    )
    return report


def hdtmc_report(exponential_report: FitReport, check_horizon: int = 70) -> FitReport:
    """Discrete-time twin of a fitted Exponential chain.

    The yearly step matrix exp(Q) reproduces the continuous solution at
    integer ages exactly (in exact arithmetic), so the discrete chain
    shares the continuous chain's likelihood and scores.  The mapping is
    verified numerically before the report is issued.
    """
    if exponential_report.family is not HazardFamily.EXPONENTIAL:
        raise ConfigError("the discrete-time model derives from an Exponential fit")
    gamma = exponential_report.gamma_star
    Q = chain.build_generator(gamma, 0.0)
    P = chain.hdtmc_step_matrix(Q, 1.0)
    ages = np.arange(0.0, check_horizon + 1.0)
    continuous = solve_master(gamma, ages)
    for n, age in enumerate(ages):
        discrete = chain.hdtmc_evolve(gamma.s0, P, n)
        if np.abs(discrete - continuous.at(age)).max() > 1e-6:
            raise IntegrationError(f"discrete/continuous mapping diverged at age {age}")
    return FitReport(
        family=exponential_report.family,
        model_type="HDTMC",
        gamma_mh=exponential_report.gamma_mh,
        gamma_star=gamma,
        loglik_train=exponential_report.loglik_train,
        metrics_train=exponential_report.metrics_train,
        loglik_test=exponential_report.loglik_test,
        metrics_test=exponential_report.metrics_test,
        diagnostics={"derived_from": "HCTMC", "step_years": 1.0},
        seed=exponential_report.seed,
        config=exponential_report.config,
    )


def _metrics_row(report: FitReport) -> dict:
    return {
        "type": report.model_type,
        "family": report.family.value if report.model_type != "HDTMC" else "-",
        "n_params": report.gamma_star.n_params,
        "rmse_train": report.metrics_train.rmse,
        "aic_train": report.metrics_train.aic,
        "bic_train": report.metrics_train.bic,
        "rmse_test": report.metrics_test.rmse if report.metrics_test else math.nan,
        "aic_test": report.metrics_test.aic if report.metrics_test else math.nan,
        "bic_test": report.metrics_test.bic if report.metrics_test else math.nan,
    }


def _fit_one(args):
    family, train, mcmc, sqp, failure_mode = args
    return inference.fit(train, family, mcmc_config=mcmc, sqp_config=sqp, failure_mode=failure_mode)


def run_fit(config: RunConfig) -> list[FitReport]:
    """The ``fit`` command: calibrate every requested family and export."""
    os.makedirs(config.out_dir, exist_ok=True)
    dataset = load_dataset(config.input_path, config.cohort)
    train_ids, test_ids = metrics.split(dataset.pipe_ids(), config.ratio, config.seed)
    train, test = dataset.subset(train_ids), dataset.subset(test_ids)

    train_curves = turnbull.fit_thresholds(train.age_states())
    test_curves = turnbull.fit_thresholds(test.age_states())
    turnbull.write_turnbull_csv(train_curves, integer_ages(train), os.path.join(config.out_dir, "turnbull_train.csv"))
    turnbull.write_turnbull_csv(test_curves, integer_ages(test), os.path.join(config.out_dir, "turnbull_test.csv"))

    mcmc_seeded = [
        McmcConfig(
            iterations=config.mcmc.iterations,
            burn_in=config.mcmc.burn_in,
            step_fraction=config.mcmc.step_fraction,
            seed=config.seed + i,
        )
        for i in range(len(config.families))
    ]
    jobs = [(f, train, m, config.sqp, config.failure_mode) for f, m in zip(config.families, mcmc_seeded)]
    if config.jobs > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            reports = list(pool.map(_fit_one, jobs))
    else:
        reports = [_fit_one(j) for j in jobs]

    completed: list[FitReport] = []
    for report in reports:
        completed.append(score_fit(report, train, test, train_curves, test_curves, config.failure_mode))
        if report.family is HazardFamily.EXPONENTIAL:
            completed.append(hdtmc_report(report))

    curve_grid = np.arange(0.0, config.horizon + 1.0)
    state_curves = {}
    for report in completed:
        if report.model_type == "HDTMC":
            continue
        curve = solve_master(report.gamma_star, curve_grid)
        state_curves[report.family.value] = curve
        chain.write_curve_csv(curve, os.path.join(config.out_dir, f"curves_{report.family.value}.csv"))
        with open(os.path.join(config.out_dir, f"params_{report.family.value}.json"), "w", encoding="utf-8") as fh:
            fh.write(report.to_json())

    metrics.write_metrics_csv([_metrics_row(r) for r in completed], os.path.join(config.out_dir, "metrics.csv"))

    last_train_age = max(integer_ages(train)) if train.observations else None
    metadata = {
        "seed": config.seed,
        "ratio": config.ratio,
        "horizon": config.horizon,
        "families": [f.value for f in config.families],
        "n_pipes": len(dataset.pipe_ids()),
        "n_train_pipes": len(train_ids),
        "n_test_pipes": len(test_ids),
        "last_training_inspection_age": last_train_age,
        "input_digest": dataset_digest(dataset),
        "provenance": dataset.provenance,
        "bic_convention": "test scores use the test log-likelihood with the test observation count",
    }
    with open(os.path.join(config.out_dir, "run_metadata.json"), "w", encoding="utf-8") as fh:
        json.dump(metadata, fh, indent=2)

    if config.plots:
        from . import plots

        baseline_grid = evaluation_grid(train, train_curves)
        baseline = (
            turnbull.state_probs_from_curves(train_curves, baseline_grid)
            if baseline_grid.size
            else None
        )
        plots.state_probability_figure(
            state_curves,
            baseline,
            os.path.join(config.out_dir, "fig_state_probabilities.png"),
            train_cutoff=last_train_age,
        )
    return completed
