"""Command-line front end.

Subcommands: ``fit``, ``turnbull``, ``transition-matrix``, ``simulate``,
``split``.  Exit codes: 0 success, 1 numeric failure, 2 input/config
error.  Failures print a machine-readable JSON object on stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import chain, data, metrics, pipeline, turnbull
from .chain import ChainParams
from .errors import (
    CohortEmptyError,
    ConfigError,
    DataFormatError,
    ParameterDomainError,
    PipechainError,
)
from .hazards import HazardFamily
from .inference import McmcConfig, SqpConfig


def _cohort_spec(args) -> data.CohortSpec | None:
    if args.material or args.content or args.damage_code:
        if not (args.material and args.content and args.damage_code):
            raise ConfigError("cohort filters need --material, --content and --damage-code together")
        return data.CohortSpec(args.material, args.content, args.damage_code)
    return None


def _add_cohort_flags(p):
    p.add_argument("--material", help="cohort material filter (inspection-schema input)")
    p.add_argument("--content", help="cohort content filter")
    p.add_argument("--damage-code", help="cohort damage code filter, e.g. BAF")


def cmd_fit(args) -> int:
    overrides = {
        "input": args.input,
        "out": args.out,
        "seed": args.seed,
        "families": args.families.split(",") if args.families else None,
        "ratio": args.ratio,
        "horizon": args.horizon,
        "jobs": args.jobs,
    }
    raw = {}
    if args.config:
        config = pipeline.RunConfig.from_json(args.config, overrides)
    else:
        for key, value in overrides.items():
            if value is not None:
                raw[key] = value
        config = pipeline.RunConfig.from_dict(raw)
    spec = _cohort_spec(args)
    if spec is not None:
        config.cohort = spec
    if args.iterations or args.burn_in or args.step_fraction:
        config.mcmc = McmcConfig(
            iterations=args.iterations or config.mcmc.iterations,
            burn_in=args.burn_in if args.burn_in is not None else config.mcmc.burn_in,
            step_fraction=args.step_fraction or config.mcmc.step_fraction,
            seed=config.seed,
        )
    if args.no_plots:
        config.plots = False
    reports = pipeline.run_fit(config)
    for report in reports:
        print(f"{report.model_type:7s} {report.family.value:12s} ll={report.loglik_train:.3f}")
    print(f"artifacts written to {config.out_dir}")
    return 0


def cmd_turnbull(args) -> int:
    dataset = pipeline.load_dataset(args.input, _cohort_spec(args))
    os.makedirs(args.out, exist_ok=True)
    curves = turnbull.fit_thresholds(dataset.age_states())
    ages = pipeline.integer_ages(dataset)
    turnbull.write_turnbull_csv(curves, ages, os.path.join(args.out, "turnbull.csv"))
    grid = pipeline.evaluation_grid(dataset, curves)
    if grid.size:
        baseline = turnbull.state_probs_from_curves(curves, grid)
        chain.write_curve_csv(baseline, os.path.join(args.out, "turnbull_state_probs.csv"))
    if not args.no_plots:
        from . import plots

        survivals = {
            k: (
                [a for a in ages if c.evaluable(a)],
                [c.survival(a) for a in ages if c.evaluable(a)],
            )
            for k, c in curves.items()
        }
        plots.turnbull_figure(survivals, os.path.join(args.out, "fig_turnbull.png"))
    print(f"turnbull estimates written to {args.out}")
    return 0


def _load_params(path: str) -> ChainParams:
    if not os.path.exists(path):
        raise ConfigError(f"params file not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    gamma = payload.get("gamma_star", payload)  # accept FitReport or bare params
    return ChainParams.from_dict(gamma)


def cmd_transition_matrix(args) -> int:
    params = _load_params(args.params)
    if args.family and HazardFamily.parse(args.family) is not params.family:
        raise ConfigError(
            f"params file holds a {params.family.value} model, not {args.family}"
        )
    if args.tau_max <= args.t:
        raise ConfigError("--tau-max must exceed the anchor time --t")
    os.makedirs(args.out, exist_ok=True)
    tau_grid = np.arange(float(args.t), float(args.tau_max) + 1.0)
    series = chain.transition_matrix(params, float(args.t), tau_grid)
    chain.write_matrix_series_csv(series, os.path.join(args.out, "transition_matrix.csv"))
    if not args.no_plots:
        from . import plots

        plots.transition_matrix_figure(series, os.path.join(args.out, "fig_transition_matrix.png"))
    print(f"transition matrices written to {args.out}")
    return 0


def cmd_simulate(args) -> int:
    params = _load_params(args.params)
    lo, hi = (float(x) for x in args.age_range.split(","))
    os.makedirs(args.out, exist_ok=True)
    dataset = data.simulate_cohort(params, args.n_pipes, age_range=(lo, hi), seed=args.seed)
    data.write_cohort_csv(dataset, os.path.join(args.out, "cohort.csv"))
    with open(os.path.join(args.out, "cohort_meta.json"), "w", encoding="utf-8") as fh:
        json.dump(dataset.provenance, fh, indent=2)
    print(f"simulated {args.n_pipes} pipes into {args.out}")
    return 0


def cmd_split(args) -> int:
    dataset = pipeline.load_dataset(args.input, _cohort_spec(args))
    train, test = metrics.split(dataset.pipe_ids(), args.ratio, args.seed)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "split.csv")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("pipe_id,subset\n")
        for pid in train:
            fh.write(f"{pid},train\n")
        for pid in test:
            fh.write(f"{pid},test\n")
    print(f"{len(train)} train / {len(test)} test pipes written to {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pipechain", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="calibrate Markov chains and score them")
    p.add_argument("--config", help="run configuration JSON")
    p.add_argument("--input", help="inspection CSV or pipe_id,age,state cohort CSV")
    p.add_argument("--out", help="output directory")
    p.add_argument("--families", help="comma-separated hazard families")
    p.add_argument("--seed", type=int)
    p.add_argument("--ratio", type=float, help="training fraction (default 0.7)")
    p.add_argument("--horizon", type=int, help="curve export horizon in years (default 120)")
    p.add_argument("--iterations", type=int, help="M-H iterations")
    p.add_argument("--burn-in", type=int, help="M-H burn-in iterations")
    p.add_argument("--step-fraction", type=float, help="M-H proposal step fraction")
    p.add_argument("--jobs", type=int, help="parallel family fits")
    p.add_argument("--no-plots", action="store_true")
    _add_cohort_flags(p)
    p.set_defaults(handler=cmd_fit)

    p = sub.add_parser("turnbull", help="non-parametric baseline only")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--no-plots", action="store_true")
    _add_cohort_flags(p)
    p.set_defaults(handler=cmd_turnbull)

    p = sub.add_parser("transition-matrix", help="P(t, tau) series from fitted params")
    p.add_argument("--params", required=True, help="params_<family>.json from a fit run")
    p.add_argument("--family", help="expected family (checked against the params file)")
    p.add_argument("--t", type=float, default=0.0, help="anchor time (years)")
    p.add_argument("--tau-max", type=float, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--no-plots", action="store_true")
    p.set_defaults(handler=cmd_transition_matrix)

    p = sub.add_parser("simulate", help="synthetic cohort from fitted params")
    p.add_argument("--params", required=True)
    p.add_argument("--n-pipes", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--age-range", default="1,70", help="uniform inspection-age range lo,hi")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("split", help="deterministic train/test pipe split")
    p.add_argument("--input", required=True)
    p.add_argument("--ratio", type=float, default=0.7)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    _add_cohort_flags(p)
    p.set_defaults(handler=cmd_split)
    return parser


def _emit_error(exc: Exception) -> None:
    payload = {"error": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, (FileNotFoundError, OSError)) and getattr(exc, "filename", None):
        payload["path"] = str(exc.filename)
    sys.stderr.write(json.dumps(payload) + "\n")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except (ConfigError, DataFormatError, CohortEmptyError, ParameterDomainError, FileNotFoundError) as exc:
        _emit_error(exc)
        return 2
    except (PipechainError, ValueError) as exc:
        _emit_error(exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
