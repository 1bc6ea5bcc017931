import json

import numpy as np
import pytest

from pipechain import ChainParams, HazardFamily, simulate_cohort
from pipechain.cli import main
from pipechain.data import write_cohort_csv

from conftest import single_arc_params


@pytest.fixture(scope="module")
def cohort_csv(tmp_path_factory):
    root = tmp_path_factory.mktemp("data")
    truth = single_arc_params(HazardFamily.EXPONENTIAL, theta=(0.05,))
    cohort = simulate_cohort(truth, 300, seed=8)
    path = root / "cohort.csv"
    write_cohort_csv(cohort, path)
    return path


@pytest.fixture(scope="module")
def params_json(tmp_path_factory):
    root = tmp_path_factory.mktemp("params")
    params = single_arc_params(HazardFamily.EXPONENTIAL, theta=(0.1,))
    path = root / "params.json"
    path.write_text(json.dumps(params.to_dict()))
    return path


def fit_args(cohort_csv, out, extra=()):
    return [
        "fit",
        "--input", str(cohort_csv),
        "--out", str(out),
        "--families", "exponential",
        "--seed", "5",
        "--iterations", "60",
        "--burn-in", "30",
        "--no-plots",
        *extra,
    ]


class TestFitCommand:
    def test_exponential_emits_identical_hctmc_and_hdtmc_rows(self, cohort_csv, tmp_path, capsys):
        out = tmp_path / "run"
        assert main(fit_args(cohort_csv, out)) == 0
        lines = (out / "metrics.csv").read_text().splitlines()
        assert len(lines) == 3
        hctmc = lines[1].split(",")
        hdtmc = lines[2].split(",")
        assert hctmc[0] == "HCTMC" and hdtmc[0] == "HDTMC"
        assert hctmc[3:] == hdtmc[3:]  # all six scores identical
        for name in ("params_exponential.json", "curves_exponential.csv",
                     "turnbull_train.csv", "turnbull_test.csv", "run_metadata.json"):
            assert (out / name).exists()

    def test_reruns_are_byte_identical(self, cohort_csv, tmp_path):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        assert main(fit_args(cohort_csv, out_a)) == 0
        assert main(fit_args(cohort_csv, out_b)) == 0
        assert (out_a / "metrics.csv").read_bytes() == (out_b / "metrics.csv").read_bytes()
        assert (out_a / "params_exponential.json").read_bytes() == (
            out_b / "params_exponential.json"
        ).read_bytes()

    def test_missing_input_exits_2_with_error_json(self, tmp_path, capsys):
        code = main(fit_args(tmp_path / "nope.csv", tmp_path / "out"))
        assert code == 2
        err = json.loads(capsys.readouterr().err)
        assert "nope.csv" in err["message"]

    def test_metrics_self_consistent(self, cohort_csv, tmp_path):
        out = tmp_path / "run"
        main(fit_args(cohort_csv, out))
        report = json.loads((out / "params_exponential.json").read_text())
        # full-precision JSON: the AIC identity holds exactly
        k = report["metrics_train"]["n_params"]
        assert k == 15
        assert report["metrics_train"]["aic"] == 2 * k - 2 * report["loglik_train"]
        # the CSV mirrors it at its 6-significant-digit precision
        row = (out / "metrics.csv").read_text().splitlines()[1].split(",")
        assert int(row[2]) == k
        assert float(row[4]) == pytest.approx(report["metrics_train"]["aic"], rel=1e-5)

    def test_plots_rendered_by_default(self, cohort_csv, tmp_path):
        out = tmp_path / "run"
        args = fit_args(cohort_csv, out)
        args.remove("--no-plots")
        assert main(args) == 0
        assert (out / "fig_state_probabilities.png").stat().st_size > 0

    def test_config_file_with_flag_overrides(self, cohort_csv, tmp_path):
        config = {
            "input": str(cohort_csv),
            "out": str(tmp_path / "from_config"),
            "families": ["exponential"],
            "seed": 5,
            "mcmc": {"iterations": 60, "burn_in": 30},
            "plots": False,
        }
        config_path = tmp_path / "run.json"
        config_path.write_text(json.dumps(config))
        out = tmp_path / "overridden"
        assert main(["fit", "--config", str(config_path), "--out", str(out)]) == 0
        assert (out / "metrics.csv").exists()


class TestTransitionMatrixCommand:
    def test_series_has_identity_anchor_and_stochastic_rows(self, params_json, tmp_path):
        out = tmp_path / "tm"
        code = main([
            "transition-matrix", "--params", str(params_json),
            "--t", "0", "--tau-max", "10", "--out", str(out), "--no-plots",
        ])
        assert code == 0
        rows = (out / "transition_matrix.csv").read_text().splitlines()[1:]
        cells = [r.split(",") for r in rows]
        anchor = {(c[2], c[3]): float(c[4]) for c in cells if c[1] == "0"}
        for i in "12345F":
            for j in "12345F":
                assert anchor[(i, j)] == pytest.approx(1.0 if i == j else 0.0, abs=1e-9)
        by_tau_row = {}
        for c in cells:
            by_tau_row.setdefault((c[1], c[2]), 0.0)
            by_tau_row[(c[1], c[2])] += float(c[4])
        for total in by_tau_row.values():
            assert total == pytest.approx(1.0, abs=1e-4)  # 6-digit CSV rounding

    def test_exponential_series_is_anchor_invariant(self, params_json, tmp_path):
        outs = []
        for t, tau_max in ((0, 10), (20, 30)):
            out = tmp_path / f"tm{t}"
            main([
                "transition-matrix", "--params", str(params_json),
                "--t", str(t), "--tau-max", str(tau_max), "--out", str(out), "--no-plots",
            ])
            rows = (out / "transition_matrix.csv").read_text().splitlines()[1:]
            outs.append([float(r.split(",")[4]) for r in rows])
        np.testing.assert_allclose(outs[0], outs[1], atol=1e-8)

    def test_family_mismatch_is_config_error(self, params_json, tmp_path):
        code = main([
            "transition-matrix", "--params", str(params_json), "--family", "gompertz",
            "--t", "0", "--tau-max", "5", "--out", str(tmp_path / "x"), "--no-plots",
        ])
        assert code == 2


class TestSimulateCommand:
    def test_zero_pipes_writes_header_only(self, params_json, tmp_path):
        out = tmp_path / "sim"
        code = main([
            "simulate", "--params", str(params_json), "--n-pipes", "0",
            "--seed", "3", "--out", str(out),
        ])
        assert code == 0
        assert (out / "cohort.csv").read_text() == "pipe_id,age,state\n"
        meta = json.loads((out / "cohort_meta.json").read_text())
        assert meta["seed"] == 3

    def test_simulated_states_present(self, params_json, tmp_path):
        out = tmp_path / "sim"
        main([
            "simulate", "--params", str(params_json), "--n-pipes", "40",
            "--seed", "3", "--age-range", "5,60", "--out", str(out),
        ])
        lines = (out / "cohort.csv").read_text().splitlines()
        assert len(lines) == 41


class TestSplitCommand:
    def test_split_is_deterministic_partition(self, cohort_csv, tmp_path):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        for out in (out_a, out_b):
            assert main([
                "split", "--input", str(cohort_csv), "--ratio", "0.7",
                "--seed", "4", "--out", str(out),
            ]) == 0
        assert (out_a / "split.csv").read_bytes() == (out_b / "split.csv").read_bytes()
        rows = (out_a / "split.csv").read_text().splitlines()[1:]
        subsets = [r.split(",")[1] for r in rows]
        assert subsets.count("train") == round(0.7 * len(rows))


class TestTurnbullCommand:
    def test_outputs(self, cohort_csv, tmp_path):
        out = tmp_path / "tb"
        assert main(["turnbull", "--input", str(cohort_csv), "--out", str(out), "--no-plots"]) == 0
        header = (out / "turnbull.csv").read_text().splitlines()[0]
        assert header == "k_bin,age,survival"
        assert (out / "turnbull_state_probs.csv").exists()


class TestInspectionSchemaInput:
    def test_fit_from_inspection_csv(self, tmp_path):
        rows = ["pipe_id,material,content,construction_year,inspection_date,damage_code,severity"]
        rng = np.random.default_rng(0)
        for i in range(120):
            year = int(rng.integers(1950, 2000))
            insp = int(rng.integers(year + 1, 2021))
            sev = rng.choice(["", "2", "3", "4", "5", "F"], p=[0.55, 0.15, 0.1, 0.08, 0.07, 0.05])
            rows.append(f"p{i},concrete,mixed,{year},{insp}-06-15,BAF,{sev}")
        path = tmp_path / "inspections.csv"
        path.write_text("\n".join(rows) + "\n")
        out = tmp_path / "run"
        code = main(fit_args(path, out, extra=[
            "--material", "concrete", "--content", "mixed", "--damage-code", "BAF",
        ]))
        assert code == 0
        assert (out / "metrics.csv").exists()

    def test_inspection_csv_without_cohort_spec_is_config_error(self, tmp_path, capsys):
        path = tmp_path / "inspections.csv"
        path.write_text(
            "pipe_id,material,content,construction_year,inspection_date,damage_code,severity\n"
            "p1,concrete,mixed,1970,2000-01-01,BAF,2\n"
        )
        code = main(fit_args(path, tmp_path / "out"))
        assert code == 2
        assert "cohort" in json.loads(capsys.readouterr().err)["message"]
