import math

import numpy as np
import pytest

from pipechain import StateProbabilityCurve, aic, bic, rmse, split
from pipechain.errors import DataFormatError
from pipechain.metrics import relative_error, write_metrics_csv


def curve_of(rows, ages=None):
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    ages = np.arange(len(rows), dtype=float) if ages is None else np.asarray(ages, dtype=float)
    return StateProbabilityCurve(ages, rows)


class TestAic:
    def test_zero_everything(self):
        assert aic(0.0, 0) == 0.0

    def test_published_gompertz_row_round_trips(self):
        # training AIC 57431 with 24 parameters implies l = -28691.5
        loglik = (2 * 24 - 57431) / 2
        assert loglik == -28691.5
        assert aic(loglik, 24) == 57431.0

    def test_equal_size_difference_is_minus_two_delta(self):
        l1, l2 = -100.0, -93.5
        assert aic(l1, 24) - aic(l2, 24) == pytest.approx(-2 * (l1 - l2))


class TestBic:
    def test_single_observation_drops_penalty(self):
        assert bic(-12.5, 24, 1) == pytest.approx(25.0)

    def test_published_rows_imply_one_sample_size(self):
        # the same cohort must imply the same ln(n) from either family row
        ln_n_gompertz = (3665.8 - (3532.8 - 2 * 24)) / 24
        ln_n_exponential = (4089.8 - (4006.7 - 2 * 15)) / 15
        assert ln_n_gompertz == pytest.approx(ln_n_exponential, abs=0.01)
        n_obs = round(math.exp(ln_n_gompertz))
        assert bic(-28691.5, 24, n_obs) == pytest.approx(
            math.log(n_obs) * 24 + 2 * 28691.5
        )

    def test_exceeds_aic_for_more_than_e_squared_samples(self):
        assert bic(-50.0, 10, 8) > aic(-50.0, 10)

    def test_requires_a_sample(self):
        with pytest.raises(DataFormatError):
            bic(-1.0, 3, 0)


class TestRmse:
    def test_identical_curves(self):
        c = curve_of([[0.5, 0.2, 0.1, 0.1, 0.05, 0.05]])
        assert rmse(c, c, [0.0]) == 0.0

    def test_uniform_magnitude_offset(self):
        # every cell differs by |delta|, so the RMSE is exactly delta
        delta = 0.01
        base = np.full((4, 6), 1 / 6)
        signs = np.tile([1.0, -1.0, 1.0, -1.0, 1.0, -1.0], (4, 1))
        a = StateProbabilityCurve(np.arange(4.0), base)
        b = StateProbabilityCurve(np.arange(4.0), base + delta * signs)
        assert rmse(a, b, np.arange(4.0)) == pytest.approx(delta, rel=1e-12)

    def test_single_age_frozen_value(self):
        a = curve_of([[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]])
        b = curve_of([[0.5, 0.5, 0.0, 0.0, 0.0, 0.0]])
        assert rmse(a, b, [0.0]) == pytest.approx(0.28867513459481288, rel=1e-12)

    def test_symmetry_and_triangle_inequality(self, rng):
        ages = np.arange(3.0)
        curves = [
            StateProbabilityCurve(ages, rng.dirichlet(np.ones(6), size=3)) for _ in range(3)
        ]
        a, b, c = curves
        assert rmse(a, b, ages) == pytest.approx(rmse(b, a, ages), rel=1e-14)
        assert rmse(a, c, ages) <= rmse(a, b, ages) + rmse(b, c, ages) + 1e-14

    def test_empty_grid_rejected(self):
        c = curve_of([[1, 0, 0, 0, 0, 0]])
        with pytest.raises(DataFormatError):
            rmse(c, c, [])


class TestSplit:
    def test_seventy_thirty_on_ten_pipes(self):
        train, test = split([f"p{i}" for i in range(10)], ratio=0.7, seed=1)
        assert len(train) == 7 and len(test) == 3

    def test_deterministic_for_seed(self):
        ids = [f"p{i}" for i in range(57)]
        assert split(ids, seed=42) == split(ids, seed=42)
        assert split(ids, seed=42) != split(ids, seed=43)

    def test_is_a_partition(self):
        ids = [f"p{i}" for i in range(23)]
        train, test = split(ids, ratio=0.7, seed=5)
        assert set(train) | set(test) == set(ids)
        assert set(train) & set(test) == set()

    def test_input_order_does_not_matter(self, rng):
        ids = [f"p{i}" for i in range(31)]
        shuffled = list(ids)
        rng.shuffle(shuffled)
        assert split(ids, seed=9) == split(shuffled, seed=9)

    def test_too_few_pipes(self):
        with pytest.raises(DataFormatError):
            split(["only"], seed=0)


class TestRelativeError:
    def test_published_rmse_improvements(self):
        # training RMSE, best inhomogeneous vs homogeneous, per cohort
        assert relative_error(0.0219, 0.0312) == pytest.approx(0.298, abs=0.001)
        assert relative_error(0.0313, 0.0593) == pytest.approx(0.472, abs=0.001)
        assert relative_error(0.0153, 0.0297) == pytest.approx(0.485, abs=0.001)

    def test_sign_flips_when_homogeneous_wins(self):
        assert relative_error(1114.7, 1080.9) == pytest.approx(-0.030, abs=0.001)


class TestMetricsCsv:
    def test_layout(self, tmp_path):
        rows = [
            {
                "type": "HCTMC",
                "family": "exponential",
                "n_params": 15,
                "rmse_train": 0.03123456,
                "aic_train": 100.0,
                "bic_train": 110.0,
                "rmse_test": 0.04,
                "aic_test": 50.0,
                "bic_test": 55.0,
            }
        ]
        path = tmp_path / "metrics.csv"
        write_metrics_csv(rows, path)
        lines = path.read_text().splitlines()
        assert lines[0].startswith("type,family,n_params,rmse_train")
        assert lines[1].startswith("HCTMC,exponential,15,0.0312346,")
