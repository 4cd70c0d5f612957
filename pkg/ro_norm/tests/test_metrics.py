import json

import numpy as np
import pytest

from ro_norm.utils import (
    ConfigError,
    DataError,
    EvalReport,
    PointSelection,
    ShapeError,
    aggregate_reports,
    e_l2,
    error_histogram,
    max_error_distribution,
    mme,
)


def test_e_l2_examples():
    truth = np.array([[3.0, 4.0]])
    assert e_l2(truth, truth) == 0.0
    assert e_l2(np.zeros_like(truth), truth) == pytest.approx(1.0)
    assert e_l2(np.array([[3.0, 0.0]]), truth) == pytest.approx(0.8)


def test_e_l2_is_scale_invariant(rng):
    pred, truth = rng.randn(2, 4, 5, 3, 1)
    np.testing.assert_allclose(e_l2(-2.5 * pred, -2.5 * truth), e_l2(pred, truth), atol=1e-12)


def test_e_l2_skips_zero_targets():
    truth = np.array([[3.0, 4.0], [0.0, 0.0]])
    pred = np.array([[3.0, 0.0], [1.0, 1.0]])
    with pytest.warns(UserWarning):
        assert e_l2(pred, truth) == pytest.approx(0.8)
    with pytest.raises(DataError):
        e_l2(pred, np.zeros_like(truth))


def test_mme_examples():
    truth = np.zeros((2, 3))
    pred = np.array([[0.1, -0.2, 0.0], [0.4, 0.0, 0.0]])
    assert mme(pred, truth) == pytest.approx(0.3)
    assert mme(truth, truth) == 0.0
    assert mme(np.array([[-0.7, 0.1]]), np.zeros((1, 2))) == pytest.approx(0.7)


def test_mme_shape_mismatch():
    with pytest.raises(ShapeError):
        mme(np.zeros((2, 3)), np.zeros((2, 4)))


def test_max_error_distribution(rng):
    truth = rng.randn(5, 4, 3, 1)
    np.testing.assert_array_equal(max_error_distribution(truth, truth), 0.0)
    pred = truth + rng.randn(*truth.shape)
    distribution = max_error_distribution(pred, truth)
    assert len(distribution) == 5
    assert np.all(np.diff(distribution) >= 0)
    assert distribution.mean() == pytest.approx(mme(pred, truth))
    assert max_error_distribution(pred[:1], truth[:1])[0] == pytest.approx(mme(pred[:1], truth[:1]))


def test_histogram_exact_prediction(rng):
    truth = rng.randn(3, 20, 12, 1)
    histogram = error_histogram(truth, truth, PointSelection(8, 5, seed=1))
    assert histogram.counts[0] == histogram.n_points == 3 * 8 * 5


def test_histogram_threshold():
    truth = np.zeros((2, 10, 6, 1))
    histogram = error_histogram(
        truth + 1.0, truth, PointSelection(4, 3), threshold=2.0, bins=np.array([0.0, 2.0])
    )
    assert histogram.fraction_below == 1.0
    assert histogram.counts.tolist() == [24]


def test_point_selection():
    selection = PointSelection(5, 3, seed=2)
    xs, ts = selection.indices(40, 10)
    again = selection.indices(40, 10)
    np.testing.assert_array_equal(xs, again[0])
    np.testing.assert_array_equal(ts, again[1])
    assert len(np.unique(xs)) == 5 and len(np.unique(ts)) == 3
    # more points than available: every index once
    xs, ts = PointSelection(600, 10).indices(7, 1)
    np.testing.assert_array_equal(xs, np.arange(7))
    with pytest.raises(ConfigError):
        PointSelection(0, 3).indices(5, 5)


def test_eval_report_save(tmp_path, rng):
    truth = rng.randn(4, 6, 5, 1)
    pred = truth + 0.1 * rng.randn(*truth.shape)
    report = EvalReport.from_predictions(
        pred, truth, wall_clock_s=2.0, n_params=10, threshold=0.5, name="a", method="ro_norm"
    )
    report.save(tmp_path)
    with open(tmp_path / "report.json") as f:
        saved = json.load(f)
    assert saved["e_l2"] == pytest.approx(report.e_l2)
    assert saved["n_params"] == 10
    assert len(saved["max_errors"]) == 4
    assert (tmp_path / "histogram.csv").exists()
    assert (tmp_path / "max_errors.csv").exists()
    assert 0.0 <= report.summary()["fraction_below"] <= 1.0


def test_aggregate_reports():
    rows = [
        {"name": "a", "method": "ro_norm", "e_l2": 0.1, "mme": 1.0, "n_params": 5},
        {"name": "a", "method": "ro_norm", "e_l2": 0.3, "mme": 3.0, "n_params": 5},
        {"name": "b", "method": "pca_net", "e_l2": 0.2, "mme": 2.0, "n_params": 7},
    ]
    table = aggregate_reports(rows).set_index("name")
    assert table.loc["a", "e_l2_mean"] == pytest.approx(0.2)
    assert table.loc["a", "e_l2_std"] == pytest.approx(np.std([0.1, 0.3], ddof=1))
    assert table.loc["b", "e_l2_std"] == 0.0
    assert table.loc["a", "e_l2"] == "0.2 (0.14)"
    assert table.loc["a", "repeats"] == 2
    assert table.loc["b", "n_params"] == 7


def test_histogram_keeps_out_of_range_errors():
    truth = np.zeros((1, 5, 4, 1))
    histogram = error_histogram(
        truth + 3.0, truth, PointSelection(5, 4), bins=np.array([0.0, 1.0, 2.0])
    )
    assert histogram.n_points == 20
    assert histogram.counts.tolist() == [0, 20]
    # below the first edge
    histogram = error_histogram(
        truth + 0.5, truth, PointSelection(5, 4), bins=np.array([1.0, 2.0])
    )
    assert histogram.counts.tolist() == [20]
