import json

import numpy as np
import pandas as pd
import pytest

from src.analysis import compute_metrics, export_latent_scatter, ood_report, ood_report_from_outputs
from src.csi_data import CLASS_NAMES, ActivityLabel
from src.errors import ContractError, DimensionError, InsufficientDataError
from src.evidential import dirichlet_from_evidence
from src.vae import LatentCode


# ---------- metrics ----------
def test_metrics_known_example():
    report = compute_metrics([0, 1, 1, 2], [0, 0, 1, 2])
    assert report.accuracy == pytest.approx(0.75)
    assert [report.per_class[n]["precision"] for n in ("walk", "run", "jump")] == [1.0, 0.5, 1.0]
    assert [report.per_class[n]["recall"] for n in ("walk", "run", "jump")] == [0.5, 1.0, 1.0]
    assert report.precision == pytest.approx(2.5 / 3)
    assert report.recall == pytest.approx(2.5 / 3)
    assert report.confusion_matrix.shape == (5, 5)
    assert report.confusion_matrix[0, 1] == 1 and report.confusion_matrix.sum() == 4
    assert report.undefined == ()


def test_perfect_predictions():
    labels = np.repeat(np.arange(5), 4)
    report = compute_metrics(labels, labels)
    assert (report.accuracy, report.precision, report.recall, report.f1) == (1.0, 1.0, 1.0, 1.0)
    assert np.array_equal(np.diag(report.confusion_matrix), [4] * 5)


def test_never_predicted_class_is_flagged():
    report = compute_metrics([0, 0], [0, 1])
    assert report.per_class["run"]["precision"] == 0.0
    assert report.undefined == ("run",)


def test_metrics_input_errors():
    with pytest.raises(ContractError):
        compute_metrics([0, 1], [0])
    with pytest.raises(ContractError):
        compute_metrics([], [])
    with pytest.raises(ContractError):
        compute_metrics([0, 1, 9], [0, 1, 2])
    with pytest.raises(ContractError):
        compute_metrics([0, 1, 2], [0, 5, 2])
    with pytest.raises(ContractError):
        compute_metrics([-1, 0], [0, 0])
    assert compute_metrics([0, 2], [0, 2], num_classes=3).confusion_matrix.shape == (3, 3)


def test_metrics_files(tmp_path):
    report = compute_metrics([0, 1, 1, 2], [0, 0, 1, 2])
    report.write(tmp_path / "m.json", tmp_path / "cm.csv")
    saved = json.loads((tmp_path / "m.json").read_text())
    assert saved["accuracy"] == 0.75 and saved["class_names"] == list(CLASS_NAMES)
    cm = pd.read_csv(tmp_path / "cm.csv", index_col=0)
    assert list(cm.columns) == list(CLASS_NAMES) and int(cm.loc["walk", "run"]) == 1
    assert "accuracy" in report.header() and report.row("x").startswith("x")


# ---------- OOD ----------
def _confident(n, seed=0):
    rng = np.random.default_rng(seed)
    e = np.zeros((n, 5))
    e[np.arange(n), rng.integers(0, 5, n)] = rng.uniform(15, 30, n)
    return dirichlet_from_evidence(e)


def test_zero_evidence_ood_is_fully_separated():
    report = ood_report_from_outputs(_confident(20), dirichlet_from_evidence(np.zeros((20, 5))))
    assert report.auroc == 1.0
    assert report.mean_strength_ood == pytest.approx(5.0)
    assert report.median_log_ood == pytest.approx(0.0)
    assert report.median_log_in > np.log(16.0)
    assert report.in_dist_top_log_pseudocounts.size == 20
    assert report.threshold == pytest.approx(np.log(5.0))
    assert report.detection_rate_at_threshold == 1.0 and report.false_alarm_rate == 0.0
    assert report.in_dist_log_pseudocounts.size == 100


def test_medians_compare_the_predicted_class_per_window():
    # one class with evidence per window: pooled medians both sit at log 1 = 0
    weak = np.zeros((20, 5))
    weak[:, 2] = 3.0
    report = ood_report_from_outputs(_confident(20), dirichlet_from_evidence(weak))
    assert np.median(report.in_dist_log_pseudocounts) == pytest.approx(0.0)
    assert np.median(report.ood_log_pseudocounts) == pytest.approx(0.0)
    assert report.median_log_ood == pytest.approx(np.log(4.0))
    assert report.median_log_ood < report.median_log_in
    assert report.to_dict()["n_ood"] == 20


def test_identical_sets_give_chance_auroc():
    out = _confident(30, seed=3)
    assert ood_report_from_outputs(out, out).auroc == pytest.approx(0.5)


def test_evidence_mode_and_per_class_histograms():
    out = dirichlet_from_evidence(np.zeros((4, 5)))
    report = ood_report_from_outputs(_confident(8), out, mode="evidence", choose_threshold=False, per_class=True)
    assert report.threshold is None
    np.testing.assert_allclose(report.ood_log_pseudocounts, np.log(1e-12))
    assert set(report.per_class_in) == set(CLASS_NAMES)
    with pytest.raises(ContractError):
        ood_report_from_outputs(_confident(2), out, mode="strength")


def test_threshold_choice_follows_the_seed():
    a = ood_report_from_outputs(_confident(40, 1), _confident(40, 2), seed=5)
    b = ood_report_from_outputs(_confident(40, 1), _confident(40, 2), seed=5)
    assert (a.threshold, a.detection_rate_at_threshold, a.false_alarm_rate) == \
        (b.threshold, b.detection_rate_at_threshold, b.false_alarm_rate)


def test_ood_errors():
    empty = dirichlet_from_evidence(np.zeros((0, 5)))
    with pytest.raises(InsufficientDataError):
        ood_report_from_outputs(_confident(3), empty)
    from conftest import make_windows

    mixed = make_windows(1, labels=(ActivityLabel.WALK, ActivityLabel.SQUAT))
    with pytest.raises(ContractError):
        ood_report(None, mixed, mixed[1:])
    with pytest.raises(ContractError):
        ood_report(None, mixed[:1], mixed)


def test_ood_files(tmp_path):
    report = ood_report_from_outputs(_confident(6), dirichlet_from_evidence(np.zeros((3, 5))))
    report.write(tmp_path / "ood.json", tmp_path / "ood.csv")
    saved = json.loads((tmp_path / "ood.json").read_text())
    assert saved["n_in"] == 6 and saved["n_ood"] == 3 and saved["auroc"] == 1.0
    frame = pd.read_csv(tmp_path / "ood.csv")
    assert list(frame["set"].value_counts().sort_index()) == [30, 15]


# ---------- latent scatter ----------
def test_scatter_csv_from_codes(tmp_path):
    codes = [LatentCode(mu=np.array([float(i), -float(i)]), sigma=np.ones(2)) for i in range(3)]
    labels = [ActivityLabel.WALK, ActivityLabel.RUN, ActivityLabel.SQUAT]
    csv_path, plot = export_latent_scatter(codes, labels, tmp_path / "s.csv")
    assert plot is None
    frame = pd.read_csv(csv_path)
    assert list(frame.columns) == ["mu0", "mu1", "label"]
    assert list(frame["label"]) == ["walk", "run", "squat"]
    assert list(frame["mu1"]) == [0.0, -1.0, -2.0]


def test_scatter_plot_and_edge_cases(tmp_path):
    mu = np.random.default_rng(0).normal(size=(10, 3))
    _, plot = export_latent_scatter(mu, ["walk"] * 10, tmp_path / "s.csv", tmp_path / "s.png", title="VAE-F")
    assert plot is not None and plot.exists()

    csv_path, plot = export_latent_scatter(np.zeros((0, 2)), [], tmp_path / "empty.csv", tmp_path / "e.png")
    assert plot is None and csv_path.read_text() == "mu0,mu1,label\n"

    with pytest.raises(DimensionError):
        export_latent_scatter(np.zeros((4, 1)), ["walk"] * 4, tmp_path / "x.csv")
    with pytest.raises(ContractError):
        export_latent_scatter(mu, ["walk"], tmp_path / "x.csv")
