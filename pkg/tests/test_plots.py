import numpy as np

from src import plots
from src.analysis import compute_metrics, ood_report_from_outputs
from src.evidential import dirichlet_from_evidence
from src.surrogate import export_tree, fit_surrogate_tree, parse_tree

PNG = b"\x89PNG"


def _is_png(path):
    return path.exists() and path.read_bytes()[:4] == PNG


def test_report_figures(tmp_path):
    cm = compute_metrics([0, 1, 1, 2, 4], [0, 0, 1, 2, 4]).confusion_matrix
    assert _is_png(plots.plot_confusion(cm, ["walk", "run", "jump", "sit", "empty"], tmp_path / "a" / "cm.png"))

    rng = np.random.default_rng(0)
    report = ood_report_from_outputs(dirichlet_from_evidence(rng.uniform(0, 20, (12, 5))),
                                     dirichlet_from_evidence(np.zeros((6, 5))))
    assert _is_png(plots.plot_ood_histogram(report, tmp_path / "ood.png", bins=10))

    assert _is_png(plots.plot_loss_traces({"VAE-A1": [3.0, 2.0, 1.5], "VAE-A2": [2.5, 2.4]}, tmp_path / "loss.png"))

    window = rng.uniform(0, 1, (10, 16, 1))
    assert _is_png(plots.plot_reconstruction(window, window * 1.2, tmp_path / "rec.png", title="walk"))


def test_tree_figure_for_fitted_and_parsed_trees(tmp_path):
    X = np.array([[0.0, 1.0], [0.2, 0.9], [1.0, 0.1], [0.9, 0.0]])
    tree = fit_surrogate_tree(X, [0, 0, 1, 1], max_depth=2, feature_names=["a", "b"])
    assert _is_png(plots.plot_surrogate_tree(tree, tmp_path / "fitted.png", title="tree"))
    parsed = parse_tree(export_tree(tree))
    assert _is_png(plots.plot_surrogate_tree(parsed, tmp_path / "parsed.png"))
    leaf_only = fit_surrogate_tree(X, [2, 2, 2, 2])
    assert _is_png(plots.plot_surrogate_tree(leaf_only, tmp_path / "leaf.png"))


def test_identical_figures_are_byte_stable(tmp_path):
    traces = {"no-fusing-1": [1.0, 0.5, 0.25]}
    a = plots.plot_loss_traces(traces, tmp_path / "a.png")
    b = plots.plot_loss_traces(traces, tmp_path / "b.png")
    assert a.read_bytes() == b.read_bytes()
