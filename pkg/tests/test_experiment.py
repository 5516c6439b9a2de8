import json

import pytest

from src.experiment import ExperimentSettings, run_experiment
from src.storage import ExperimentManifest


def _settings(dataset, **overrides):
    base = dict(dataset=str(dataset), window_seconds=1.0, stride_frames=2, vae_preset="tiny",
                vae_epochs=1, clf_epochs=2, architectures=("no-fusing-1", "delayed-fusing"), plots=False)
    base.update(overrides)
    return ExperimentSettings(**base)


def test_small_run_writes_every_report(tmp_path, tiny_dataset):
    result = run_experiment(tmp_path / "run", _settings(tiny_dataset))
    run = tmp_path / "run"
    assert set(result.metrics) == {"no-fusing-1", "delayed-fusing"}
    for key in ("A1", "A2", "A3", "A4"):
        assert (run / "models" / f"vae-{key}.ckpt").exists()
        assert (run / "reports" / "latent" / f"vae-{key}.csv").exists()
    assert not (run / "models" / "vae-F.ckpt").exists()
    for name in ("ood.json", "tree.json", "tree.txt", "tree-metrics.json", "summary.json"):
        assert (run / "reports" / name).exists()
    summary = json.loads((run / "reports" / "summary.json").read_text())
    assert set(summary) == {"metrics", "ood", "tree"}
    assert result.tree.depth <= 3
    assert "delayed-fusing" in result.table()

    manifest = ExperimentManifest.read(run / "experiment.json")
    assert manifest.stage == "experiment" and len(manifest.artifacts) == 6
    assert manifest.hyperparameters["split"]["counts"]["walk"] == [22, 6]


def test_same_settings_give_identical_checkpoints(tmp_path, tiny_dataset):
    settings = _settings(tiny_dataset, architectures=("early-fusing",))
    a = run_experiment(tmp_path / "a", settings)
    b = run_experiment(tmp_path / "b", settings)
    assert a.metrics["early-fusing"].to_dict() == b.metrics["early-fusing"].to_dict()
    for name in ("vae-F.ckpt", "early-fusing.ckpt"):
        assert (tmp_path / "a" / "models" / name).read_bytes() == (tmp_path / "b" / "models" / name).read_bytes()
    assert (tmp_path / "a" / "reports" / "summary.json").read_text() == \
        (tmp_path / "b" / "reports" / "summary.json").read_text()


def test_presets_resolve():
    desk = ExperimentSettings.from_preset("desk", seed=3, vae_epochs=None)
    assert desk.vae_preset == "desk" and desk.seed == 3 and desk.window_seconds == 4
    full = ExperimentSettings.from_preset("full")
    assert full.subcarriers == 2048 and full.window_seconds * full.frame_rate_hz == 450


@pytest.mark.slow
def test_desk_scale_acceptance(tmp_path):
    """Synthetic desk run: fusion accuracy, OOD separation, tree fidelity, reproducibility."""
    settings = ExperimentSettings.from_preset("desk", plots=False)
    result = run_experiment(tmp_path / "a", settings)

    delayed = result.metrics["delayed-fusing"].accuracy
    best_single = max(result.metrics[f"no-fusing-{i}"].accuracy for i in range(1, 5))
    assert delayed >= 0.80
    assert delayed >= best_single - 0.05

    ood = result.ood
    assert ood.mean_strength_ood < ood.mean_strength_in
    assert ood.median_log_ood < ood.median_log_in

    assert result.tree.depth <= 3
    assert result.tree_metrics.accuracy >= delayed - 0.10

    again = run_experiment(tmp_path / "b", settings)
    for ckpt in sorted((tmp_path / "a" / "models").glob("*.ckpt")):
        assert ckpt.read_bytes() == (tmp_path / "b" / "models" / ckpt.name).read_bytes(), ckpt.name
    assert {k: v.to_dict() for k, v in result.metrics.items()} == {k: v.to_dict() for k, v in again.metrics.items()}
