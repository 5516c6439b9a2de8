# src/experiment.py
"""
End-to-end run: data -> windows/split -> VAEs -> seven classifiers ->
metrics, OOD report, surrogate tree. Every artifact lands under workdir.

    workdir/
      data/                     synthetic suite (unless a dataset is given)
      models/vae-<key>.ckpt     A1..A4, F, F-3D
      models/<arch>.ckpt
      reports/<arch>/metrics.json, confusion.csv
      reports/ood.json, reports/tree.json, reports/summary.json
      plots/*.png
"""
from __future__ import annotations

import logging
import os
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import settings
from .analysis import MetricsReport, OodReport, compute_metrics, export_latent_scatter, ood_report_from_outputs
from .architectures import (
    ClassifierModel,
    build_architecture,
    load_architecture,
    predict_features,
    save_classifier,
    train_classifier,
)
from .common.utils import write_json
from .csi_data import (
    CLASS_NAMES,
    DatasetSplit,
    SplitPolicy,
    build_windows,
    compute_norm_constant,
    dataset_hash,
    load_recordings,
    normalize,
    persist_norm_constant,
    split_dataset,
    stored_norm_constant,
)
from .csi_synth import ChannelConfig, linear_array, write_suite
from .errors import ConfigurationError
from .explainer import explain_tree
from .features import latent_feature_matrix
from .storage import ExperimentManifest, manifest_path_for
from .surrogate import SurrogateTree, export_tree, fit_surrogate_tree, save_tree
from .vae import VaeConfig, VaeModel, encode_batch, save_vae, train_vae

log = logging.getLogger("csihar.experiment")

ALL_ARCHITECTURES = (
    "no-fusing-1", "no-fusing-2", "no-fusing-3", "no-fusing-4",
    "early-fusing", "early-fusing-3d", "delayed-fusing",
)

# VAE key -> (antenna, latent_dim)
VAE_LAYOUT: Dict[str, Tuple[Optional[int], int]] = {
    "A1": (0, 4), "A2": (1, 4), "A3": (2, 4), "A4": (3, 4),
    "F": (None, 4), "F-3D": (None, 6),
}


@dataclass(frozen=True)
class ExperimentSettings:
    preset: str = "desk"
    frame_rate_hz: float = 10.0
    duration_s: float = 80.0
    window_seconds: float = 4.0
    stride_frames: int = 2
    subcarriers: int = 64
    antennas: int = 4
    test_fraction: float = 0.2
    split_policy: str = SplitPolicy.CHRONOLOGICAL_TAIL.value
    vae_preset: str = "desk"
    seed: int = 0
    dataset: Optional[str] = None          # None: synthesize into workdir/data
    architectures: Tuple[str, ...] = ALL_ARCHITECTURES
    vae_epochs: Optional[int] = None
    clf_epochs: Optional[int] = None
    tree_max_depth: int = 3
    ood_mode: str = "alpha"
    plots: bool = True

    @classmethod
    def from_preset(cls, name: str, **overrides) -> "ExperimentSettings":
        raw = settings.preset_section("experiment", name)
        raw.update({k: v for k, v in overrides.items() if v is not None})
        if "architectures" in raw:
            raw["architectures"] = tuple(raw["architectures"])
        return cls(preset=name, **raw)


@dataclass(eq=False)
class ExperimentResult:
    metrics: Dict[str, MetricsReport]
    ood: Optional[OodReport]
    tree: Optional[SurrogateTree]
    tree_metrics: Optional[MetricsReport]
    attribution: Dict = field(default_factory=dict)
    artifacts: Dict[str, str] = field(default_factory=dict)

    def table(self) -> str:
        return "\n".join([MetricsReport.header()] + [r.row(n) for n, r in self.metrics.items()])

    def summary(self) -> dict:
        out = {
            "metrics": {k: {m: getattr(v, m) for m in ("accuracy", "precision", "recall", "f1")}
                        for k, v in self.metrics.items()},
        }
        if self.ood is not None:
            out["ood"] = self.ood.to_dict()
        if self.tree_metrics is not None:
            out["tree"] = {"accuracy": self.tree_metrics.accuracy, "depth": self.tree.depth,
                           "leaves": self.tree.n_leaves, "attribution": self.attribution}
        return out


def prepare_data(workdir: Path, s: ExperimentSettings):
    """Returns (dataset dir, split, ood windows, norm constant)."""
    if s.dataset:
        data_dir = settings.resolve_data_path(s.dataset)
    else:
        data_dir = workdir / "data"
        config = ChannelConfig(subcarriers=s.subcarriers, antenna_positions=linear_array(s.antennas), seed=s.seed)
        write_suite(data_dir, config, s.duration_s, s.frame_rate_hz)

    recordings = load_recordings(data_dir)
    norm = stored_norm_constant(data_dir)
    if norm is None:
        # one constant for the whole dataset, OOD recordings included
        norm = compute_norm_constant(recordings)
        persist_norm_constant(data_dir, norm)
    recordings = [normalize(r, norm) for r in recordings]
    per_class, ood = build_windows(recordings, s.window_seconds, s.stride_frames)
    split = split_dataset(per_class, s.test_fraction, s.split_policy, s.seed)
    return data_dir, split, ood, norm


def _required_vaes(names) -> List[str]:
    keys: List[str] = []
    for name in names:
        for k in load_architecture(name).vaes:
            if k not in keys:
                keys.append(k)
    return keys


def train_vaes(workdir: Path, s: ExperimentSettings, split: DatasetSplit, norm: float,
               keys: List[str]) -> Tuple[Dict[str, VaeModel], Dict[str, Path]]:
    base = VaeConfig.from_preset(s.vae_preset, epochs=s.vae_epochs, seed=s.seed)
    models, paths = {}, {}
    for key in keys:
        if key not in VAE_LAYOUT:
            raise ConfigurationError(f"unknown VAE key {key!r}")
        antenna, latent_dim = VAE_LAYOUT[key]
        model = train_vae(split.train, replace(base, latent_dim=latent_dim), antenna=antenna, norm_constant=norm)
        paths[key] = save_vae(model, workdir / "models" / f"vae-{key}.ckpt")
        models[key] = model
    return models, paths


def run_experiment(workdir: str | os.PathLike, s: ExperimentSettings = ExperimentSettings()) -> ExperimentResult:
    workdir = Path(workdir)
    reports, plots_dir = workdir / "reports", workdir / "plots"
    data_dir, split, ood_windows, norm = prepare_data(workdir, s)

    names = list(s.architectures)
    vaes, vae_paths = train_vaes(workdir, s, split, norm, _required_vaes(names))

    # VAEs are frozen: encode every set once per VAE
    moments = {key: {"train": encode_batch(v, split.train), "test": encode_batch(v, split.test),
                     "ood": encode_batch(v, ood_windows)} for key, v in vaes.items()}
    y_train = np.array([w.label.class_index for w in split.train])
    y_test = np.array([w.label.class_index for w in split.test])

    def feats(spec, part: str) -> np.ndarray:
        return latent_feature_matrix([moments[k][part] for k in spec.vaes])

    metrics: Dict[str, MetricsReport] = {}
    classifiers: Dict[str, ClassifierModel] = {}
    artifacts: Dict[str, str] = {k: str(p) for k, p in vae_paths.items()}
    for name in names:
        spec = load_architecture(name, epochs=s.clf_epochs, seed=s.seed)
        clf = build_architecture(spec, vaes)
        train_classifier(clf, split.train, y_train, features=feats(spec, "train"))
        artifacts[name] = str(save_classifier(clf, workdir / "models" / f"{name}.ckpt", vae_paths))
        out = predict_features(clf, feats(spec, "test"))
        report = compute_metrics(out.predicted_class, y_test)
        report.write(reports / name / "metrics.json", reports / name / "confusion.csv")
        metrics[name], classifiers[name] = report, clf
        if s.plots:
            from .plots import plot_confusion
            plot_confusion(report.confusion_matrix, report.class_names, plots_dir / f"confusion-{name}.png", name)

    # OOD + surrogate on delayed fusing when present, else the last architecture
    focus = "delayed-fusing" if "delayed-fusing" in classifiers else names[-1]
    clf = classifiers[focus]
    ood = tree = tree_metrics = None
    attribution: Dict = {}
    if ood_windows:
        ood = ood_report_from_outputs(predict_features(clf, feats(clf.spec, "test")),
                                      predict_features(clf, feats(clf.spec, "ood")),
                                      mode=s.ood_mode, seed=s.seed)
        ood.write(reports / "ood.json", reports / "ood.csv")

    tree = fit_surrogate_tree(feats(clf.spec, "train"), y_train, s.tree_max_depth, s.seed,
                              feature_names=clf.feature_names, class_names=list(CLASS_NAMES))
    tree_metrics = compute_metrics(tree.predict(feats(clf.spec, "test")), y_test)
    tree_metrics.write(reports / "tree-metrics.json", reports / "tree-confusion.csv")
    write_json(reports / "tree.json", export_tree(tree))
    (reports / "tree.txt").write_text(export_tree(tree)["text"], encoding="utf-8")
    save_tree(tree, workdir / "models" / "tree.joblib")
    attribution = explain_tree(tree, feats(clf.spec, "test"))
    write_json(reports / "tree-attribution.json", attribution)

    for key, vae in vaes.items():
        export_latent_scatter(moments[key]["test"][0], [w.label for w in split.test],
                              reports / "latent" / f"vae-{key}.csv",
                              plots_dir / f"latent-vae-{key}.png" if s.plots else None, title=f"VAE-{key}")

    if s.plots:
        from .plots import plot_loss_traces, plot_ood_histogram, plot_surrogate_tree
        plot_loss_traces({f"VAE-{k}": v.loss_trace for k, v in vaes.items()}, plots_dir / "loss-vae.png")
        plot_loss_traces({k: c.loss_trace for k, c in classifiers.items()}, plots_dir / "loss-classifiers.png")
        if ood is not None:
            plot_ood_histogram(ood, plots_dir / "ood-histogram.png", title=focus)
        plot_surrogate_tree(tree, plots_dir / "tree.png")

    result = ExperimentResult(metrics=metrics, ood=ood, tree=tree, tree_metrics=tree_metrics,
                              attribution=attribution, artifacts=artifacts)
    write_json(reports / "summary.json", result.summary())

    manifest = ExperimentManifest(
        stage="experiment",
        dataset=str(data_dir),
        dataset_hash=dataset_hash(data_dir),
        hyperparameters={**asdict(s), "norm_constant": norm, "split": split.describe()},
        seeds={"split": s.seed, "vae": s.seed, "classifier": s.seed, "tree": s.seed},
    )
    for path in artifacts.values():
        manifest.add_artifact(path)
    manifest.write(manifest_path_for(workdir))
    return result
