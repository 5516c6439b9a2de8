# src/cli.py
"""
Stage-per-subcommand CLI. Stages compose by paths:

    synth -> ingest -> train-vae (x6) -> train-clf -> eval / ood / tree / plot

Every artifact-producing stage writes an experiment manifest next to its
output; `--replay MANIFEST` re-runs the recorded arguments.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from . import __version__, settings
from .analysis import MetricsReport, compute_metrics, export_latent_scatter, ood_report_from_outputs
from .architectures import (
    build_architecture,
    classifier_features,
    load_architecture,
    load_classifier,
    predict,
    predict_features,
    save_classifier,
    train_classifier,
)
from .common.utils import write_json
from .csi_data import (
    CLASS_NAMES,
    SplitPolicy,
    build_windows,
    compute_norm_constant,
    convert_arrays,
    dataset_hash,
    load_recordings,
    normalize,
    persist_norm_constant,
    split_dataset,
    stored_norm_constant,
)
from .csi_synth import ChannelConfig, linear_array, write_suite
from .errors import CsiHarError
from .explainer import explain_tree
from .storage import ExperimentManifest, manifest_path_for
from .surrogate import export_tree, fit_surrogate_tree, save_tree
from .vae import VaeConfig, encode_batch, load_vae, reconstruct, save_vae, train_vae

log = logging.getLogger("csihar.cli")


# ---------- shared data plumbing ----------
def _add_data_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", required=True, help="dataset directory (manifest.json + <activity>.bin)")
    p.add_argument("--experiment", default="full", help="experiment preset for window/split defaults")
    p.add_argument("--window-seconds", type=float, default=None)
    p.add_argument("--stride", type=int, default=None, help="window stride in frames")
    p.add_argument("--test-fraction", type=float, default=None)
    p.add_argument("--split-policy", choices=[s.value for s in SplitPolicy], default=None)
    p.add_argument("--seed", type=int, default=0)


def _data_settings(args) -> Dict:
    preset = settings.preset_section("experiment", args.experiment)
    return {
        "window_seconds": args.window_seconds if args.window_seconds is not None else preset["window_seconds"],
        "stride_frames": args.stride if args.stride is not None else preset["stride_frames"],
        "test_fraction": args.test_fraction if args.test_fraction is not None else preset["test_fraction"],
        "split_policy": args.split_policy or preset["split_policy"],
        "vae_preset": preset.get("vae_preset", "full"),
    }


def _load_split(args):
    data_dir = settings.resolve_data_path(args.data)
    ds = _data_settings(args)
    recordings = load_recordings(data_dir)
    norm = stored_norm_constant(data_dir)
    if norm is None:
        log.warning("[data] %s has no stored norm constant (run `ingest`); computing it now", data_dir)
        norm = compute_norm_constant(recordings)
    recordings = [normalize(r, norm) for r in recordings]
    per_class, ood = build_windows(recordings, ds["window_seconds"], ds["stride_frames"])
    split = split_dataset(per_class, ds["test_fraction"], ds["split_policy"], args.seed)
    return data_dir, split, ood, norm, ds


def _manifest(stage: str, argv: Sequence[str], data_dir: Optional[Path] = None, **extra) -> ExperimentManifest:
    return ExperimentManifest(
        stage=stage,
        argv=list(argv),
        dataset=str(data_dir) if data_dir is not None else None,
        dataset_hash=dataset_hash(data_dir) if data_dir is not None else None,
        **extra,
    )


def _labels(windows) -> np.ndarray:
    return np.array([w.label.class_index for w in windows], dtype=np.int64)


# ---------- stages ----------
def cmd_synth(args, argv) -> int:
    config = ChannelConfig(subcarriers=args.subcarriers, antenna_positions=linear_array(args.antennas),
                           noise_std=args.noise_std, seed=args.seed, reflectors=args.reflectors)
    out = settings.resolve_data_path(args.out)
    write_suite(out, config, args.duration, args.fps)
    m = _manifest("synth", argv, out,
                  hyperparameters={"duration_s": args.duration, "frame_rate_hz": args.fps,
                                   "subcarriers": args.subcarriers, "antennas": args.antennas,
                                   "noise_std": args.noise_std, "reflectors": args.reflectors},
                  seeds={"synth": args.seed})
    m.add_artifact(out / "manifest.json")
    m.write(manifest_path_for(out))
    print(f"wrote synthetic suite to {out}")
    return 0


def cmd_ingest(args, argv) -> int:
    data_dir = settings.resolve_data_path(args.data)
    if args.from_npy:
        convert_arrays(args.from_npy, data_dir, args.fps)
    recordings = load_recordings(data_dir)
    norm = args.norm_constant if args.norm_constant is not None else compute_norm_constant(recordings)
    persist_norm_constant(data_dir, norm)
    m = _manifest("ingest", argv, data_dir, hyperparameters={"norm_constant": norm})
    m.add_artifact(data_dir / "manifest.json")
    m.write(manifest_path_for(data_dir))
    print(f"norm_constant={norm:.6g} for {len(recordings)} recordings in {data_dir}")
    return 0


def cmd_train_vae(args, argv) -> int:
    data_dir, split, _, norm, ds = _load_split(args)
    antenna = None if args.antenna == "all" else int(args.antenna) - 1
    config = VaeConfig.from_preset(args.preset or ds["vae_preset"], latent_dim=args.latent_dim,
                                   epochs=args.epochs, seed=args.seed)
    model = train_vae(split.train, config, antenna=antenna, norm_constant=norm)
    out = save_vae(model, args.out)
    m = _manifest("train-vae", argv, data_dir,
                  hyperparameters={**model.config.to_dict(), **ds, "antenna": model.antenna},
                  seeds={"split": args.seed, "vae": args.seed})
    m.add_artifact(out)
    m.write(manifest_path_for(out))
    print(f"{model.name}: final loss {model.loss_trace[-1]:.4f} -> {out}")
    return 0


def cmd_encode(args, argv) -> int:
    data_dir, split, ood, _, _ = _load_split(args)
    vae = load_vae(args.vae)
    windows = {"train": split.train, "test": split.test, "ood": tuple(ood),
               "all": split.train + split.test + tuple(ood)}[args.split]
    mu, sigma = encode_batch(vae, windows)
    frame = pd.DataFrame(np.concatenate([mu, sigma], axis=1),
                         columns=[f"mu{i}" for i in range(mu.shape[1])] + [f"sigma{i}" for i in range(mu.shape[1])])
    frame["label"] = [w.label.value for w in windows]
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(out, index=False, lineterminator="\n")
    if args.scatter:
        export_latent_scatter(mu, [w.label for w in windows], out.with_name(out.stem + "-scatter.csv"),
                              out.with_name(out.stem + "-scatter.png"), title=vae.name)
    m = _manifest("encode", argv, data_dir, hyperparameters={"vae": args.vae, "split": args.split},
                  seeds={"split": args.seed})
    m.add_artifact(out)
    m.write(manifest_path_for(out))
    print(f"encoded {len(windows)} windows with {vae.name} -> {out}")
    return 0


def _vae_paths(args, keys: Sequence[str]) -> Dict[str, Path]:
    paths: Dict[str, Path] = {}
    for item in args.vae or []:
        key, _, path = item.partition("=")
        paths[key] = Path(path)
    if args.vae_dir:
        for key in keys:
            paths.setdefault(key, Path(args.vae_dir) / f"vae-{key}.ckpt")
    return paths


def cmd_train_clf(args, argv) -> int:
    data_dir, split, _, _, ds = _load_split(args)
    spec = load_architecture(args.arch, epochs=args.epochs, seed=args.seed)
    paths = _vae_paths(args, spec.vaes)
    vaes = {k: load_vae(paths[k]) for k in spec.vaes if k in paths}
    model = build_architecture(spec, vaes)
    train_classifier(model, split.train)
    out = save_classifier(model, args.out, paths)
    m = _manifest("train-clf", argv, data_dir, architecture=spec.name,
                  hyperparameters={**spec.to_dict(), **ds}, seeds={"split": args.seed, "classifier": args.seed})
    m.add_artifact(out)
    m.write(manifest_path_for(out))
    print(f"{spec.name}: lr={spec.learning_rate} annealing_step={spec.annealing_step} -> {out}")
    return 0


def cmd_eval(args, argv) -> int:
    data_dir, split, _, _, _ = _load_split(args)
    model = load_classifier(args.model)
    report = compute_metrics(predict(model, split.test).predicted_class, _labels(split.test))
    out_dir = Path(args.out_dir)
    report.write(out_dir / "metrics.json", out_dir / "confusion.csv")
    if not args.no_plots:
        from .plots import plot_confusion
        plot_confusion(report.confusion_matrix, report.class_names, out_dir / "confusion.png", model.spec.name)
    m = _manifest("eval", argv, data_dir, architecture=model.spec.name, seeds={"split": args.seed})
    m.add_artifact(out_dir / "metrics.json")
    m.write(out_dir / "experiment.json")
    print(MetricsReport.header())
    print(report.row(model.spec.name))
    return 0


def cmd_ood(args, argv) -> int:
    data_dir, split, ood, _, _ = _load_split(args)
    model = load_classifier(args.model)
    report = ood_report_from_outputs(predict(model, split.test), predict(model, ood), mode=args.mode,
                                     seed=args.seed, per_class=args.per_class)
    out_dir = Path(args.out_dir)
    report.write(out_dir / "ood.json", out_dir / "ood.csv")
    if args.per_class:
        write_json(out_dir / "ood-per-class.json",
                   {k: np.quantile(v, [0.05, 0.25, 0.5, 0.75, 0.95]).tolist() for k, v in report.per_class_in.items()})
    if not args.no_plots:
        from .plots import plot_ood_histogram
        plot_ood_histogram(report, out_dir / "ood-histogram.png", title=model.spec.name)
    m = _manifest("ood", argv, data_dir, architecture=model.spec.name, seeds={"split": args.seed},
                  hyperparameters={"mode": args.mode})
    m.add_artifact(out_dir / "ood.json")
    m.write(out_dir / "experiment.json")
    print(f"mean S in={report.mean_strength_in:.3f} ood={report.mean_strength_ood:.3f} "
          f"auroc={report.auroc:.3f} detection={report.detection_rate_at_threshold:.3f} "
          f"false_alarm={report.false_alarm_rate:.3f}")
    return 0


def cmd_tree(args, argv) -> int:
    data_dir, split, _, _, _ = _load_split(args)
    model = load_classifier(args.model)
    X_train, X_test = classifier_features(model, split.train), classifier_features(model, split.test)
    tree = fit_surrogate_tree(X_train, _labels(split.train), args.max_depth, args.seed, args.criterion,
                              feature_names=model.feature_names, class_names=list(CLASS_NAMES))
    tree_report = compute_metrics(tree.predict(X_test), _labels(split.test))
    mlp_acc = float(np.mean(predict_features(model, X_test).predicted_class == _labels(split.test)))
    out_dir = Path(args.out_dir)
    exported = export_tree(tree)
    write_json(out_dir / "tree.json", exported)
    (out_dir / "tree.txt").write_text(exported["text"], encoding="utf-8")
    save_tree(tree, out_dir / "tree.joblib")
    tree_report.write(out_dir / "tree-metrics.json", out_dir / "tree-confusion.csv")
    attribution = explain_tree(tree, X_test)
    write_json(out_dir / "tree-attribution.json", attribution)
    if not args.no_plots:
        from .plots import plot_surrogate_tree
        plot_surrogate_tree(tree, out_dir / "tree.png")
    m = _manifest("tree", argv, data_dir, architecture=model.spec.name, seeds={"split": args.seed, "tree": args.seed},
                  hyperparameters={"max_depth": args.max_depth, "criterion": args.criterion})
    m.add_artifact(out_dir / "tree.json")
    m.write(out_dir / "experiment.json")
    print(exported["text"], end="")
    print(f"tree accuracy={tree_report.accuracy:.4f} (MLP {mlp_acc:.4f}); "
          f"top feature: {attribution['top_features'][0]['feature']} [{attribution['method']}]")
    return 0


def cmd_plot(args, argv) -> int:
    from . import plots

    out = Path(args.out)
    if args.kind == "loss":
        traces = {}
        for path in args.checkpoint:
            try:
                model = load_classifier(path)
                traces[model.spec.name] = model.loss_trace
            except CsiHarError:
                vae = load_vae(path)
                traces[vae.name] = vae.loss_trace
        plots.plot_loss_traces(traces, out)
    elif args.kind == "reconstruction":
        if not args.data:
            raise CsiHarError("plot reconstruction needs --data")
        _, split, _, _, _ = _load_split(args)
        vae = load_vae(args.checkpoint[0])
        window = split.test[args.index]
        values = window.values if vae.antenna is None else window.select_antenna(vae.antenna).values
        plots.plot_reconstruction(values, reconstruct(vae, window), out, title=f"{vae.name} {window.label.value}")
    else:  # scatter
        frame = pd.read_csv(args.checkpoint[0])
        plots.plot_latent_scatter(frame, out)
    print(f"wrote {out}")
    return 0


# ---------- parser ----------
def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="csihar", description="Uncertainty-aware Wi-Fi CSI activity recognition.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("--log-level", default=None)
    ap.add_argument("--replay", metavar="MANIFEST", help="re-run the argv recorded in an experiment manifest")
    sub = ap.add_subparsers(dest="command")

    p = sub.add_parser("synth", help="generate a synthetic activity suite")
    p.add_argument("--out", required=True)
    p.add_argument("--duration", type=float, default=80.0)
    p.add_argument("--fps", type=float, default=150.0)
    p.add_argument("--subcarriers", type=int, default=2048)
    p.add_argument("--antennas", type=int, default=4)
    p.add_argument("--noise-std", type=float, default=0.02)
    p.add_argument("--reflectors", type=int, default=6)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", help="compute and store the dataset normalization constant")
    p.add_argument("--data", required=True)
    p.add_argument("--from-npy", default=None, help="convert <activity>.npy arrays into --data first")
    p.add_argument("--fps", type=float, default=150.0)
    p.add_argument("--norm-constant", type=float, default=None, help="reuse a constant from another dataset")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("train-vae", help="train one VAE")
    _add_data_args(p)
    p.add_argument("--antenna", choices=["1", "2", "3", "4", "all"], required=True)
    p.add_argument("--latent-dim", type=int, choices=[4, 6], default=4)
    p.add_argument("--preset", choices=["desk", "full", "tiny"], default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_vae)

    p = sub.add_parser("encode", help="export latent moments of a split")
    _add_data_args(p)
    p.add_argument("--vae", required=True)
    p.add_argument("--split", choices=["train", "test", "ood", "all"], default="test")
    p.add_argument("--scatter", action="store_true", help="also write the (mu0, mu1) scatter CSV + plot")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("train-clf", help="train an evidential classifier on frozen VAEs")
    _add_data_args(p)
    p.add_argument("--arch", required=True, help="no-fusing-1..4, early-fusing, early-fusing-3d, delayed-fusing")
    p.add_argument("--vae", action="append", metavar="KEY=PATH", help="e.g. A1=models/vae-A1.ckpt")
    p.add_argument("--vae-dir", default=None, help="directory holding vae-<KEY>.ckpt files")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_clf)

    for name, func, helptext in (("eval", cmd_eval, "test-set metrics"),
                                 ("ood", cmd_ood, "OOD report on the held-out activity"),
                                 ("tree", cmd_tree, "surrogate decision tree")):
        p = sub.add_parser(name, help=helptext)
        _add_data_args(p)
        p.add_argument("--model", required=True)
        p.add_argument("--out-dir", required=True)
        p.add_argument("--no-plots", action="store_true")
        if name == "ood":
            p.add_argument("--mode", choices=["alpha", "evidence"], default="alpha")
            p.add_argument("--per-class", action="store_true")
        if name == "tree":
            p.add_argument("--max-depth", type=int, default=3)
            p.add_argument("--criterion", choices=["gini", "entropy"], default="gini")
        p.set_defaults(func=func)

    p = sub.add_parser("plot", help="loss traces, reconstructions, latent scatter")
    p.add_argument("kind", choices=["loss", "reconstruction", "scatter"])
    p.add_argument("checkpoint", nargs="+", help="checkpoint(s), or a scatter CSV for kind=scatter")
    p.add_argument("--data", default=None)
    p.add_argument("--experiment", default="full")
    p.add_argument("--window-seconds", type=float, default=None)
    p.add_argument("--stride", type=int, default=None)
    p.add_argument("--test-fraction", type=float, default=None)
    p.add_argument("--split-policy", choices=[s.value for s in SplitPolicy], default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--index", type=int, default=0, help="test window to reconstruct")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plot)
    return ap


def main(argv: Optional[List[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    settings.configure_logging(args.log_level)

    try:
        if args.replay:
            manifest = ExperimentManifest.read(args.replay)
            log.info("[replay] %s: %s", manifest.stage, " ".join(manifest.argv))
            return main(manifest.argv)
        if not args.command:
            parser.print_usage(sys.stderr)
            return 2
        return args.func(args, argv)
    except (CsiHarError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
