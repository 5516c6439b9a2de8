# src/analysis.py
"""
Evaluation: classification metrics, OOD separation by Dirichlet strength,
latent-space scatter exports.
"""
from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from sklearn.metrics import confusion_matrix, precision_recall_fscore_support, roc_auc_score

from .common.utils import write_json
from .csi_data import CLASS_NAMES, ActivityLabel, CsiWindow
from .errors import ContractError, DimensionError, InsufficientDataError
from .evidential import DirichletOutput

log = logging.getLogger("csihar.analysis")


# ---------- classification metrics ----------
@dataclass(frozen=True, eq=False)
class MetricsReport:
    accuracy: float
    precision: float                       # macro
    recall: float
    f1: float
    confusion_matrix: np.ndarray           # K x K, rows = true class
    per_class: Dict[str, Dict[str, float]]
    class_names: Tuple[str, ...]
    undefined: Tuple[str, ...] = ()        # classes with a zero precision/recall denominator, reported as 0

    def row(self, name: str) -> str:
        return f"{name:<18} {self.accuracy:8.4f} {self.precision:9.4f} {self.recall:8.4f} {self.f1:8.4f}"

    @staticmethod
    def header() -> str:
        return f"{'architecture':<18} {'accuracy':>8} {'precision':>9} {'recall':>8} {'f1':>8}"

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "confusion_matrix": self.confusion_matrix.tolist(),
            "per_class": self.per_class,
            "class_names": list(self.class_names),
            "undefined": list(self.undefined),
        }

    def write(self, json_path: str | os.PathLike, csv_path: Optional[str | os.PathLike] = None) -> Path:
        out = write_json(json_path, self.to_dict())
        if csv_path is not None:
            frame = pd.DataFrame(self.confusion_matrix, index=list(self.class_names), columns=list(self.class_names))
            frame.index.name = "true\\predicted"
            Path(csv_path).parent.mkdir(parents=True, exist_ok=True)
            frame.to_csv(csv_path, lineterminator="\n")
        return out


def compute_metrics(predictions: Sequence[int], labels: Sequence[int],
                    num_classes: int = len(CLASS_NAMES),
                    class_names: Optional[Sequence[str]] = None) -> MetricsReport:
    """
    Macro averages run over the classes that occur in labels or predictions;
    the confusion matrix always spans all num_classes.
    """
    y_pred = np.asarray(predictions, dtype=np.int64).ravel()
    y_true = np.asarray(labels, dtype=np.int64).ravel()
    if y_pred.shape != y_true.shape:
        raise ContractError(f"{y_pred.size} predictions but {y_true.size} labels")
    if y_true.size == 0:
        raise ContractError("no predictions to score")
    for name, arr in (("predictions", y_pred), ("labels", y_true)):
        if arr.min() < 0 or arr.max() >= num_classes:
            raise ContractError(f"{name} must be class indices in [0, {num_classes}), got {arr.min()}..{arr.max()}")
    if class_names is None:
        class_names = CLASS_NAMES[:num_classes] if num_classes <= len(CLASS_NAMES) else [str(i) for i in range(num_classes)]
    names = tuple(class_names)

    all_classes = list(range(num_classes))
    cm = confusion_matrix(y_true, y_pred, labels=all_classes)
    present = sorted(set(y_true.tolist()) | set(y_pred.tolist()))
    p, r, f, s = precision_recall_fscore_support(y_true, y_pred, labels=present, zero_division=0)

    per_class: Dict[str, Dict[str, float]] = {}
    undefined: List[str] = []
    for i, c in enumerate(present):
        per_class[names[c]] = {"precision": float(p[i]), "recall": float(r[i]), "f1": float(f[i]), "support": int(s[i])}
        if cm[:, c].sum() == 0 or cm[c, :].sum() == 0:
            undefined.append(names[c])

    return MetricsReport(
        accuracy=float(np.trace(cm) / cm.sum()),
        precision=float(np.mean(p)),
        recall=float(np.mean(r)),
        f1=float(np.mean(f)),
        confusion_matrix=cm,
        per_class=per_class,
        class_names=names,
        undefined=tuple(undefined),
    )


# ---------- OOD ----------
@dataclass(frozen=True, eq=False)
class OodReport:
    in_dist_log_pseudocounts: np.ndarray   # pooled over classes (histograms)
    ood_log_pseudocounts: np.ndarray
    in_dist_top_log_pseudocounts: np.ndarray  # per window, predicted class (medians)
    ood_top_log_pseudocounts: np.ndarray
    mean_strength_in: float
    mean_strength_ood: float
    auroc: float                           # OOD positive, score = -log S
    threshold: Optional[float] = None      # on log S; flag OOD when log S <= threshold
    detection_rate_at_threshold: Optional[float] = None
    false_alarm_rate: Optional[float] = None
    mode: str = "alpha"
    per_class_in: Dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def median_log_in(self) -> float:
        return float(np.median(self.in_dist_top_log_pseudocounts))

    @property
    def median_log_ood(self) -> float:
        return float(np.median(self.ood_top_log_pseudocounts))

    def to_dict(self) -> dict:
        def q(a: np.ndarray) -> dict:
            return {k: float(v) for k, v in zip(("p05", "p25", "p50", "p75", "p95"),
                                                 np.quantile(a, [0.05, 0.25, 0.5, 0.75, 0.95]))}
        return {
            "mode": self.mode,
            "mean_strength_in": self.mean_strength_in,
            "mean_strength_ood": self.mean_strength_ood,
            "median_log_in": self.median_log_in,
            "median_log_ood": self.median_log_ood,
            "auroc": self.auroc,
            "threshold": self.threshold,
            "detection_rate_at_threshold": self.detection_rate_at_threshold,
            "false_alarm_rate": self.false_alarm_rate,
            "in_dist_quantiles": q(self.in_dist_log_pseudocounts),
            "ood_quantiles": q(self.ood_log_pseudocounts),
            "n_in": int(self.in_dist_top_log_pseudocounts.size),
            "n_ood": int(self.ood_top_log_pseudocounts.size),
        }

    def write(self, json_path: str | os.PathLike, csv_path: Optional[str | os.PathLike] = None) -> Path:
        out = write_json(json_path, self.to_dict())
        if csv_path is not None:
            frame = pd.concat([
                pd.DataFrame({"set": "in_distribution", "log_pseudocount": self.in_dist_log_pseudocounts}),
                pd.DataFrame({"set": "ood", "log_pseudocount": self.ood_log_pseudocounts}),
            ], ignore_index=True)
            Path(csv_path).parent.mkdir(parents=True, exist_ok=True)
            frame.to_csv(csv_path, index=False, lineterminator="\n")
        return out


def _log_pseudocounts(output: DirichletOutput, mode: str) -> np.ndarray:
    if mode == "alpha":
        return np.log(output.alpha)
    if mode == "evidence":
        # zero evidence maps to log(1e-12) instead of -inf
        return np.log(np.maximum(output.evidence, 1e-12))
    raise ContractError(f"mode must be 'alpha' or 'evidence', got {mode!r}")


def _pick_threshold(log_s_in: np.ndarray, log_s_ood: np.ndarray, seed: int) -> Tuple[float, float, float]:
    """
    Threshold on log S maximizing balanced accuracy on a seeded half of each
    set; detection / false-alarm rates are measured on the other half.
    """
    rng = np.random.default_rng(seed)

    def halves(a: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        perm = rng.permutation(a.size)
        cut = max(1, a.size // 2)
        val, held = a[perm[:cut]], a[perm[cut:]]
        return val, (held if held.size else a)

    val_in, held_in = halves(log_s_in)
    val_ood, held_ood = halves(log_s_ood)
    candidates = np.unique(np.concatenate([val_in, val_ood]))
    tpr = (val_ood[None, :] <= candidates[:, None]).mean(axis=1)
    tnr = (val_in[None, :] > candidates[:, None]).mean(axis=1)
    best = int(np.argmax((tpr + tnr) / 2.0))          # first maximum = lowest threshold
    thr = float(candidates[best])
    return thr, float(np.mean(held_ood <= thr)), float(np.mean(held_in <= thr))


def ood_report_from_outputs(in_dist: DirichletOutput, ood: DirichletOutput, mode: str = "alpha",
                            choose_threshold: bool = True, seed: int = 0,
                            per_class: bool = False) -> OodReport:
    a_in, a_ood = np.atleast_2d(in_dist.alpha), np.atleast_2d(ood.alpha)
    if a_in.shape[0] == 0 or a_ood.shape[0] == 0:
        raise InsufficientDataError("OOD report needs non-empty in-distribution and OOD sets")
    s_in, s_ood = np.atleast_1d(in_dist.strength), np.atleast_1d(ood.strength)
    log_s_in, log_s_ood = np.log(s_in), np.log(s_ood)

    scores = np.concatenate([-log_s_in, -log_s_ood])
    truth = np.concatenate([np.zeros(s_in.size), np.ones(s_ood.size)])
    auroc = float(roc_auc_score(truth, scores))

    thr = det = fa = None
    if choose_threshold:
        thr, det, fa = _pick_threshold(log_s_in, log_s_ood, seed)

    lp_in = np.atleast_2d(_log_pseudocounts(in_dist, mode))
    lp_ood = np.atleast_2d(_log_pseudocounts(ood, mode))
    hist = {}
    if per_class:
        names = CLASS_NAMES if lp_in.shape[1] == len(CLASS_NAMES) else [str(k) for k in range(lp_in.shape[1])]
        hist = {names[k]: lp_in[:, k].copy() for k in range(lp_in.shape[1])}

    report = OodReport(
        in_dist_log_pseudocounts=lp_in.ravel(),
        ood_log_pseudocounts=lp_ood.ravel(),
        # the predicted class holds the largest pseudo-count
        in_dist_top_log_pseudocounts=lp_in.max(axis=1),
        ood_top_log_pseudocounts=lp_ood.max(axis=1),
        mean_strength_in=float(s_in.mean()),
        mean_strength_ood=float(s_ood.mean()),
        auroc=auroc,
        threshold=thr,
        detection_rate_at_threshold=det,
        false_alarm_rate=fa,
        mode=mode,
        per_class_in=hist,
    )
    log.info("[ood] mean S in=%.3f ood=%.3f auroc=%.3f", report.mean_strength_in, report.mean_strength_ood, auroc)
    return report


def ood_report(model, in_dist_windows: Sequence[CsiWindow], ood_windows: Sequence[CsiWindow],
               **kwargs) -> OodReport:
    from .architectures import predict

    if any(not w.label.in_distribution for w in in_dist_windows if isinstance(w, CsiWindow)):
        raise ContractError("in-distribution set contains OOD windows")
    if any(w.label.in_distribution for w in ood_windows if isinstance(w, CsiWindow)):
        raise ContractError("OOD set contains in-distribution windows")
    if not in_dist_windows or not ood_windows:
        raise InsufficientDataError("OOD report needs non-empty in-distribution and OOD sets")
    return ood_report_from_outputs(predict(model, in_dist_windows), predict(model, ood_windows), **kwargs)


# ---------- latent scatter ----------
def _label_name(label) -> str:
    return label.value if isinstance(label, ActivityLabel) else str(label)


def export_latent_scatter(codes, labels: Sequence, csv_path: str | os.PathLike,
                          plot_path: Optional[str | os.PathLike] = None,
                          title: str = "") -> Tuple[Path, Optional[Path]]:
    """
    (mu_0, mu_1, label) rows, one file per VAE. codes is a sequence of
    LatentCode or a (n, J/2) mu array.
    """
    if isinstance(codes, np.ndarray):
        mu = np.atleast_2d(codes) if codes.size else None
    else:
        mu = np.array([np.asarray(c.mu) for c in codes]) if len(codes) else None
    if mu is not None and mu.size and mu.shape[1] < 2:
        raise DimensionError(f"scatter needs at least 2 latent Gaussians, got {mu.shape[1]}")
    if mu is not None and mu.shape[0] != len(labels):
        raise ContractError(f"{mu.shape[0]} codes but {len(labels)} labels")

    n = 0 if mu is None else mu.shape[0]
    frame = pd.DataFrame({
        "mu0": mu[:, 0] if n else np.zeros(0),
        "mu1": mu[:, 1] if n else np.zeros(0),
        "label": [_label_name(l) for l in labels] if n else [],
    })
    csv_path = Path(csv_path)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(csv_path, index=False, lineterminator="\n")

    if n == 0 or plot_path is None:
        return csv_path, None
    from .plots import plot_latent_scatter
    return csv_path, plot_latent_scatter(frame, plot_path, title=title)
