# src/architectures.py
"""
The seven HAR architectures: frozen VAE encoders feeding an evidential MLP.

    no-fusing-N      VAE-AN (one antenna)            4 -> 4 -> 8 -> 5
    early-fusing     VAE-F (antennas as channels)    4 -> 4 -> 8 -> 5
    early-fusing-3d  VAE-F-3D                        6 -> 4 -> 8 -> 5
    delayed-fusing   VAE-A1..A4, codes concatenated 16 -> 16 -> 8 -> 5

Hyperparameters come from config/architectures.yaml. VAEs are trained first
and never updated here; inference uses posterior moments, never samples.
"""
from __future__ import annotations

import logging
import os
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import torch
from torch import nn
from torch.utils.data import DataLoader, TensorDataset

from . import settings
from .common.utils import deterministic_torch, seeded_generator, sha256_file
from .csi_data import NUM_CLASSES, CsiWindow
from .errors import CheckpointError, ConfigurationError, ContractError, TrainingDivergedError
from .evidential import DirichletOutput, EdlLossConfig, dirichlet_from_evidence, edl_objective
from .features import feature_names, latent_feature_matrix
from .storage import load_checkpoint, load_state_arrays, save_checkpoint, state_arrays
from .vae import VaeModel, encode_batch, load_vae

log = logging.getLogger("csihar.arch")


class ArchitectureKind(str, Enum):
    NO_FUSING = "no_fusing"
    EARLY_FUSING = "early_fusing"
    EARLY_FUSING_3D = "early_fusing_3d"
    DELAYED_FUSING = "delayed_fusing"


# kind -> (mlp_input_dim, hidden_dims)
_LAYOUT = {
    ArchitectureKind.NO_FUSING: (4, (4, 8)),
    ArchitectureKind.EARLY_FUSING: (4, (4, 8)),
    ArchitectureKind.EARLY_FUSING_3D: (6, (4, 8)),
    ArchitectureKind.DELAYED_FUSING: (16, (16, 8)),
}

_ACTIVATIONS = {"relu": nn.ReLU, "softplus": nn.Softplus}


def _kind_for(name: str) -> Tuple[ArchitectureKind, Optional[int]]:
    if name.startswith("no-fusing-"):
        return ArchitectureKind.NO_FUSING, int(name.rsplit("-", 1)[1]) - 1
    try:
        return ArchitectureKind(name.replace("-", "_")), None
    except ValueError:
        raise ConfigurationError(f"unknown architecture {name!r}") from None


@dataclass(frozen=True)
class ArchitectureSpec:
    name: str
    kind: ArchitectureKind
    vaes: Tuple[str, ...]                  # "A1".."A4", "F", "F-3D"
    mlp_input_dim: int
    hidden_dims: Tuple[int, ...]
    learning_rate: float
    annealing_step: int
    antenna: Optional[int] = None          # 0-based, no-fusing only
    output_dim: int = NUM_CLASSES
    hidden_activation: str = "relu"
    output_activation: str = "softplus"
    epochs: int = 50
    batch_size: int = 128
    standardize_features: bool = True
    seed: int = 0

    def __post_init__(self):
        dim, hidden = _LAYOUT[self.kind]
        if self.mlp_input_dim != dim or tuple(self.hidden_dims) != hidden:
            raise ConfigurationError(
                f"{self.name}: {self.kind.value} needs {dim} -> {hidden}, got {self.mlp_input_dim} -> {tuple(self.hidden_dims)}"
            )
        if self.output_activation != "softplus":
            raise ConfigurationError("evidence must be non-negative: output activation has to be softplus")
        if self.hidden_activation not in _ACTIVATIONS:
            raise ConfigurationError(f"unknown activation {self.hidden_activation!r}")
        expected_vaes = 4 if self.kind is ArchitectureKind.DELAYED_FUSING else 1
        if len(self.vaes) != expected_vaes:
            raise ConfigurationError(f"{self.name}: expects {expected_vaes} VAEs, table lists {len(self.vaes)}")

    @property
    def loss_config(self) -> EdlLossConfig:
        return EdlLossConfig(annealing_step=self.annealing_step, num_classes=self.output_dim)

    def to_dict(self) -> Dict[str, Any]:
        d = asdict(self)
        d["kind"] = self.kind.value
        d["vaes"] = list(self.vaes)
        d["hidden_dims"] = list(self.hidden_dims)
        return d

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> "ArchitectureSpec":
        data = dict(raw)
        data["kind"] = ArchitectureKind(data["kind"])
        data["vaes"] = tuple(data["vaes"])
        data["hidden_dims"] = tuple(int(v) for v in data["hidden_dims"])
        return cls(**data)


def architecture_names() -> List[str]:
    return list((settings.load_architecture_table().get("architectures") or {}).keys())


def load_architecture(name: str, **overrides) -> ArchitectureSpec:
    table = settings.load_architecture_table()
    entries = table.get("architectures") or {}
    if name not in entries:
        raise ConfigurationError(f"unknown architecture {name!r}; known: {', '.join(entries)}")
    kind, antenna = _kind_for(name)
    raw: Dict[str, Any] = dict(table.get("defaults") or {})
    raw.update(entries[name])
    raw.update({k: v for k, v in overrides.items() if v is not None})
    raw.update(name=name, kind=kind, antenna=antenna,
               vaes=tuple(raw["vaes"]), hidden_dims=tuple(raw["hidden_dims"]))
    return ArchitectureSpec(**raw)


def vae_key(model: VaeModel) -> str:
    return model.name[len("VAE-"):]


class EvidentialMlp(nn.Module):
    """Dense ReLU stack with a softplus evidence head; optional input standardization."""

    def __init__(self, spec: ArchitectureSpec):
        super().__init__()
        layers: List[nn.Module] = []
        width = spec.mlp_input_dim
        for h in spec.hidden_dims:
            layers += [nn.Linear(width, h), _ACTIVATIONS[spec.hidden_activation]()]
            width = h
        layers += [nn.Linear(width, spec.output_dim), nn.Softplus()]
        self.layers = nn.Sequential(*layers)
        self.register_buffer("feature_mean", torch.zeros(spec.mlp_input_dim))
        self.register_buffer("feature_std", torch.ones(spec.mlp_input_dim))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.layers((x - self.feature_mean) / self.feature_std)


@dataclass(eq=False)
class ClassifierModel:
    mlp: EvidentialMlp
    spec: ArchitectureSpec
    vaes: Tuple[VaeModel, ...]
    loss_trace: List[float] = field(default_factory=list)

    @property
    def feature_names(self) -> List[str]:
        return feature_names([v.config.latent_size for v in self.vaes], [v.antenna for v in self.vaes])


def build_architecture(spec: ArchitectureSpec | str,
                       vaes: Sequence[VaeModel] | Mapping[str, VaeModel]) -> ClassifierModel:
    if isinstance(spec, str):
        spec = load_architecture(spec)
    available = dict(vaes) if isinstance(vaes, Mapping) else {vae_key(v): v for v in vaes}
    if not isinstance(vaes, Mapping) and len(available) != len(vaes):
        raise ConfigurationError("duplicate VAEs supplied")
    missing = [k for k in spec.vaes if k not in available]
    if missing:
        raise ConfigurationError(f"{spec.name} needs VAE-{', VAE-'.join(missing)}")
    if not isinstance(vaes, Mapping) and len(vaes) != len(spec.vaes):
        raise ConfigurationError(f"{spec.name} takes {len(spec.vaes)} VAEs, got {len(vaes)}")
    chosen = tuple(available[k] for k in spec.vaes)
    if sum(v.config.latent_dim for v in chosen) != spec.mlp_input_dim:
        raise ConfigurationError(
            f"{spec.name}: VAE latents sum to {sum(v.config.latent_dim for v in chosen)}, MLP takes {spec.mlp_input_dim}"
        )
    shapes = {tuple(v.config.input_shape[:2]) for v in chosen}
    if len(shapes) != 1:
        raise ConfigurationError(f"{spec.name}: VAEs disagree on window size {sorted(shapes)}")
    torch.manual_seed(int(spec.seed))
    return ClassifierModel(mlp=EvidentialMlp(spec), spec=spec, vaes=chosen)


def classifier_features(model: ClassifierModel, windows: Sequence[CsiWindow | np.ndarray]) -> np.ndarray:
    """(n, mlp_input_dim) raw latent moments, before standardization."""
    return latent_feature_matrix([encode_batch(v, windows) for v in model.vaes])


def _labels(windows: Sequence[CsiWindow], labels) -> np.ndarray:
    if labels is None:
        labels = [w.label.class_index for w in windows]
    y = np.asarray(labels, dtype=np.int64)
    if y.shape != (len(windows),):
        raise ContractError(f"{len(windows)} windows but {y.shape} labels")
    if np.any(y < 0) or np.any(y >= NUM_CLASSES):
        raise ContractError("classifier training takes in-distribution labels only")
    return y


def train_classifier(model: ClassifierModel, windows: Sequence[CsiWindow | np.ndarray],
                     labels: Optional[Sequence[int]] = None,
                     features: Optional[np.ndarray] = None) -> ClassifierModel:
    """
    Adam on the annealed EDL loss (averaged per batch); lambda_t advances once
    per epoch starting at t = 0. Precomputed features may be passed to skip
    re-encoding.
    """
    spec = model.spec
    y = _labels(windows, labels)
    X = classifier_features(model, windows) if features is None else np.asarray(features, dtype=np.float64)
    if X.shape != (len(y), spec.mlp_input_dim):
        raise ContractError(f"feature matrix {X.shape} does not match {len(y)} x {spec.mlp_input_dim}")

    deterministic_torch(spec.seed, settings.THREADS)
    if spec.standardize_features:
        std = X.std(axis=0)
        model.mlp.feature_mean.copy_(torch.from_numpy(X.mean(axis=0)).float())
        model.mlp.feature_std.copy_(torch.from_numpy(np.where(std > 1e-12, std, 1.0)).float())

    data = TensorDataset(torch.from_numpy(X).float(), torch.eye(spec.output_dim)[torch.from_numpy(y)])
    loader = DataLoader(data, batch_size=spec.batch_size, shuffle=True,
                        generator=seeded_generator(spec.seed), num_workers=0)
    optimizer = torch.optim.Adam(model.mlp.parameters(), lr=spec.learning_rate)
    loss_cfg = spec.loss_config

    model.mlp.train()
    for t in range(spec.epochs):
        total, correct = 0.0, 0
        for xb, yb in loader:
            evidence = model.mlp(xb)
            loss = edl_objective(evidence, yb, t, loss_cfg) / xb.shape[0]
            if not torch.isfinite(loss):
                model.loss_trace.append(float("nan"))
                raise TrainingDivergedError(f"{spec.name} diverged in epoch {t + 1}", model.loss_trace)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            total += loss.item() * xb.shape[0]
            correct += int((evidence.argmax(dim=1) == yb.argmax(dim=1)).sum())
        model.loss_trace.append(total / len(y))
        log.info("[train-clf] %s epoch %d/%d loss=%.4f acc=%.3f",
                 spec.name, t + 1, spec.epochs, model.loss_trace[-1], correct / len(y))
    model.mlp.eval()
    return model


def predict_features(model: ClassifierModel, features: np.ndarray) -> DirichletOutput:
    X = np.asarray(features, dtype=np.float32).reshape(-1, model.spec.mlp_input_dim)
    with torch.no_grad():
        evidence = model.mlp.eval()(torch.from_numpy(X)).double().numpy()
    return dirichlet_from_evidence(evidence)


def predict(model: ClassifierModel, windows: Sequence[CsiWindow | np.ndarray]) -> DirichletOutput:
    """Batched Dirichlet opinions for full stacked windows."""
    return predict_features(model, classifier_features(model, windows))


# ---------- persistence ----------
def save_classifier(model: ClassifierModel, path: str | os.PathLike,
                    vae_paths: Mapping[str, str | os.PathLike]) -> Path:
    """vae_paths maps VAE key ("A1", "F", ...) to its checkpoint; stored relative to path."""
    p = Path(path)
    refs = {}
    for key in model.spec.vaes:
        if key not in vae_paths:
            raise CheckpointError(f"no checkpoint path for VAE-{key}")
        vp = Path(vae_paths[key])
        refs[key] = {"path": os.path.relpath(vp.resolve(), p.resolve().parent), "sha256": sha256_file(vp)}
    meta = {"architecture": model.spec.to_dict(), "vaes": refs,
            "loss_trace": [float(v) for v in model.loss_trace]}
    return save_checkpoint(p, "classifier", meta, state_arrays(model.mlp))


def load_classifier(path: str | os.PathLike) -> ClassifierModel:
    p = Path(path)
    meta, params = load_checkpoint(p, kind="classifier")
    spec = ArchitectureSpec.from_dict(meta["architecture"])
    vaes = []
    for key in spec.vaes:
        ref = meta["vaes"][key]
        vp = (p.parent / ref["path"]).resolve()
        if not vp.is_file():
            raise CheckpointError(f"VAE-{key} checkpoint missing: {vp}")
        if sha256_file(vp) != ref["sha256"]:
            raise CheckpointError(f"VAE-{key} checkpoint {vp} changed since the classifier was trained")
        vaes.append(load_vae(vp))
    mlp = EvidentialMlp(spec)
    load_state_arrays(mlp, params)
    mlp.eval()
    return ClassifierModel(mlp=mlp, spec=spec, vaes=tuple(vaes), loss_trace=list(meta.get("loss_trace", [])))
