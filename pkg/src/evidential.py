# src/evidential.py
"""
Evidential classification head: evidence -> Dirichlet opinion, and the
annealed EDL loss

    L = sum_i [log S_i - log alpha_i,y]  +  lambda_t * sum_i KL[Dir(alpha~_i) || Dir(1)]

with lambda_t = min(1, t / annealing_step), t counted from 0.

The array API works on the last axis, so every function accepts a single
vector (K,) or a batch (N, K). Special functions run in torch float64; the
same code path is used for training (differentiable) and reporting.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch

from .errors import ConfigurationError, ContractError, DomainError, RangeError


@dataclass(frozen=True, eq=False)
class DirichletOutput:
    evidence: np.ndarray          # (..., K), >= 0
    alpha: np.ndarray             # evidence + 1
    belief: np.ndarray            # evidence / S
    uncertainty: np.ndarray       # K / S, shape (...)
    strength: np.ndarray          # sum(alpha), shape (...)

    @property
    def num_classes(self) -> int:
        return int(self.alpha.shape[-1])

    @property
    def predicted_class(self) -> np.ndarray:
        # np.argmax returns the first maximum: ties go to the lowest class index
        return np.argmax(self.belief, axis=-1)

    def __len__(self) -> int:
        return 1 if self.alpha.ndim == 1 else int(self.alpha.shape[0])

    def __getitem__(self, i) -> "DirichletOutput":
        if self.alpha.ndim == 1:
            raise TypeError("single DirichletOutput is not indexable")
        return DirichletOutput(self.evidence[i], self.alpha[i], self.belief[i],
                               self.uncertainty[i], self.strength[i])


@dataclass(frozen=True)
class EdlLossConfig:
    annealing_step: int = 22
    num_classes: int = 5

    def __post_init__(self):
        if int(self.annealing_step) < 1:
            raise ConfigurationError(f"annealing_step must be >= 1, got {self.annealing_step}")
        if int(self.num_classes) < 2:
            raise ConfigurationError("need at least 2 classes")


def dirichlet_from_evidence(evidence) -> DirichletOutput:
    e = np.asarray(evidence, dtype=np.float64)
    if e.ndim == 0 or e.shape[-1] < 1:
        raise ContractError("evidence must be a vector (or batch of vectors)")
    if not np.all(np.isfinite(e)):
        raise DomainError("evidence must be finite")
    if np.any(e < 0):
        raise DomainError("evidence must be non-negative")
    alpha = e + 1.0
    strength = alpha.sum(axis=-1)
    k = e.shape[-1]
    return DirichletOutput(
        evidence=e,
        alpha=alpha,
        belief=e / strength[..., None],
        uncertainty=k / strength,
        strength=strength,
    )


def expected_probability(output: DirichletOutput) -> np.ndarray:
    """Dirichlet mean alpha / S."""
    return output.alpha / output.strength[..., None]


def one_hot(indices, num_classes: int) -> np.ndarray:
    idx = np.asarray(indices, dtype=np.int64)
    if np.any(idx < 0) or np.any(idx >= num_classes):
        raise RangeError(f"class indices must lie in [0, {num_classes})")
    return np.eye(num_classes, dtype=np.float64)[idx]


def _check_one_hot(y: np.ndarray, k: int) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    if y.shape[-1] != k:
        raise ContractError(f"label vector has length {y.shape[-1]}, expected {k}")
    if not (np.all((y == 0) | (y == 1)) and np.all(y.sum(axis=-1) == 1)):
        raise ContractError("labels must be one-hot")
    return y


def _as_one_hot(labels, k: int) -> np.ndarray:
    arr = np.asarray(labels)
    if arr.ndim >= 1 and arr.shape[-1] == k and arr.dtype.kind == "f":
        return _check_one_hot(arr, k)
    return one_hot(arr, k)


# ---------- tensor core ----------
def log_loss_terms(alpha: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
    strength = alpha.sum(dim=-1, keepdim=True)
    return torch.sum(y * (torch.log(strength) - torch.log(alpha)), dim=-1)


def kl_uniform_terms(alpha_tilde: torch.Tensor) -> torch.Tensor:
    k = alpha_tilde.shape[-1]
    s = alpha_tilde.sum(dim=-1)
    return (
        torch.lgamma(s)
        - math.lgamma(k)
        - torch.lgamma(alpha_tilde).sum(dim=-1)
        + torch.sum((alpha_tilde - 1.0) * (torch.digamma(alpha_tilde) - torch.digamma(s)[..., None]), dim=-1)
    )


def edl_objective(evidence: torch.Tensor, y: torch.Tensor, t: int, config: EdlLossConfig) -> torch.Tensor:
    """Differentiable batch loss; y is one-hot (N, K)."""
    alpha = evidence + 1.0
    lam = annealing_coefficient(t, config.annealing_step)
    loss = log_loss_terms(alpha, y).sum()
    if lam > 0:
        alpha_tilde = y + (1.0 - y) * alpha
        loss = loss + lam * kl_uniform_terms(alpha_tilde).sum()
    return loss


def _to_float(value: torch.Tensor):
    arr = value.detach().numpy()
    return float(arr) if arr.ndim == 0 else arr


# ---------- array API ----------
def edl_log_loss(output: DirichletOutput, y):
    y = _check_one_hot(y, output.num_classes)
    return _to_float(log_loss_terms(torch.from_numpy(output.alpha), torch.from_numpy(y)))


def misleading_alpha(output: DirichletOutput, y) -> np.ndarray:
    y = _check_one_hot(y, output.num_classes)
    return y + (1.0 - y) * output.alpha


def kl_to_uniform(alpha_tilde):
    a = np.asarray(alpha_tilde, dtype=np.float64)
    if not np.all(np.isfinite(a)):
        raise DomainError("alpha must be finite")
    if np.any(a < 1.0):
        raise DomainError("misleading alpha is >= 1 by construction")
    value = kl_uniform_terms(torch.from_numpy(a))
    # the closed form can dip a few ulps below zero at alpha = 1
    return _to_float(torch.clamp(value, min=0.0))


def annealing_coefficient(t: int, annealing_step: int) -> float:
    if t < 0:
        raise DomainError(f"epoch index must be >= 0, got {t}")
    if annealing_step < 1:
        raise DomainError(f"annealing_step must be >= 1, got {annealing_step}")
    return min(1.0, t / annealing_step)


def total_edl_loss(outputs: DirichletOutput, labels: Sequence[int] | np.ndarray,
                   t: int, config: EdlLossConfig) -> float:
    """labels are class indices or one-hot rows aligned with outputs."""
    evidence = np.atleast_2d(outputs.evidence)
    y = np.atleast_2d(_as_one_hot(labels, outputs.num_classes))
    if y.shape[0] != evidence.shape[0]:
        raise ContractError(f"{evidence.shape[0]} outputs but {y.shape[0]} labels")
    return float(edl_objective(torch.from_numpy(evidence), torch.from_numpy(y), t, config))
