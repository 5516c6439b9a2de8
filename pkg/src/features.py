# src/features.py
"""
Classifier features from VAE latent codes.

Each VAE contributes its posterior moments in a fixed order,
[mu_0, mu_1, ..., sigma_0, sigma_1, ...], and VAEs are concatenated in
canonical antenna order. Names follow the mu/sigma convention with the
latent index as subscript and the 1-based antenna as superscript: "μ₀¹".
"""
from __future__ import annotations

from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import ContractError

_SUB = str.maketrans("0123456789", "₀₁₂₃₄₅₆₇₈₉")
_SUP = str.maketrans("0123456789", "⁰¹²³⁴⁵⁶⁷⁸⁹")


def latent_features(codes: Sequence, expected_dim: Optional[int] = None) -> np.ndarray:
    """One feature vector from 1 (single/stacked VAE) or 4 (per-antenna VAEs) LatentCodes."""
    if not codes:
        raise ContractError("need at least one latent code")
    parts = []
    for code in codes:
        parts.append(np.asarray(code.mu, dtype=np.float64))
        parts.append(np.asarray(code.sigma, dtype=np.float64))
    vec = np.concatenate(parts)
    if expected_dim is not None and vec.size != expected_dim:
        raise ContractError(f"{len(codes)} codes give {vec.size} features, expected {expected_dim}")
    return vec


def latent_feature_matrix(moments: Sequence[Tuple[np.ndarray, np.ndarray]]) -> np.ndarray:
    """Batch form: moments[v] = (mu (n, J/2), sigma (n, J/2)) for VAE v -> (n, total)."""
    if not moments:
        raise ContractError("need at least one VAE's moments")
    n = moments[0][0].shape[0]
    cols = []
    for mu, sigma in moments:
        if mu.shape[0] != n or sigma.shape != mu.shape:
            raise ContractError("latent moment arrays are not aligned")
        cols += [mu, sigma]
    return np.concatenate(cols, axis=1).astype(np.float64)


def feature_names(latent_sizes: Sequence[int], antennas: Sequence[Optional[int]]) -> List[str]:
    """antennas are 0-based; None marks a stacked-channel VAE (no superscript)."""
    if len(latent_sizes) != len(antennas):
        raise ContractError("latent_sizes and antennas must align")
    names: List[str] = []
    for size, antenna in zip(latent_sizes, antennas):
        sup = "" if antenna is None else str(antenna + 1).translate(_SUP)
        for symbol in ("μ", "σ"):
            names += [f"{symbol}{str(i).translate(_SUB)}{sup}" for i in range(size)]
    return names
