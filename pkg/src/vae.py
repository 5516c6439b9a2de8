# src/vae.py
"""
Convolutional VAE over CSI windows.

Encoder: non-overlapping conv patches (stride = kernel in the default table),
flatten, one dense layer, then mu and log-variance heads. The decoder mirrors
it with transposed convolutions and a linear output (the mean of an isotropic
Gaussian observation model).

latent_dim counts distribution parameters: latent_dim = 4 means two
Gaussians, each with a mu and a sigma.
"""
from __future__ import annotations

import logging
import math
import os
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import torch
from torch import nn
from torch.utils.data import DataLoader, Dataset

from . import settings
from .common.utils import deterministic_torch, seeded_generator
from .csi_data import CsiWindow
from .errors import (
    ConfigurationError,
    ContractError,
    InsufficientDataError,
    NumericError,
    TrainingDivergedError,
)
from .storage import load_checkpoint, load_state_arrays, save_checkpoint, state_arrays

log = logging.getLogger("csihar.vae")


@dataclass(frozen=True)
class ConvLayer:
    kernel: Tuple[int, int]
    stride: Tuple[int, int]
    filters: int


DEFAULT_CONVS = (
    ConvLayer((5, 8), (5, 8), 32),
    ConvLayer((5, 8), (5, 8), 32),
    ConvLayer((2, 4), (2, 4), 32),
)


@dataclass(frozen=True)
class VaeConfig:
    input_shape: Tuple[int, int, int] = (450, 2048, 1)    # frames, subcarriers, channels
    latent_dim: int = 4
    conv_spec: Tuple[ConvLayer, ...] = DEFAULT_CONVS
    dense_width: int = 16
    mc_samples: int = 1
    obs_variance: float = 1.0
    epochs: int = 50
    batch_size: int = 128
    learning_rate: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.latent_dim < 2 or self.latent_dim % 2:
            raise ConfigurationError(f"latent_dim must be even and >= 2, got {self.latent_dim}")
        if self.mc_samples < 1:
            raise ConfigurationError("mc_samples must be >= 1")
        if not self.obs_variance > 0:
            raise ConfigurationError("obs_variance must be positive")
        if len(self.input_shape) != 3 or min(self.input_shape) < 1:
            raise ConfigurationError(f"input_shape must be (frames, subcarriers, channels), got {self.input_shape}")
        if not self.conv_spec:
            raise ConfigurationError("conv_spec needs at least one layer")
        feature_shapes(self)

    @property
    def latent_size(self) -> int:
        return self.latent_dim // 2

    @property
    def channels(self) -> int:
        return int(self.input_shape[2])

    def with_channels(self, channels: int) -> "VaeConfig":
        return replace(self, input_shape=(self.input_shape[0], self.input_shape[1], int(channels)))

    def to_dict(self) -> Dict[str, Any]:
        d = asdict(self)
        d["input_shape"] = list(self.input_shape)
        d["conv_spec"] = [{"kernel": list(c.kernel), "stride": list(c.stride), "filters": c.filters}
                          for c in self.conv_spec]
        return d

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> "VaeConfig":
        data = dict(raw)
        if "input_shape" in data:
            data["input_shape"] = tuple(int(v) for v in data["input_shape"])
        if "conv_spec" in data:
            data["conv_spec"] = tuple(
                ConvLayer(tuple(int(v) for v in c["kernel"]), tuple(int(v) for v in c["stride"]), int(c["filters"]))
                for c in data["conv_spec"]
            )
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigurationError(f"unknown VAE config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_preset(cls, name: str, **overrides) -> "VaeConfig":
        raw = dict(settings.preset_section("vae", name))
        raw.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_dict(raw)


def feature_shapes(config: VaeConfig) -> List[Tuple[int, int]]:
    """Spatial size after each conv, input first: (450, 2048) -> (90, 256) -> (18, 32) -> (9, 8)."""
    h, w = config.input_shape[0], config.input_shape[1]
    chain = [(h, w)]
    for i, layer in enumerate(config.conv_spec):
        (kh, kw), (sh, sw) = layer.kernel, layer.stride
        for size, k, s, axis in ((h, kh, sh, "frames"), (w, kw, sw, "subcarriers")):
            if size < k or (size - k) % s:
                raise ConfigurationError(
                    f"conv {i + 1}: kernel {k} / stride {s} does not tile {size} {axis} exactly"
                )
        h, w = (h - kh) // sh + 1, (w - kw) // sw + 1
        chain.append((h, w))
    return chain


def flat_dim(config: VaeConfig) -> int:
    h, w = feature_shapes(config)[-1]
    return h * w * config.conv_spec[-1].filters


class ConvEncoder(nn.Module):
    def __init__(self, config: VaeConfig):
        super().__init__()
        layers: List[nn.Module] = []
        c_in = config.channels
        for layer in config.conv_spec:
            layers += [nn.Conv2d(c_in, layer.filters, layer.kernel, layer.stride), nn.ReLU()]
            c_in = layer.filters
        self.convs = nn.Sequential(*layers, nn.Flatten())
        self.dense = nn.Sequential(nn.Linear(flat_dim(config), config.dense_width), nn.ReLU())
        self.mu = nn.Linear(config.dense_width, config.latent_size)
        self.logvar = nn.Linear(config.dense_width, config.latent_size)

    def forward(self, x: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        h = self.dense(self.convs(x))
        return self.mu(h), self.logvar(h)


class ConvDecoder(nn.Module):
    def __init__(self, config: VaeConfig):
        super().__init__()
        h, w = feature_shapes(config)[-1]
        last = config.conv_spec[-1].filters
        self.dense = nn.Sequential(nn.Linear(config.latent_size, flat_dim(config)), nn.ReLU(),
                                   nn.Unflatten(1, (last, h, w)))
        layers: List[nn.Module] = []
        specs = list(config.conv_spec)
        for i in range(len(specs) - 1, -1, -1):
            c_out = specs[i - 1].filters if i > 0 else config.channels
            layers.append(nn.ConvTranspose2d(specs[i].filters, c_out, specs[i].kernel, specs[i].stride))
            if i > 0:
                layers.append(nn.ReLU())
        self.deconvs = nn.Sequential(*layers)

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        return self.deconvs(self.dense(z))


class ConvVae(nn.Module):
    def __init__(self, config: VaeConfig):
        super().__init__()
        self.encoder = ConvEncoder(config)
        self.decoder = ConvDecoder(config)


@dataclass(frozen=True, eq=False)
class LatentCode:
    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        if self.mu.shape != self.sigma.shape or self.mu.ndim != 1:
            raise ContractError(f"mu {self.mu.shape} and sigma {self.sigma.shape} must be equal-length vectors")
        if not (np.all(np.isfinite(self.mu)) and np.all(np.isfinite(self.sigma))):
            raise NumericError("latent code has non-finite entries")
        if np.any(self.sigma <= 0):
            raise NumericError("sigma must be strictly positive")


@dataclass(eq=False)
class VaeModel:
    network: ConvVae
    config: VaeConfig
    norm_constant: float = 1.0
    antenna: Optional[int] = None            # 0-based channel of stacked windows; None = all channels
    loss_trace: List[float] = field(default_factory=list)

    @property
    def name(self) -> str:
        if self.antenna is not None:
            return f"VAE-A{self.antenna + 1}"
        return "VAE-F-3D" if self.config.latent_dim == 6 else "VAE-F"


# ---------- tensors ----------
def _window_array(window: CsiWindow | np.ndarray) -> np.ndarray:
    return window.values if isinstance(window, CsiWindow) else np.asarray(window)


def _select(values: np.ndarray, antenna: Optional[int]) -> np.ndarray:
    return values if antenna is None else values[..., antenna:antenna + 1]


def _to_tensor(values: np.ndarray) -> torch.Tensor:
    # (frames, subcarriers, channels) -> (channels, frames, subcarriers)
    return torch.from_numpy(np.ascontiguousarray(np.moveaxis(values, -1, 0), dtype=np.float32))


def _model_input(model: VaeModel, window: CsiWindow | np.ndarray) -> np.ndarray:
    """Accepts either the model's own channel layout or full stacked windows."""
    values = _window_array(window)
    expected = tuple(model.config.input_shape)
    if tuple(values.shape) != expected and model.antenna is not None and values.ndim == 3 \
            and values.shape[:2] == expected[:2] and values.shape[2] > model.antenna:
        values = _select(values, model.antenna)
    if tuple(values.shape) != expected:
        raise ContractError(f"{model.name} expects windows of shape {expected}, got {tuple(values.shape)}")
    return values


class WindowDataset(Dataset):
    def __init__(self, windows: Sequence[CsiWindow | np.ndarray], antenna: Optional[int] = None):
        self.windows = windows
        self.antenna = antenna

    def __len__(self) -> int:
        return len(self.windows)

    def __getitem__(self, i: int) -> torch.Tensor:
        return _to_tensor(_select(_window_array(self.windows[i]), self.antenna))


# ---------- encoder / decoder ----------
def encode_batch(model: VaeModel, windows: Sequence[CsiWindow | np.ndarray],
                 batch_size: int = 256) -> Tuple[np.ndarray, np.ndarray]:
    """(mu, sigma) arrays of shape (n, J/2), order-preserving."""
    k = model.config.latent_size
    if len(windows) == 0:
        return np.zeros((0, k), dtype=np.float32), np.zeros((0, k), dtype=np.float32)
    net = model.network.eval()
    mus, sigmas = [], []
    with torch.no_grad():
        for start in range(0, len(windows), batch_size):
            chunk = [_to_tensor(_model_input(model, w)) for w in windows[start:start + batch_size]]
            mu, logvar = net.encoder(torch.stack(chunk))
            mus.append(mu.numpy())
            sigmas.append(torch.exp(0.5 * logvar).numpy())
    mu, sigma = np.concatenate(mus), np.concatenate(sigmas)
    if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(sigma))):
        raise NumericError(f"{model.name}: encoder produced non-finite activations")
    return mu, sigma


def encode(model: VaeModel, window: CsiWindow | np.ndarray) -> LatentCode:
    mu, sigma = encode_batch(model, [window])
    return LatentCode(mu=mu[0].astype(np.float64), sigma=sigma[0].astype(np.float64))


def encode_dataset(model: VaeModel, windows: Sequence[CsiWindow | np.ndarray]) -> List[LatentCode]:
    mu, sigma = encode_batch(model, windows)
    return [LatentCode(mu=m.astype(np.float64), sigma=s.astype(np.float64)) for m, s in zip(mu, sigma)]


def sample_latent(code: LatentCode, epsilon: np.ndarray) -> np.ndarray:
    eps = np.asarray(epsilon, dtype=np.float64)
    if eps.shape != code.mu.shape:
        raise ContractError(f"epsilon must have length {code.mu.size}, got shape {eps.shape}")
    return code.mu + code.sigma * eps


def decode(model: VaeModel, z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float32)
    if z.shape != (model.config.latent_size,):
        raise ContractError(f"z must have length {model.config.latent_size}, got shape {z.shape}")
    with torch.no_grad():
        out = model.network.eval().decoder(torch.from_numpy(z)[None])[0]
    return np.moveaxis(out.numpy(), 0, -1)


def reconstruct(model: VaeModel, window: CsiWindow | np.ndarray) -> np.ndarray:
    """Decoded posterior mean; clip to [0, 1] only for display."""
    return decode(model, encode(model, window).mu)


# ---------- objective ----------
def gaussian_kl(code: LatentCode) -> float:
    sigma = np.asarray(code.sigma, dtype=np.float64)
    if np.any(sigma <= 0):
        raise NumericError("gaussian_kl needs sigma > 0")
    mu = np.asarray(code.mu, dtype=np.float64)
    var = sigma * sigma
    return float(-0.5 * np.sum(1.0 + np.log(var) - mu * mu - var))


def gaussian_kl_terms(mu: torch.Tensor, logvar: torch.Tensor) -> torch.Tensor:
    return -0.5 * torch.sum(1.0 + logvar - mu.pow(2) - logvar.exp(), dim=-1)


def negative_elbo(network: ConvVae, x: torch.Tensor, epsilon: torch.Tensor,
                  obs_variance: float = 1.0) -> torch.Tensor:
    """
    Per-sample loss, shape (B,). epsilon is (L, B, J/2).
    Reconstruction = mean over the L draws of sum((decode(z) - x)^2) / (2 obs_variance).
    """
    mu, logvar = network.encoder(x)
    sigma = torch.exp(0.5 * logvar)
    rec = torch.zeros(x.shape[0], dtype=x.dtype)
    for eps in epsilon:
        recon = network.decoder(mu + sigma * eps)
        rec = rec + (recon - x).pow(2).flatten(1).sum(dim=1)
    rec = rec / (epsilon.shape[0] * 2.0 * obs_variance)
    return gaussian_kl_terms(mu, logvar) + rec


def elbo_loss(model: VaeModel, window: CsiWindow | np.ndarray, epsilon: np.ndarray) -> float:
    eps = np.asarray(epsilon, dtype=np.float32)
    if eps.ndim == 1:
        eps = eps[None]
    if eps.ndim != 2 or eps.shape[0] < 1 or eps.shape[1] != model.config.latent_size:
        raise ContractError(f"epsilon must be (L >= 1, {model.config.latent_size}), got {eps.shape}")
    x = _to_tensor(_model_input(model, window))[None]
    with torch.no_grad():
        loss = negative_elbo(model.network.eval(), x, torch.from_numpy(eps)[:, None, :],
                             model.config.obs_variance)
    value = float(loss[0])
    if not math.isfinite(value):
        raise NumericError(f"{model.name}: non-finite ELBO")
    return value


# ---------- training ----------
def build_vae(config: VaeConfig) -> ConvVae:
    torch.manual_seed(int(config.seed))
    return ConvVae(config)


def train_vae(
    windows: Sequence[CsiWindow | np.ndarray],
    config: VaeConfig,
    antenna: Optional[int] = None,
    norm_constant: float = 1.0,
) -> VaeModel:
    """
    Adam on the mean negative ELBO. Windows are full stacked windows; antenna
    picks one channel (per-antenna VAE) or None (stacked-channel VAE).
    """
    if len(windows) == 0:
        raise InsufficientDataError("train_vae needs at least one window")
    first = _select(_window_array(windows[0]), antenna)
    for w in windows:
        if _window_array(w).shape != _window_array(windows[0]).shape:
            raise ContractError("training windows must share one shape")
    if tuple(first.shape[:2]) != tuple(config.input_shape[:2]):
        raise ContractError(f"config expects {config.input_shape[:2]} windows, data has {first.shape[:2]}")
    config = config.with_channels(first.shape[2])

    deterministic_torch(config.seed, settings.THREADS)
    network = build_vae(config)
    model = VaeModel(network=network, config=config, norm_constant=float(norm_constant), antenna=antenna)

    loader = DataLoader(WindowDataset(windows, antenna), batch_size=config.batch_size, shuffle=True,
                        generator=seeded_generator(config.seed), num_workers=0)
    eps_gen = seeded_generator(config.seed + 1)
    optimizer = torch.optim.Adam(network.parameters(), lr=config.learning_rate)

    network.train()
    for epoch in range(config.epochs):
        total, count = 0.0, 0
        for x in loader:
            eps = torch.randn((config.mc_samples, x.shape[0], config.latent_size), generator=eps_gen)
            loss = negative_elbo(network, x, eps, config.obs_variance).mean()
            if not torch.isfinite(loss):
                model.loss_trace.append(float("nan"))
                raise TrainingDivergedError(f"{model.name} diverged in epoch {epoch + 1}", model.loss_trace)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            total += loss.item() * x.shape[0]
            count += x.shape[0]
        model.loss_trace.append(total / count)
        log.info("[train-vae] %s epoch %d/%d loss=%.4f", model.name, epoch + 1, config.epochs, model.loss_trace[-1])
    network.eval()
    return model


# ---------- persistence ----------
def save_vae(model: VaeModel, path: str | os.PathLike):
    meta = {
        "vae": model.config.to_dict(),
        "norm_constant": float(model.norm_constant),
        "antenna": model.antenna,
        "loss_trace": [float(v) for v in model.loss_trace],
    }
    return save_checkpoint(path, "vae", meta, state_arrays(model.network))


def load_vae(path: str | os.PathLike) -> VaeModel:
    meta, params = load_checkpoint(path, kind="vae")
    config = VaeConfig.from_dict(meta["vae"])
    network = ConvVae(config)
    load_state_arrays(network, params)
    network.eval()
    return VaeModel(network=network, config=config, norm_constant=float(meta["norm_constant"]),
                    antenna=meta.get("antenna"), loss_trace=list(meta.get("loss_trace", [])))
