from __future__ import annotations

import numpy as np
import pytest

from src.csi_data import ActivityLabel, CsiRecording, CsiWindow, IN_DISTRIBUTION
from src.csi_synth import ChannelConfig, linear_array
from src.vae import ConvLayer, VaeConfig

TINY_CONVS = (ConvLayer((5, 4), (5, 4), 4), ConvLayer((2, 2), (2, 2), 4))


def make_recording(frames=40, subcarriers=16, antennas=2, activity=ActivityLabel.WALK,
                   fps=10.0, seed=0, normalized=False) -> CsiRecording:
    rng = np.random.default_rng(seed)
    values = rng.uniform(0.0, 1.0, size=(frames, subcarriers, antennas)).astype(np.float32)
    return CsiRecording(values=values, activity=activity, frame_rate_hz=fps, normalized=normalized)


def make_windows(n_per_class=6, shape=(10, 16, 4), seed=0, labels=IN_DISTRIBUTION):
    """Windows whose mean level encodes the class, so tiny models can separate them."""
    rng = np.random.default_rng(seed)
    out = []
    for k, label in enumerate(labels):
        for i in range(n_per_class):
            base = 0.1 + 0.18 * k
            vals = np.clip(base + 0.02 * rng.standard_normal(shape), 0, 1).astype(np.float32)
            out.append(CsiWindow(values=vals, label=label, source_offset=i))
    return out


@pytest.fixture
def tiny_config() -> VaeConfig:
    return VaeConfig(input_shape=(10, 16, 1), latent_dim=4, conv_spec=TINY_CONVS, dense_width=8,
                     epochs=2, batch_size=8, learning_rate=1e-3, seed=0)


@pytest.fixture
def small_channel() -> ChannelConfig:
    return ChannelConfig(subcarriers=16, antenna_positions=linear_array(4), seed=3)


@pytest.fixture
def tiny_dataset(tmp_path):
    """All six activities at 10 fps, 64 frames x 16 subcarriers x 4 antennas, written to disk."""
    from src.csi_synth import write_suite

    config = ChannelConfig(subcarriers=16, antenna_positions=linear_array(4), seed=1)
    write_suite(tmp_path / "data", config, duration_s=6.4, frame_rate_hz=10.0)
    return tmp_path / "data"
