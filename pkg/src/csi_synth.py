# src/csi_synth.py
"""
Synthetic magnitude CSI for the activity suite.

Per antenna a, frame time t and subcarrier frequency f:

    H_a(t, f) = sum_p g_pa * s_pa(t) * exp(-j 2 pi f tau_pa)         static paths
              + g_a(t) * exp(-j 2 pi f tau_a(t))                    moving body

Static paths are LOS, one wall reflection and a few seeded reflectors; their
delays are geometric per antenna. s_pa(t) in (0, 1] is body shadowing of the
path segments, g_a(t) / tau_a(t) follow the tx -> body -> rx distances.
The recorded value is |H| * amplitude_scale plus Gaussian noise, clipped at 0.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np

from .csi_data import ActivityLabel, CsiRecording, write_dataset
from .errors import ConfigurationError, DomainError

log = logging.getLogger("csihar.synth")

SPEED_OF_LIGHT = 299_792_458.0

Point2 = Tuple[float, float]
TimeFn = Callable[[np.ndarray], np.ndarray]


def _constant_height(value: float) -> TimeFn:
    return lambda t: np.full(np.shape(t), float(value))


def _fixed_position(x: float, y: float) -> TimeFn:
    return lambda t: np.tile(np.array([x, y], dtype=float), (np.size(t), 1))


@dataclass(frozen=True)
class MotionProfile:
    activity: ActivityLabel
    path_fn: TimeFn                      # t (T,) -> (T, 2) torso position in the room plane, metres
    body_cross_section: float            # relative scattering strength
    periodicity_hz: float = 0.0          # gait / jump cadence
    speed_mps: float = 0.0
    height_fn: TimeFn = field(default_factory=lambda: _constant_height(1.0))   # torso height

    def __post_init__(self):
        if self.body_cross_section < 0:
            raise DomainError("body_cross_section must be non-negative")
        if self.periodicity_hz < 0:
            raise DomainError("periodicity_hz must be non-negative")
        if self.activity is ActivityLabel.EMPTY and self.body_cross_section != 0:
            raise DomainError("the empty room has no body to scatter from")


@dataclass(frozen=True)
class Reflector:
    point: Optional[Point2]              # None = line of sight
    strength: float                      # amplitude at 1 m of path length


def linear_array(n: int = 4, center: Point2 = (8.5, 2.5), spacing_m: float = 0.06) -> Tuple[Point2, ...]:
    offsets = (np.arange(n) - (n - 1) / 2.0) * spacing_m
    return tuple((float(center[0]), float(center[1] + o)) for o in offsets)


@dataclass(frozen=True)
class ChannelConfig:
    room_dims: Point2 = (9.0, 5.0)                        # ~45 m^2
    tx_position: Point2 = (0.5, 2.5)
    antenna_positions: Tuple[Point2, ...] = field(default_factory=linear_array)
    antenna_height_m: float = 1.2
    carrier_hz: float = 5.25e9
    bandwidth_hz: float = 160e6
    subcarriers: int = 2048
    noise_std: float = 0.02                               # in channel units, before amplitude_scale
    seed: int = 0
    reflectors: int = 6
    static_paths: Optional[Tuple[Reflector, ...]] = None  # None: LOS + wall + seeded reflectors
    amplitude_scale: float = 1000.0                       # arbitrary chipset units
    scatter_gain: float = 3.0
    shadow_depth: float = 0.7
    shadow_width_m: float = 0.35

    def __post_init__(self):
        if self.subcarriers < 8:
            raise ConfigurationError(f"need at least 8 subcarriers, got {self.subcarriers}")
        if not self.antenna_positions:
            raise ConfigurationError("at least one antenna is required")
        if self.noise_std < 0:
            raise ConfigurationError("noise_std must be non-negative")
        pos = np.asarray(self.antenna_positions, dtype=float)
        half_wave = self.wavelength / 2.0
        for i in range(len(pos)):
            for j in range(i + 1, len(pos)):
                if np.linalg.norm(pos[i] - pos[j]) <= half_wave:
                    raise ConfigurationError(
                        f"antennas {i + 1} and {j + 1} are closer than half a wavelength ({half_wave:.4f} m)"
                    )

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_hz

    @property
    def antennas(self) -> int:
        return len(self.antenna_positions)

    def subcarrier_freqs(self) -> np.ndarray:
        k = np.arange(self.subcarriers, dtype=float)
        return self.carrier_hz + (k - (self.subcarriers - 1) / 2.0) * self.bandwidth_hz / self.subcarriers

    def resolved_paths(self) -> Tuple[Reflector, ...]:
        if self.static_paths is not None:
            return tuple(self.static_paths)
        tx = np.asarray(self.tx_position, dtype=float)
        rx = np.mean(np.asarray(self.antenna_positions, dtype=float), axis=0)
        # two-ray core: LOS + specular bounce on the y=0 wall
        x_wall = tx[0] + (rx[0] - tx[0]) * tx[1] / (tx[1] + rx[1])
        paths = [Reflector(None, 4.0), Reflector((float(x_wall), 0.0), 2.1)]
        rng = np.random.default_rng([int(self.seed), 7])
        w, h = self.room_dims
        for _ in range(self.reflectors):
            point = (float(rng.uniform(0.3, w - 0.3)), float(rng.uniform(0.3, h - 0.3)))
            paths.append(Reflector(point, float(rng.uniform(1.5, 4.0))))
        return tuple(paths)

    def _segments(self, antenna: int):
        """Per static path: (delay_s, gain, [(start3, end3), ...])."""
        h = self.antenna_height_m
        tx = np.array([*self.tx_position, h])
        rx = np.array([*self.antenna_positions[antenna], h])
        out = []
        for path in self.resolved_paths():
            if path.point is None:
                legs = [(tx, rx)]
            else:
                q = np.array([*path.point, h])
                legs = [(tx, q), (q, rx)]
            length = sum(float(np.linalg.norm(b - a)) for a, b in legs)
            out.append((length / SPEED_OF_LIGHT, path.strength / length, legs))
        return out

    def path_table(self, antenna: int) -> list[Tuple[float, float]]:
        """(delay_s, gain) of every static path as seen by one antenna."""
        return [(delay, gain) for delay, gain, _ in self._segments(antenna)]


def _segment_distance(points: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return np.linalg.norm(points - a, axis=1)
    u = np.clip((points - a) @ ab / denom, 0.0, 1.0)
    return np.linalg.norm(points - (a + u[:, None] * ab), axis=1)


def synthesize_recording(
    profile: MotionProfile,
    config: ChannelConfig,
    duration_s: float,
    frame_rate_hz: float,
) -> CsiRecording:
    if not duration_s > 0:
        raise DomainError(f"duration must be positive, got {duration_s}")
    if not frame_rate_hz > 0:
        raise DomainError(f"frame rate must be positive, got {frame_rate_hz}")
    frames = max(1, int(round(duration_s * frame_rate_hz)))
    t = np.arange(frames, dtype=float) / frame_rate_hz
    freqs = config.subcarrier_freqs()
    h = config.antenna_height_m
    tx3 = np.array([*config.tx_position, h])

    cs = float(profile.body_cross_section)
    body = None
    if cs > 0:
        body = np.column_stack([np.asarray(profile.path_fn(t), dtype=float).reshape(frames, 2),
                                np.asarray(profile.height_fn(t), dtype=float).reshape(frames)])

    out = np.empty((frames, config.subcarriers, config.antennas), dtype=np.float32)
    chunk = max(1, (1 << 22) // config.subcarriers)
    for a in range(config.antennas):
        segments = config._segments(a)
        delays = np.array([d for d, _, _ in segments])
        gains = np.array([g for _, g, _ in segments])
        phasors = np.exp(-2j * np.pi * np.outer(delays, freqs))          # (P, S)

        shadow = np.ones((frames, len(segments)))
        if body is not None:
            depth = config.shadow_depth * min(1.0, cs)
            two_w2 = 2.0 * config.shadow_width_m ** 2
            for p, (_, _, legs) in enumerate(segments):
                dist = np.min([_segment_distance(body, s, e) for s, e in legs], axis=0)
                shadow[:, p] = 1.0 - depth * np.exp(-dist ** 2 / two_w2)
            rx3 = np.array([*config.antenna_positions[a], h])
            d1 = np.linalg.norm(body - tx3, axis=1)
            d2 = np.linalg.norm(body - rx3, axis=1)
            tau = (d1 + d2) / SPEED_OF_LIGHT
            g_body = cs * config.scatter_gain / np.maximum(d1 * d2, 1e-3)

        for start in range(0, frames, chunk):
            sl = slice(start, min(frames, start + chunk))
            H = (shadow[sl] * gains) @ phasors                            # (T, S)
            if body is not None:
                H = H + g_body[sl, None] * np.exp(-2j * np.pi * np.outer(tau[sl], freqs))
            out[sl, :, a] = np.abs(H) * config.amplitude_scale

    if config.noise_std > 0:
        rng = np.random.default_rng([int(config.seed), 1000 + list(ActivityLabel).index(profile.activity)])
        out += rng.normal(0.0, config.noise_std * config.amplitude_scale, size=out.shape).astype(np.float32)
        np.maximum(out, 0.0, out=out)

    return CsiRecording(values=out, activity=profile.activity, frame_rate_hz=float(frame_rate_hz))


# ---------- presets ----------
WALK_SPEED_MPS = 1.2
ELLIPSE_CENTER = (4.5, 2.5)
ELLIPSE_AXES = (2.5, 1.2)


def _ellipse_path(speed_mps: float, center: Point2 = ELLIPSE_CENTER, axes: Point2 = ELLIPSE_AXES) -> TimeFn:
    a, b = axes
    # Ramanujan's perimeter approximation
    perimeter = math.pi * (3 * (a + b) - math.sqrt((3 * a + b) * (a + 3 * b)))

    def path(t: np.ndarray) -> np.ndarray:
        theta = 2 * np.pi * speed_mps * np.asarray(t, dtype=float) / perimeter
        return np.column_stack([center[0] + a * np.cos(theta), center[1] + b * np.sin(theta)])

    return path


def standard_profiles() -> Dict[ActivityLabel, MotionProfile]:
    profiles = {
        ActivityLabel.WALK: MotionProfile(
            ActivityLabel.WALK, _ellipse_path(WALK_SPEED_MPS), body_cross_section=1.0,
            periodicity_hz=1.8, speed_mps=WALK_SPEED_MPS,
            height_fn=lambda t: 1.0 + 0.03 * np.sin(2 * np.pi * 1.8 * np.asarray(t))),
        ActivityLabel.RUN: MotionProfile(
            ActivityLabel.RUN, _ellipse_path(2 * WALK_SPEED_MPS), body_cross_section=1.4,
            periodicity_hz=2.8, speed_mps=2 * WALK_SPEED_MPS,
            height_fn=lambda t: 1.0 + 0.06 * np.sin(2 * np.pi * 2.8 * np.asarray(t))),
        ActivityLabel.JUMP: MotionProfile(
            ActivityLabel.JUMP, _fixed_position(6.0, 2.7), body_cross_section=1.2,
            periodicity_hz=1.2,
            height_fn=lambda t: 0.9 + 0.4 * np.abs(np.sin(np.pi * 1.2 * np.asarray(t)))),
        ActivityLabel.SIT: MotionProfile(
            ActivityLabel.SIT, _fixed_position(3.0, 1.6), body_cross_section=0.8,
            height_fn=_constant_height(0.75)),
        ActivityLabel.EMPTY: MotionProfile(
            ActivityLabel.EMPTY, _fixed_position(0.0, 0.0), body_cross_section=0.0),
        # slow vertical motion, parameters between sit and jump: a near-OOD class
        ActivityLabel.SQUAT: MotionProfile(
            ActivityLabel.SQUAT, _fixed_position(5.0, 3.3), body_cross_section=1.0,
            periodicity_hz=0.4,
            height_fn=lambda t: 1.0 - 0.35 * (1 - np.cos(2 * np.pi * 0.4 * np.asarray(t))) / 2),
    }
    walk, run, sit = (profiles[a].speed_mps for a in (ActivityLabel.WALK, ActivityLabel.RUN, ActivityLabel.SIT))
    assert run > walk > sit == 0.0, "preset speeds must order run > walk > sit"
    return profiles


def standard_suite(
    config: ChannelConfig,
    duration_s: float = 80.0,
    frame_rate_hz: float = 150.0,
    activities: Optional[Sequence[ActivityLabel]] = None,
) -> Dict[ActivityLabel, CsiRecording]:
    """Five in-distribution activities plus squat, one recording each."""
    profiles = standard_profiles()
    wanted = list(activities) if activities is not None else list(ActivityLabel)
    suite = {}
    for label in wanted:
        suite[label] = synthesize_recording(profiles[label], config, duration_s, frame_rate_hz)
        log.info("[synth] %s: %d frames x %d subcarriers x %d antennas",
                 label.value, suite[label].frames, config.subcarriers, config.antennas)
    return suite


def write_suite(out_dir: str | Path, config: ChannelConfig,
                duration_s: float, frame_rate_hz: float) -> Path:
    suite = standard_suite(config, duration_s, frame_rate_hz)
    return write_dataset(out_dir, list(suite.values()))
