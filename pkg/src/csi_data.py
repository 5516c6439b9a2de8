# src/csi_data.py
"""
CSI magnitude spectrograms: on-disk interchange format, normalization,
sliding windows and train/test splitting.

Dataset directory layout:
    <activity>.bin   row-major little-endian float32, frames x subcarriers x antennas
    manifest.json    {"activities": {activity: [frames, subcarriers, antennas]},
                      "frame_rate_hz": ..., "norm_constant": ... (optional),
                      "magnitude_units": "arbitrary"}

Antenna indices are 0-based everywhere in code; user-facing names (A1..A4)
are 1-based.
"""
from __future__ import annotations

import hashlib
import logging
import os
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .common.utils import read_json, write_json
from .errors import (
    ContractError,
    CorruptionError,
    DatasetFormatError,
    DegenerateNormalizationError,
    DomainError,
    IdempotencyError,
    InsufficientDataError,
    RangeError,
)

log = logging.getLogger("csihar.data")

MANIFEST_NAME = "manifest.json"
FORMAT_VERSION = 1
DEFAULT_FRAME_RATE_HZ = 150.0


class ActivityLabel(str, Enum):
    WALK = "walk"
    RUN = "run"
    JUMP = "jump"
    SIT = "sit"
    EMPTY = "empty"
    SQUAT = "squat"   # held out: never used for training

    @property
    def in_distribution(self) -> bool:
        return self is not ActivityLabel.SQUAT

    @property
    def class_index(self) -> int:
        """Class index in [0, K) for in-distribution labels, -1 otherwise."""
        if not self.in_distribution:
            return -1
        return IN_DISTRIBUTION.index(self)

    @classmethod
    def from_index(cls, idx: int) -> "ActivityLabel":
        return IN_DISTRIBUTION[int(idx)]


IN_DISTRIBUTION: Tuple[ActivityLabel, ...] = tuple(a for a in ActivityLabel if a.in_distribution)
NUM_CLASSES = len(IN_DISTRIBUTION)   # K = 5
CLASS_NAMES: Tuple[str, ...] = tuple(a.value for a in IN_DISTRIBUTION)


class SplitPolicy(str, Enum):
    CHRONOLOGICAL_TAIL = "chronological-tail"
    RANDOM = "random"


@dataclass(frozen=True, eq=False)
class CsiRecording:
    values: np.ndarray                 # frames x subcarriers x antennas, magnitudes
    activity: ActivityLabel
    frame_rate_hz: float = DEFAULT_FRAME_RATE_HZ
    normalized: bool = False
    out_of_range: bool = False         # normalized with a foreign constant, some values > 1

    def __post_init__(self):
        v = self.values
        if v.ndim != 3 or min(v.shape) < 1:
            raise DomainError(f"recording must be a non-empty 3-D array, got shape {v.shape}")
        if not self.frame_rate_hz > 0:
            raise DomainError(f"frame_rate_hz must be positive, got {self.frame_rate_hz}")
        if np.any(v < 0):
            raise DomainError(f"{self.activity.value}: CSI magnitudes must be non-negative")

    @property
    def frames(self) -> int:
        return int(self.values.shape[0])

    @property
    def subcarriers(self) -> int:
        return int(self.values.shape[1])

    @property
    def antennas(self) -> int:
        return int(self.values.shape[2])


@dataclass(frozen=True, eq=False)
class CsiWindow:
    values: np.ndarray                 # win_frames x subcarriers x channels
    label: ActivityLabel
    source_offset: int
    source_recording: int = 0

    @property
    def channels(self) -> int:
        return int(self.values.shape[2])

    @property
    def shape(self) -> Tuple[int, int, int]:
        return tuple(int(s) for s in self.values.shape)

    def select_antenna(self, index: int) -> "CsiWindow":
        if not 0 <= index < self.channels:
            raise RangeError(f"antenna {index} out of range for {self.channels} channels")
        return replace(self, values=self.values[..., index:index + 1])


@dataclass(frozen=True, eq=False)
class DatasetSplit:
    train: Tuple[CsiWindow, ...]
    test: Tuple[CsiWindow, ...]
    split_policy: SplitPolicy
    seed: int
    test_fraction: float = 0.2
    counts: Dict[str, Tuple[int, int]] = field(default_factory=dict)   # class -> (train, test)

    def describe(self) -> dict:
        return {
            "policy": self.split_policy.value,
            "seed": self.seed,
            "test_fraction": self.test_fraction,
            "counts": {k: list(v) for k, v in self.counts.items()},
        }


# ---------- on-disk format ----------
def read_manifest(path: str | os.PathLike) -> dict:
    p = Path(path)
    if not p.is_dir():
        raise DatasetFormatError(f"dataset directory not found: {p}")
    mpath = p / MANIFEST_NAME
    if not mpath.exists():
        raise DatasetFormatError(f"missing {MANIFEST_NAME} in {p}")
    try:
        manifest = read_json(mpath)
    except ValueError as e:
        raise DatasetFormatError(f"unreadable {MANIFEST_NAME}: {e}") from e
    if not isinstance(manifest, dict):
        raise DatasetFormatError(f"{MANIFEST_NAME} must hold a JSON object")
    return manifest


def _manifest_shapes(manifest: dict) -> Dict[ActivityLabel, Tuple[int, int, int]]:
    # Accept nested {"activities": {...}} or activity names as top-level keys
    raw = manifest.get("activities")
    if raw is None:
        names = {a.value for a in ActivityLabel}
        raw = {k: v for k, v in manifest.items() if k in names}
    if not isinstance(raw, dict) or not raw:
        raise DatasetFormatError("manifest lists no activities")
    out: Dict[ActivityLabel, Tuple[int, int, int]] = {}
    for name, shape in raw.items():
        try:
            label = ActivityLabel(name)
        except ValueError as e:
            raise DatasetFormatError(f"unknown activity '{name}' in manifest") from e
        if not isinstance(shape, (list, tuple)) or len(shape) != 3 or min(int(s) for s in shape) < 1:
            raise DatasetFormatError(f"{name}: shape must be [frames, subcarriers, antennas], got {shape}")
        out[label] = tuple(int(s) for s in shape)
    return out


def load_recordings(path: str | os.PathLike) -> List[CsiRecording]:
    """One CsiRecording per activity file, in label order, normalized=False."""
    p = Path(path)
    manifest = read_manifest(p)
    shapes = _manifest_shapes(manifest)
    frame_rate = float(manifest.get("frame_rate_hz", DEFAULT_FRAME_RATE_HZ))

    recordings: List[CsiRecording] = []
    for label in ActivityLabel:
        if label not in shapes:
            continue
        shape = shapes[label]
        bin_path = p / f"{label.value}.bin"
        if not bin_path.exists():
            raise DatasetFormatError(f"manifest lists '{label.value}' but {bin_path.name} is missing")
        expected = int(np.prod(shape)) * 4
        actual = bin_path.stat().st_size
        if actual != expected:
            raise CorruptionError(
                f"{bin_path.name}: {actual} bytes, manifest shape {list(shape)} needs {expected}"
            )
        values = np.fromfile(bin_path, dtype="<f4").astype(np.float32, copy=False).reshape(shape)
        if not np.all(np.isfinite(values)):
            raise CorruptionError(f"{bin_path.name}: non-finite values")
        recordings.append(CsiRecording(values=values, activity=label, frame_rate_hz=frame_rate))
        log.info("[data] loaded %s %s", label.value, shape)
    return recordings


def write_dataset(
    path: str | os.PathLike,
    recordings: Sequence[CsiRecording],
    norm_constant: Optional[float] = None,
) -> Path:
    if not recordings:
        raise DatasetFormatError("nothing to write: no recordings")
    rates = {r.frame_rate_hz for r in recordings}
    if len(rates) != 1:
        raise DatasetFormatError(f"recordings disagree on frame rate: {sorted(rates)}")
    seen = [r.activity for r in recordings]
    if len(set(seen)) != len(seen):
        raise DatasetFormatError("one recording per activity expected")

    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    shapes = {}
    for r in recordings:
        np.ascontiguousarray(r.values, dtype="<f4").tofile(p / f"{r.activity.value}.bin")
        shapes[r.activity.value] = [r.frames, r.subcarriers, r.antennas]

    manifest = {
        "format_version": FORMAT_VERSION,
        "activities": shapes,
        "frame_rate_hz": rates.pop(),
        "magnitude_units": "arbitrary",
    }
    if norm_constant is not None:
        manifest["norm_constant"] = float(norm_constant)
    return write_json(p / MANIFEST_NAME, manifest)


def persist_norm_constant(path: str | os.PathLike, constant: float) -> None:
    manifest = read_manifest(path)
    manifest["norm_constant"] = float(constant)
    write_json(Path(path) / MANIFEST_NAME, manifest)


def stored_norm_constant(path: str | os.PathLike) -> Optional[float]:
    value = read_manifest(path).get("norm_constant")
    return None if value is None else float(value)


def dataset_hash(path: str | os.PathLike) -> str:
    """SHA-256 over the activity payloads (name + bytes), independent of the sidecar."""
    h = hashlib.sha256()
    for bin_path in sorted(Path(path).glob("*.bin")):
        h.update(bin_path.name.encode("utf-8"))
        with open(bin_path, "rb") as f:
            for block in iter(lambda: f.read(1 << 20), b""):
                h.update(block)
    return h.hexdigest()


def convert_arrays(src_dir: str | os.PathLike, out_dir: str | os.PathLike,
                   frame_rate_hz: float = DEFAULT_FRAME_RATE_HZ) -> Path:
    """
    Adapter for externally prepared data: one <activity>.npy per activity
    (frames x subcarriers x antennas). Complex CSI is reduced to its magnitude.
    """
    recordings = []
    for npy in sorted(Path(src_dir).glob("*.npy")):
        try:
            label = ActivityLabel(npy.stem.lower())
        except ValueError:
            log.warning("[ingest] skipping %s: not an activity name", npy.name)
            continue
        arr = np.load(npy, mmap_mode="r")
        if np.iscomplexobj(arr):
            arr = np.abs(arr)
        if arr.ndim != 3:
            raise DatasetFormatError(f"{npy.name}: expected 3-D array, got shape {arr.shape}")
        recordings.append(CsiRecording(values=np.asarray(arr, dtype=np.float32),
                                       activity=label, frame_rate_hz=frame_rate_hz))
    if not recordings:
        raise DatasetFormatError(f"no <activity>.npy files in {src_dir}")
    return write_dataset(out_dir, recordings)


# ---------- normalization ----------
def compute_norm_constant(recordings: Sequence[CsiRecording]) -> float:
    if not recordings:
        raise DegenerateNormalizationError("no recordings to normalize")
    constant = max(float(np.max(r.values)) for r in recordings)
    if not constant > 0:
        raise DegenerateNormalizationError("all recordings are zero; nothing to scale by")
    return constant


def normalize(recording: CsiRecording, constant: float) -> CsiRecording:
    if recording.normalized:
        raise IdempotencyError(f"{recording.activity.value} is already normalized")
    if not (np.isfinite(constant) and constant > 0):
        raise DomainError(f"normalization constant must be positive, got {constant}")
    values = np.divide(recording.values, np.float32(constant), dtype=np.float32)
    out_of_range = bool(values.size and float(values.max()) > 1.0)
    if out_of_range:
        log.warning("[data] %s exceeds 1 after normalization (constant from another dataset?)",
                    recording.activity.value)
    return replace(recording, values=values, normalized=True, out_of_range=out_of_range)


# ---------- windowing ----------
def window_frames(frame_rate_hz: float, window_seconds: float) -> int:
    win = int(round(frame_rate_hz * window_seconds))
    if win < 1:
        raise RangeError(f"window of {window_seconds}s at {frame_rate_hz} fps has no frames")
    return win


def sliding_windows(
    recording: CsiRecording,
    window_seconds: float = 3.0,
    stride_frames: int = 1,
    antenna: Optional[int] = None,
    recording_index: int = 0,
) -> List[CsiWindow]:
    """
    floor((frames - win) / stride) + 1 read-only views into the recording.
    antenna=None stacks every antenna as channels.
    """
    if not recording.normalized:
        raise ContractError("sliding_windows expects a normalized recording")
    win = window_frames(recording.frame_rate_hz, window_seconds)
    if win > recording.frames:
        raise RangeError(f"window of {win} frames exceeds recording of {recording.frames} frames")
    if stride_frames < 1:
        raise RangeError(f"stride must be >= 1, got {stride_frames}")
    if antenna is not None and not 0 <= antenna < recording.antennas:
        raise RangeError(f"antenna {antenna} out of range for {recording.antennas} antennas")

    values = recording.values
    if antenna is not None:
        values = values[..., antenna:antenna + 1]
    # (n, S, C, win) -> (n, win, S, C)
    views = np.moveaxis(sliding_window_view(values, win, axis=0)[::stride_frames], -1, 1)
    return [
        CsiWindow(values=views[i], label=recording.activity,
                  source_offset=i * stride_frames, source_recording=recording_index)
        for i in range(views.shape[0])
    ]


def build_windows(
    recordings: Sequence[CsiRecording],
    window_seconds: float,
    stride_frames: int = 1,
) -> Tuple[Dict[ActivityLabel, List[CsiWindow]], List[CsiWindow]]:
    """Per-class in-distribution windows (all antennas stacked) and the held-out OOD windows."""
    per_class: Dict[ActivityLabel, List[CsiWindow]] = {}
    ood: List[CsiWindow] = []
    for idx, rec in enumerate(recordings):
        windows = sliding_windows(rec, window_seconds, stride_frames, recording_index=idx)
        if rec.activity.in_distribution:
            per_class.setdefault(rec.activity, []).extend(windows)
        else:
            ood.extend(windows)
    return per_class, ood


# ---------- splitting ----------
def _test_count(n: int, fraction: float) -> int:
    return min(max(int(round(n * fraction)), 1), n - 1)


def split_dataset(
    windows: Mapping[ActivityLabel, Sequence[CsiWindow]],
    test_fraction: float = 0.2,
    policy: SplitPolicy | str = SplitPolicy.CHRONOLOGICAL_TAIL,
    seed: int = 0,
) -> DatasetSplit:
    if not 0.0 < test_fraction < 1.0:
        raise RangeError(f"test_fraction must be in (0, 1), got {test_fraction}")
    policy = SplitPolicy(policy)

    missing = [a.value for a in IN_DISTRIBUTION if not windows.get(a)]
    if missing:
        raise InsufficientDataError(f"no windows for classes: {', '.join(missing)}")

    train: List[CsiWindow] = []
    test: List[CsiWindow] = []
    counts: Dict[str, Tuple[int, int]] = {}
    for label in IN_DISTRIBUTION:
        items = list(windows[label])
        if any(not w.label.in_distribution for w in items):
            raise ContractError("out-of-distribution windows cannot enter a train/test split")
        if len(items) < 2:
            raise InsufficientDataError(f"{label.value}: need at least 2 windows, got {len(items)}")

        if policy is SplitPolicy.CHRONOLOGICAL_TAIL:
            # tail of each source recording goes to test
            groups: Dict[int, List[CsiWindow]] = {}
            for w in items:
                groups.setdefault(w.source_recording, []).append(w)
            if len(groups) == 1:
                ordered = sorted(items, key=lambda w: w.source_offset)
                n_test = _test_count(len(ordered), test_fraction)
                cls_train, cls_test = ordered[:-n_test], ordered[-n_test:]
            else:
                cls_train, cls_test = [], []
                for key in sorted(groups):
                    ordered = sorted(groups[key], key=lambda w: w.source_offset)
                    n_test = int(round(len(ordered) * test_fraction)) if len(ordered) > 1 else 0
                    cls_train += ordered[:len(ordered) - n_test]
                    cls_test += ordered[len(ordered) - n_test:]
                if not cls_test or not cls_train:
                    raise InsufficientDataError(f"{label.value}: split left one side empty")
        else:
            rng = np.random.default_rng([int(seed), label.class_index])
            perm = rng.permutation(len(items))
            n_test = _test_count(len(items), test_fraction)
            test_idx = set(perm[:n_test].tolist())
            cls_train = [w for i, w in enumerate(items) if i not in test_idx]
            cls_test = [w for i, w in enumerate(items) if i in test_idx]

        train.extend(cls_train)
        test.extend(cls_test)
        counts[label.value] = (len(cls_train), len(cls_test))

    log.info("[data] split %s: %d train / %d test windows", policy.value, len(train), len(test))
    return DatasetSplit(train=tuple(train), test=tuple(test), split_policy=policy,
                        seed=int(seed), test_fraction=float(test_fraction), counts=counts)
