# src/storage.py
"""
Checkpoints and experiment manifests.

A checkpoint is a zip archive with fixed member timestamps and no compression,
so identical parameters give identical bytes:

    format.json            {"format": "csihar-checkpoint", "version": 1, "kind": ...}
    config.json            sorted-key JSON
    params/<name>.npy      little-endian float32
"""
from __future__ import annotations

import io
import json
import logging
import os
import sys
import zipfile
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple

import numpy as np
import torch

from . import __version__
from .common.utils import read_json, sha256_file, write_json
from .errors import CheckpointError

log = logging.getLogger("csihar.storage")

FORMAT_TAG = "csihar-checkpoint"
FORMAT_VERSION = 1
_ZIP_DATE = (1980, 1, 1, 0, 0, 0)


def _json_bytes(obj: Any) -> bytes:
    return (json.dumps(obj, ensure_ascii=False, sort_keys=True, indent=2) + "\n").encode("utf-8")


def _write_member(zf: zipfile.ZipFile, name: str, data: bytes) -> None:
    info = zipfile.ZipInfo(name, date_time=_ZIP_DATE)
    info.compress_type = zipfile.ZIP_STORED
    info.external_attr = 0o644 << 16
    zf.writestr(info, data)


def save_checkpoint(path: str | os.PathLike, kind: str, config: Mapping[str, Any],
                    params: Mapping[str, np.ndarray]) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    tmp = p.with_name(p.name + ".tmp")
    with zipfile.ZipFile(tmp, "w") as zf:
        _write_member(zf, "format.json", _json_bytes({"format": FORMAT_TAG, "version": FORMAT_VERSION, "kind": kind}))
        _write_member(zf, "config.json", _json_bytes(dict(config)))
        for name in sorted(params):
            buf = io.BytesIO()
            np.save(buf, np.asarray(params[name], dtype="<f4"), allow_pickle=False)
            _write_member(zf, f"params/{name}.npy", buf.getvalue())
    os.replace(tmp, p)
    log.debug("[storage] wrote %s checkpoint %s (%d arrays)", kind, p, len(params))
    return p


def load_checkpoint(path: str | os.PathLike, kind: Optional[str] = None) -> Tuple[Dict[str, Any], Dict[str, np.ndarray]]:
    p = Path(path)
    if not p.is_file():
        raise CheckpointError(f"checkpoint not found: {p}")
    try:
        with zipfile.ZipFile(p) as zf:
            header = json.loads(zf.read("format.json"))
            if header.get("format") != FORMAT_TAG:
                raise CheckpointError(f"{p} is not a {FORMAT_TAG} archive")
            if int(header.get("version", -1)) != FORMAT_VERSION:
                raise CheckpointError(f"{p}: unsupported checkpoint version {header.get('version')}")
            if kind is not None and header.get("kind") != kind:
                raise CheckpointError(f"{p} holds a {header.get('kind')!r} checkpoint, expected {kind!r}")
            config = json.loads(zf.read("config.json"))
            params = {}
            for name in zf.namelist():
                if name.startswith("params/") and name.endswith(".npy"):
                    params[name[len("params/"):-len(".npy")]] = np.load(io.BytesIO(zf.read(name)), allow_pickle=False)
    except (zipfile.BadZipFile, KeyError, json.JSONDecodeError, ValueError) as e:
        raise CheckpointError(f"unreadable checkpoint {p}: {e}") from e
    return config, params


def state_arrays(module: torch.nn.Module) -> Dict[str, np.ndarray]:
    return {k: v.detach().cpu().numpy() for k, v in module.state_dict().items()}


def load_state_arrays(module: torch.nn.Module, params: Mapping[str, np.ndarray]) -> None:
    expected = set(module.state_dict())
    if set(params) != expected:
        missing = sorted(expected - set(params))
        extra = sorted(set(params) - expected)
        raise CheckpointError(f"parameter mismatch; missing={missing} unexpected={extra}")
    state = {k: torch.from_numpy(np.array(v, dtype=np.float32)) for k, v in params.items()}
    module.load_state_dict(state)


# ---------- experiment manifests ----------
@dataclass
class ExperimentManifest:
    stage: str
    argv: List[str] = field(default_factory=list)
    dataset: Optional[str] = None
    dataset_hash: Optional[str] = None
    architecture: Optional[str] = None
    hyperparameters: Dict[str, Any] = field(default_factory=dict)
    seeds: Dict[str, int] = field(default_factory=dict)
    artifacts: Dict[str, str] = field(default_factory=dict)      # path -> sha256
    tool_version: str = __version__
    created_at: str = ""

    def add_artifact(self, path: str | os.PathLike) -> None:
        self.artifacts[str(path)] = sha256_file(path)

    def write(self, path: str | os.PathLike) -> Path:
        if not self.created_at:
            self.created_at = datetime.now(timezone.utc).isoformat().replace("+00:00", "Z")
        return write_json(path, asdict(self))

    @classmethod
    def read(cls, path: str | os.PathLike) -> "ExperimentManifest":
        try:
            raw = read_json(path)
        except (OSError, json.JSONDecodeError) as e:
            raise CheckpointError(f"unreadable manifest {path}: {e}") from e
        known = {k: raw[k] for k in cls.__dataclass_fields__ if k in raw}
        if "stage" not in known:
            raise CheckpointError(f"{path} is not an experiment manifest (no 'stage')")
        return cls(**known)


def manifest_path_for(artifact: str | os.PathLike) -> Path:
    p = Path(artifact)
    if p.is_dir():
        return p / "experiment.json"
    return p.with_name(p.stem + ".manifest.json")


def current_argv() -> List[str]:
    return list(sys.argv[1:])
