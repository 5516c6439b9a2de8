import hashlib
import json
import os
from pathlib import Path
from typing import Any

import torch


def read_json(path: str | os.PathLike) -> Any:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def write_json(path: str | os.PathLike, obj: Any) -> Path:
    """
    Sorted keys + fixed indent so identical objects give identical bytes.
    """
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    with open(p, "w", encoding="utf-8") as f:
        f.write(json.dumps(obj, ensure_ascii=False, sort_keys=True, indent=2) + "\n")
    return p


def sha256_file(path: str | os.PathLike, chunk: int = 1 << 20) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        while True:
            block = f.read(chunk)
            if not block:
                break
            h.update(block)
    return h.hexdigest()


def seeded_generator(seed: int) -> torch.Generator:
    gen = torch.Generator()
    gen.manual_seed(int(seed))
    return gen


def deterministic_torch(seed: int, threads: int | None = None) -> None:
    """Global torch state for a reproducible single-logical-thread run."""
    torch.manual_seed(int(seed))
    torch.use_deterministic_algorithms(True)
    if threads:
        torch.set_num_threads(int(threads))
