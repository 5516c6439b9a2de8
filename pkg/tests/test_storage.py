import json
import zipfile

import numpy as np
import pytest

from src import __version__
from src.errors import CheckpointError
from src.storage import (
    ExperimentManifest,
    load_checkpoint,
    manifest_path_for,
    save_checkpoint,
)


def test_checkpoint_round_trip(tmp_path):
    params = {"b": np.arange(3, dtype=np.float64), "a.weight": np.ones((2, 2), np.float32)}
    path = save_checkpoint(tmp_path / "m.ckpt", "vae", {"z": 1, "a": [1, 2]}, params)
    config, loaded = load_checkpoint(path, kind="vae")
    assert config == {"z": 1, "a": [1, 2]}
    assert set(loaded) == {"a.weight", "b"}
    assert loaded["b"].dtype == np.dtype("<f4")
    np.testing.assert_array_equal(loaded["b"], [0, 1, 2])
    assert not list(tmp_path.glob("*.tmp"))


def test_checkpoint_bytes_do_not_depend_on_time_or_dict_order(tmp_path):
    a = save_checkpoint(tmp_path / "a.ckpt", "vae", {"x": 1, "y": 2}, {"p": np.ones(2), "q": np.zeros(1)})
    b = save_checkpoint(tmp_path / "b.ckpt", "vae", {"y": 2, "x": 1}, {"q": np.zeros(1), "p": np.ones(2)})
    assert a.read_bytes() == b.read_bytes()
    with zipfile.ZipFile(a) as zf:
        assert all(i.compress_type == zipfile.ZIP_STORED for i in zf.infolist())
        assert json.loads(zf.read("format.json"))["format"] == "csihar-checkpoint"


def test_checkpoint_errors(tmp_path):
    path = save_checkpoint(tmp_path / "c.ckpt", "classifier", {}, {})
    with pytest.raises(CheckpointError):
        load_checkpoint(path, kind="vae")
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "missing.ckpt")
    foreign = tmp_path / "foreign.ckpt"
    with zipfile.ZipFile(foreign, "w") as zf:
        zf.writestr("format.json", json.dumps({"format": "other", "version": 1}))
    with pytest.raises(CheckpointError):
        load_checkpoint(foreign)
    (tmp_path / "junk.ckpt").write_text("junk")
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "junk.ckpt")


def test_manifest_round_trip(tmp_path):
    artifact = tmp_path / "models" / "vae-A1.ckpt"
    save_checkpoint(artifact, "vae", {}, {"w": np.ones(1)})
    manifest = ExperimentManifest(stage="train-vae", argv=["train-vae", "--antenna", "1"],
                                  hyperparameters={"epochs": 2}, seeds={"vae": 0})
    manifest.add_artifact(artifact)
    path = manifest.write(manifest_path_for(artifact))
    assert path == tmp_path / "models" / "vae-A1.manifest.json"

    loaded = ExperimentManifest.read(path)
    assert loaded.stage == "train-vae" and loaded.tool_version == __version__
    assert loaded.created_at.endswith("Z")
    assert len(loaded.artifacts[str(artifact)]) == 64


def test_manifest_paths_and_errors(tmp_path):
    assert manifest_path_for(tmp_path) == tmp_path / "experiment.json"
    (tmp_path / "x.json").write_text(json.dumps({"hello": 1}))
    with pytest.raises(CheckpointError):
        ExperimentManifest.read(tmp_path / "x.json")
    with pytest.raises(CheckpointError):
        ExperimentManifest.read(tmp_path / "nope.json")
