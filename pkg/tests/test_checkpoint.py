"""Checkpoint directory format: exact roundtrips and corruption handling."""

import json
import os

import numpy as np
import pytest

from intentrec.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from intentrec.clustering import IntentModel
from intentrec.encoder import EncoderConfig, init_params
from intentrec.trainer import OptimizerSnapshot


@pytest.fixture
def full_state(tiny_cfg):
    params = init_params(tiny_cfg, rng_seed=3)
    rng = np.random.default_rng(0)
    intent = IntentModel(
        centroids=rng.normal(size=(3, tiny_cfg.dim)),
        assignments=rng.integers(0, 3, size=11).astype(np.int64),
        k=3,
        distortion=1.25,
        rng_seed=17,
    )
    optimizer = OptimizerSnapshot(
        m={n: rng.normal(size=t.data.shape) for n, t in params.tensors.items()},
        v={n: np.abs(rng.normal(size=t.data.shape)) for n, t in params.tensors.items()},
        step=42,
    )
    run_config = {"lr": 0.001, "k": 3, "seed": 9}
    return params, intent, optimizer, run_config


def test_roundtrip_exact(tmp_path, full_state):
    params, intent, optimizer, run_config = full_state
    path = str(tmp_path / "ckpt")
    save_checkpoint(path, params, intent, optimizer, run_config)
    p2, i2, o2, manifest = load_checkpoint(path)

    for name, t in params.tensors.items():
        assert np.array_equal(p2[name].data, t.data)
    assert p2.config == params.config

    assert i2 is not None
    assert np.array_equal(i2.centroids, intent.centroids)
    assert np.array_equal(i2.assignments, intent.assignments)
    assert i2.k == intent.k
    assert i2.distortion == intent.distortion
    assert i2.rng_seed == intent.rng_seed

    assert o2 is not None
    assert o2.step == 42
    for n in optimizer.m:
        assert np.array_equal(o2.m[n], optimizer.m[n])
        assert np.array_equal(o2.v[n], optimizer.v[n])

    assert manifest["run_config"] == run_config
    assert manifest["format_version"] == 1


def test_roundtrip_params_only(tmp_path, tiny_cfg):
    params = init_params(tiny_cfg, rng_seed=5)
    path = str(tmp_path / "bare")
    save_checkpoint(path, params)
    p2, intent, optimizer, manifest = load_checkpoint(path)
    assert intent is None and optimizer is None
    for name, t in params.tensors.items():
        assert np.array_equal(p2[name].data, t.data)
    assert manifest["intent"] is None
    assert manifest["optimizer_step"] is None


def test_double_save_byte_identical(tmp_path, full_state):
    params, intent, optimizer, run_config = full_state
    a = str(tmp_path / "a")
    b = str(tmp_path / "b")
    save_checkpoint(a, params, intent, optimizer, run_config)
    save_checkpoint(b, params, intent, optimizer, run_config)
    for fname in ("manifest.json", "tensors.bin"):
        with open(os.path.join(a, fname), "rb") as fh:
            ba = fh.read()
        with open(os.path.join(b, fname), "rb") as fh:
            bb = fh.read()
        assert ba == bb, f"{fname} differs between identical saves"


def test_manifest_has_no_timestamps(tmp_path, full_state):
    params, intent, optimizer, run_config = full_state
    path = str(tmp_path / "c")
    save_checkpoint(path, params, intent, optimizer, run_config)
    with open(os.path.join(path, "manifest.json"), "r", encoding="utf-8") as fh:
        text = fh.read()
    for word in ("time", "date", "stamp"):
        assert word not in text.lower()


def test_missing_checkpoint(tmp_path):
    with pytest.raises(CheckpointError):
        load_checkpoint(str(tmp_path / "nope"))


def test_bad_version(tmp_path, full_state):
    params, intent, optimizer, run_config = full_state
    path = str(tmp_path / "d")
    save_checkpoint(path, params, intent, optimizer, run_config)
    mpath = os.path.join(path, "manifest.json")
    with open(mpath, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    manifest["format_version"] = 99
    with open(mpath, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh)
    with pytest.raises(CheckpointError, match="version"):
        load_checkpoint(path)


def test_missing_tensor(tmp_path, full_state):
    params, intent, optimizer, run_config = full_state
    path = str(tmp_path / "e")
    save_checkpoint(path, params, intent, optimizer, run_config)
    mpath = os.path.join(path, "manifest.json")
    with open(mpath, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    manifest["tensors"] = [
        e for e in manifest["tensors"] if e["name"] != "param/item_emb"
    ]
    with open(mpath, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh)
    with pytest.raises(CheckpointError, match="missing tensor"):
        load_checkpoint(path)


def test_truncated_tensors_bin(tmp_path, full_state):
    params, intent, optimizer, run_config = full_state
    path = str(tmp_path / "f")
    save_checkpoint(path, params, intent, optimizer, run_config)
    bpath = os.path.join(path, "tensors.bin")
    with open(bpath, "rb") as fh:
        blob = fh.read()
    with open(bpath, "wb") as fh:
        fh.write(blob[: len(blob) // 2])
    with pytest.raises(CheckpointError, match="past the end"):
        load_checkpoint(path)


def test_unknown_dtype(tmp_path, full_state):
    params, intent, optimizer, run_config = full_state
    path = str(tmp_path / "g")
    save_checkpoint(path, params, intent, optimizer, run_config)
    mpath = os.path.join(path, "manifest.json")
    with open(mpath, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    manifest["tensors"][0]["dtype"] = "float16"
    with open(mpath, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh)
    with pytest.raises(CheckpointError, match="dtype"):
        load_checkpoint(path)


def test_corrupt_manifest_json(tmp_path, full_state):
    params, intent, optimizer, run_config = full_state
    path = str(tmp_path / "h")
    save_checkpoint(path, params, intent, optimizer, run_config)
    with open(os.path.join(path, "manifest.json"), "w", encoding="utf-8") as fh:
        fh.write("{not json")
    with pytest.raises(CheckpointError, match="corrupt"):
        load_checkpoint(path)


def test_loaded_params_usable(tmp_path, tiny_cfg):
    """A reloaded checkpoint must behave identically under the encoder."""
    from intentrec.encoder import encode_batch

    params = init_params(tiny_cfg, rng_seed=8)
    path = str(tmp_path / "i")
    save_checkpoint(path, params)
    p2, _, _, _ = load_checkpoint(path)
    ids = np.array([[0, 0, 1, 2, 3, 4], [5, 6, 7, 8, 9, 10]])
    a = encode_batch(params, ids, train=False)
    b = encode_batch(p2, ids, train=False)
    assert np.array_equal(a.data, b.data)
