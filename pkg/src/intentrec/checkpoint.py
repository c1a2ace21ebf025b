"""Versioned on-disk checkpoints.

A checkpoint is a directory with two files:

* ``manifest.json``: format version, encoder config, run config echo,
  optimizer step count, intent-model metadata, and an index of every tensor
  (name, shape, dtype, byte offset, byte length).
* ``tensors.bin``: the tensors' raw values, concatenated in manifest order,
  row-major (C order), little-endian.  Parameters are float64, assignment
  vectors int64.

The layout has no timestamps and is written deterministically, so two runs
with the same seed produce byte-identical checkpoints.  Any language that
can parse JSON and read flat binary can reload it.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict

import numpy as np

from .clustering import IntentModel
from .encoder import EncoderConfig, EncoderParams
from .trainer import OptimizerSnapshot

FORMAT_VERSION = 1

_DTYPES = {"float64": "<f8", "int64": "<i8"}


class CheckpointError(Exception):
    """The checkpoint is missing, corrupt, or has an unsupported version."""


def save_checkpoint(
    path: str,
    params: EncoderParams,
    intent_model: IntentModel | None = None,
    optimizer: OptimizerSnapshot | None = None,
    run_config: dict | None = None,
) -> None:
    os.makedirs(path, exist_ok=True)
    entries = []
    blobs = []
    offset = 0

    def push(name: str, arr: np.ndarray, dtype: str):
        nonlocal offset
        raw = np.ascontiguousarray(arr).astype(_DTYPES[dtype]).tobytes()
        entries.append(
            {
                "name": name,
                "shape": list(arr.shape),
                "dtype": dtype,
                "offset": offset,
                "nbytes": len(raw),
            }
        )
        blobs.append(raw)
        offset += len(raw)

    for name, t in params.tensors.items():
        push(f"param/{name}", t.data, "float64")
    if optimizer is not None:
        for name, arr in optimizer.m.items():
            push(f"adam_m/{name}", arr, "float64")
        for name, arr in optimizer.v.items():
            push(f"adam_v/{name}", arr, "float64")
    if intent_model is not None:
        push("intent/centroids", intent_model.centroids, "float64")
        push("intent/assignments", intent_model.assignments, "int64")

    manifest = {
        "format_version": FORMAT_VERSION,
        "byte_order": "little",
        "layout": "C",
        "encoder_config": asdict(params.config),
        "optimizer_step": optimizer.step if optimizer is not None else None,
        "intent": None
        if intent_model is None
        else {
            "k": intent_model.k,
            "rng_seed": intent_model.rng_seed,
            "distortion": intent_model.distortion,
        },
        "run_config": run_config,
        "tensors": entries,
    }
    with open(os.path.join(path, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=1)
        fh.write("\n")
    with open(os.path.join(path, "tensors.bin"), "wb") as fh:
        for raw in blobs:
            fh.write(raw)


def load_checkpoint(
    path: str,
) -> tuple[EncoderParams, IntentModel | None, OptimizerSnapshot | None, dict]:
    manifest_path = os.path.join(path, "manifest.json")
    bin_path = os.path.join(path, "tensors.bin")
    try:
        with open(manifest_path, "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
        with open(bin_path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint at {path!r}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"corrupt checkpoint manifest at {path!r}: {exc}") from exc

    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointError(
            f"unsupported checkpoint format version {version!r} (expected {FORMAT_VERSION})"
        )

    arrays: dict[str, np.ndarray] = {}
    for entry in manifest["tensors"]:
        dtype = _DTYPES.get(entry["dtype"])
        if dtype is None:
            raise CheckpointError(f"unknown dtype {entry['dtype']!r} in checkpoint")
        lo, n = entry["offset"], entry["nbytes"]
        if lo + n > len(blob):
            raise CheckpointError("tensor data extends past the end of tensors.bin")
        arr = np.frombuffer(blob[lo : lo + n], dtype=dtype).reshape(entry["shape"])
        arrays[entry["name"]] = arr.astype(np.float64 if entry["dtype"] == "float64" else np.int64)

    from .encoder import init_params  # deferred to avoid import cycles at module load

    cfg = EncoderConfig(**manifest["encoder_config"])
    params = init_params(cfg, rng_seed=0)
    snapshot = {}
    for name in params.names():
        key = f"param/{name}"
        if key not in arrays:
            raise CheckpointError(f"checkpoint is missing tensor {key!r}")
        snapshot[name] = arrays[key]
    params.load_snapshot(snapshot)

    optimizer = None
    if manifest.get("optimizer_step") is not None:
        m = {n: arrays[f"adam_m/{n}"] for n in params.names() if f"adam_m/{n}" in arrays}
        v = {n: arrays[f"adam_v/{n}"] for n in params.names() if f"adam_v/{n}" in arrays}
        if len(m) == len(params.names()) and len(v) == len(params.names()):
            optimizer = OptimizerSnapshot(m=m, v=v, step=int(manifest["optimizer_step"]))

    intent = None
    if manifest.get("intent") is not None and "intent/centroids" in arrays:
        meta = manifest["intent"]
        centroids = arrays["intent/centroids"]
        assignments = arrays["intent/assignments"]
        intent = IntentModel(
            centroids=centroids,
            assignments=assignments,
            k=int(meta["k"]),
            distortion=float(meta["distortion"]),
            rng_seed=int(meta["rng_seed"]),
        )
    return params, intent, optimizer, manifest
