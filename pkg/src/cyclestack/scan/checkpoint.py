"""Checkpoint directory format: manifest.json + weights.bin.

The manifest records the stage configs, training position (epoch/iteration),
RNG state, a metric log, and ordered parameter records {name, shape,
byte_offset}; weights.bin is the little-endian float32 concatenation in
manifest order. Round trips are bit-exact.
"""

from __future__ import annotations

import json
import os
from typing import Optional

import numpy as np

from ..errors import ManifestError, TruncatedWeightsError, WeightShapeError
from .pipeline import Pipeline, StageSpec

FORMAT_VERSION = 1

MANIFEST_NAME = "manifest.json"
WEIGHTS_NAME = "weights.bin"


def save_checkpoint(
    pipeline: Pipeline,
    path,
    epoch: int = 0,
    iteration: int = 0,
    rng_state: Optional[dict] = None,
    metric_log: Optional[list] = None,
    extra: Optional[dict] = None,
) -> None:
    path = os.fspath(path)
    os.makedirs(path, exist_ok=True)
    store = pipeline.parameter_store()
    records = []
    offset = 0
    with open(os.path.join(path, WEIGHTS_NAME), "wb") as f:
        for name, t in store.items():
            raw = t.data.astype("<f4", copy=False).tobytes()
            records.append(
                {"name": name, "shape": list(t.shape), "byte_offset": offset}
            )
            f.write(raw)
            offset += len(raw)
    manifest = {
        "format_version": FORMAT_VERSION,
        "seed": pipeline.seed,
        "stages": [
            {**stage.spec.to_dict(), "uw_w": stage.uw_w} for stage in pipeline.stages
        ],
        "epoch": epoch,
        "iteration": iteration,
        "rng_state": rng_state,
        "metric_log": metric_log or [],
        "total_bytes": offset,
        "params": records,
    }
    if extra:
        manifest["extra"] = extra
    with open(os.path.join(path, MANIFEST_NAME), "w") as f:
        json.dump(manifest, f, indent=1, sort_keys=True)
        f.write("\n")


def load_manifest(path) -> dict:
    manifest_path = os.path.join(os.fspath(path), MANIFEST_NAME)
    try:
        with open(manifest_path) as f:
            manifest = json.load(f)
    except FileNotFoundError:
        raise ManifestError(f"no checkpoint manifest at {manifest_path}") from None
    except json.JSONDecodeError as e:
        raise ManifestError(f"corrupt checkpoint manifest: {e}") from None
    if not isinstance(manifest, dict):
        raise ManifestError("checkpoint manifest must be a JSON object")
    if manifest.get("format_version") != FORMAT_VERSION:
        raise ManifestError(
            f"unsupported checkpoint format_version {manifest.get('format_version')!r}"
        )
    for key in ("seed", "stages", "params"):
        if key not in manifest:
            raise ManifestError(f"checkpoint manifest missing {key!r}")
    return manifest


def load_checkpoint(path) -> tuple[Pipeline, dict]:
    """Rebuild the pipeline a checkpoint describes and fill in its weights."""
    path = os.fspath(path)
    manifest = load_manifest(path)
    specs = []
    uw_ws = []
    for entry in manifest["stages"]:
        entry = dict(entry)
        uw_ws.append(float(entry.pop("uw_w", 0.0)))
        try:
            specs.append(StageSpec.from_dict(entry))
        except Exception as e:
            raise ManifestError(f"bad stage spec in checkpoint: {e}") from None
    pipeline = Pipeline(specs, manifest["seed"])
    for stage, w in zip(pipeline.stages, uw_ws):
        stage.uw_w = w

    store = pipeline.parameter_store()
    expected_names = store.names()
    records = manifest["params"]
    record_names = [r.get("name") for r in records]
    if record_names != expected_names:
        missing = sorted(set(expected_names) - set(record_names))
        extra = sorted(set(record_names) - set(expected_names))
        if missing:
            raise ManifestError(f"checkpoint is missing parameter {missing[0]!r}")
        if extra:
            raise ManifestError(f"checkpoint has unknown parameter {extra[0]!r}")
        raise ManifestError("checkpoint parameter order does not match")

    weights_path = os.path.join(path, WEIGHTS_NAME)
    try:
        blob = open(weights_path, "rb").read()
    except FileNotFoundError:
        raise TruncatedWeightsError(f"no weight blob at {weights_path}") from None

    offset = 0
    for rec in records:
        name = rec["name"]
        t = store.get(name)
        shape = tuple(rec.get("shape", ()))
        if shape != t.shape:
            raise WeightShapeError(
                f"parameter {name!r}: checkpoint shape {shape}, expected {t.shape}"
            )
        if rec.get("byte_offset") != offset:
            raise ManifestError(
                f"parameter {name!r}: byte_offset {rec.get('byte_offset')}, "
                f"expected {offset}"
            )
        nbytes = t.numel * 4
        chunk = blob[offset : offset + nbytes]
        if len(chunk) != nbytes:
            raise TruncatedWeightsError(
                f"weight blob ends inside parameter {name!r} "
                f"({len(blob)} bytes total)"
            )
        t.data[...] = np.frombuffer(chunk, dtype="<f4").reshape(t.shape)
        offset += nbytes
    if offset != len(blob):
        raise TruncatedWeightsError(
            f"weight blob has {len(blob) - offset} trailing bytes"
        )
    return pipeline, manifest
