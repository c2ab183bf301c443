"""Self-describing JSON checkpoints: layer spec + flat float64 parameters.

Arrays are stored little-endian base64 so a checkpoint written with the same
state is byte-identical.  A version field guards format drift.
"""

from __future__ import annotations

import base64
import json

import numpy as np

from ..errors import CheckpointError

CHECKPOINT_VERSION = 1


def _encode(a: np.ndarray) -> dict:
    return {"shape": list(a.shape),
            "data": base64.b64encode(a.astype("<f8").tobytes()).decode("ascii")}


def _decode(rec: dict) -> np.ndarray:
    raw = base64.b64decode(rec["data"])
    a = np.frombuffer(raw, dtype="<f8").astype(np.float64)
    expect = int(np.prod(rec["shape"])) if rec["shape"] else 1
    if a.size != expect:
        raise CheckpointError(f"parameter payload size {a.size} != shape {rec['shape']}")
    return a.reshape(rec["shape"])


def save_checkpoint(path: str, kind: str, model_spec, params: list[np.ndarray],
                    metadata: dict) -> None:
    doc = {
        "version": CHECKPOINT_VERSION,
        "kind": kind,
        "model": model_spec,
        "params": [_encode(np.asarray(p)) for p in params],
        "metadata": metadata,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_checkpoint(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise CheckpointError(f"unreadable checkpoint {path}: {e}") from e
    if not isinstance(doc, dict) or "version" not in doc:
        raise CheckpointError(f"{path} is not a checkpoint")
    if doc["version"] != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {doc['version']}")
    for key in ("kind", "model", "params", "metadata"):
        if key not in doc:
            raise CheckpointError(f"checkpoint missing field {key!r}")
    doc["params"] = [_decode(r) for r in doc["params"]]
    return doc
