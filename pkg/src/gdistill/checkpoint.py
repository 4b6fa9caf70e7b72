"""Flat named-tensor checkpoints: a JSON document with one record per tensor
(name, dims, row-major values) plus the config hash and free-form metadata.

Floats are written with ``repr`` precision, so a save/load round trip is
bit-exact.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .policy import PolicyParams, ValueParams

FORMAT = "gdistill-tensors/1"


class CheckpointError(ValueError):
    pass


def save_tensors(path, tensors: dict, config_hash: str = "", meta: dict | None = None) -> str:
    """Write the container and return the sha256 of the bytes written."""
    records = []
    for name in sorted(tensors):
        a = np.asarray(tensors[name], dtype=np.float64)
        records.append({"name": name, "dims": list(a.shape), "values": [float(x) for x in a.ravel()]})
    doc = {"format": FORMAT, "config_hash": config_hash, "meta": meta or {}, "tensors": records}
    text = json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    tmp.replace(path)
    return hashlib.sha256(text.encode()).hexdigest()


def load_tensors(path) -> tuple[dict, str, dict]:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise
    except (OSError, ValueError) as exc:
        raise CheckpointError(f"{path}: not a readable checkpoint ({exc})") from exc
    if doc.get("format") != FORMAT:
        raise CheckpointError(f"{path}: unknown checkpoint format {doc.get('format')!r}")
    out = {}
    for rec in doc["tensors"]:
        vals = np.array(rec["values"], dtype=np.float64)
        dims = tuple(rec["dims"])
        if vals.size != int(np.prod(dims)):
            raise CheckpointError(f"{path}: tensor {rec['name']} has {vals.size} values for dims {dims}")
        out[rec["name"]] = vals.reshape(dims)
    return out, doc.get("config_hash", ""), doc.get("meta", {})


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def save_policy(path, p: PolicyParams, v: ValueParams, config_hash: str = "", meta: dict | None = None) -> str:
    tensors = {"theta": p.theta, "temperature": [p.temperature], "prompt_dim": [p.prompt_dim],
               "omega": v.omega, "value_bias": [v.bias]}
    return save_tensors(path, tensors, config_hash, meta)


def load_policy(path) -> tuple[PolicyParams, ValueParams, str, dict]:
    t, h, meta = load_tensors(path)
    try:
        p = PolicyParams(t["theta"], float(t["temperature"][0]), int(t["prompt_dim"][0]))
        v = ValueParams(t["omega"], float(t["value_bias"][0]))
    except KeyError as exc:
        raise CheckpointError(f"{path}: missing tensor {exc}") from exc
    return p, v, h, meta


def save_adapter(path, psi, config_hash: str = "", meta: dict | None = None) -> str:
    tensors = {"W1": psi.W1, "b1": psi.b1, "W2": psi.W2, "b2": psi.b2, "prompt_shape": [psi.L_p, psi.d_p]}
    return save_tensors(path, tensors, config_hash, meta)


def load_adapter(path):
    from .stta import AdapterParams
    t, h, meta = load_tensors(path)
    L_p, d_p = (int(x) for x in t["prompt_shape"])
    return AdapterParams(t["W1"], t["b1"], t["W2"], t["b2"], L_p, d_p), h, meta
