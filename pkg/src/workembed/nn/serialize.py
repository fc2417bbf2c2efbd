"""JSON round trip for named parameter sets."""

from __future__ import annotations

import json

import numpy as np

from .tensor import Tensor

SCHEMA_VERSION = 1


def params_to_json(params: dict[str, Tensor | np.ndarray]) -> dict:
    layers = []
    for name, value in params.items():
        arr = value.data if isinstance(value, Tensor) else np.asarray(value, dtype=np.float64)
        layers.append({"name": name, "shape": list(arr.shape),
                       "values": [float(v) for v in arr.reshape(-1)]})
    return {"schema_version": SCHEMA_VERSION, "layers": layers}


def params_from_json(doc: dict) -> dict[str, np.ndarray]:
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported parameter schema_version {doc.get('schema_version')!r}")
    out = {}
    for layer in doc["layers"]:
        shape = tuple(layer["shape"])
        values = np.array(layer["values"], dtype=np.float64)
        if values.size != int(np.prod(shape)):
            raise ValueError(f"layer {layer['name']!r}: {values.size} values for shape {shape}")
        out[layer["name"]] = values.reshape(shape)
    return out


def load_into(params: dict[str, Tensor], values: dict[str, np.ndarray]) -> None:
    missing = set(params) - set(values)
    if missing:
        raise ValueError(f"missing parameters: {sorted(missing)}")
    for name, tensor in params.items():
        if values[name].shape != tensor.data.shape:
            raise ValueError(f"{name}: stored shape {values[name].shape} != {tensor.data.shape}")
        tensor.data = values[name].copy()


def dumps(doc: dict) -> str:
    """Canonical JSON text: sorted keys, shortest round-trip float repr."""
    return json.dumps(doc, sort_keys=True, indent=1, allow_nan=False) + "\n"
