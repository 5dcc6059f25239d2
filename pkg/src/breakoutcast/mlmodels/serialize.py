"""Versioned JSON model files with exact float64 round-tripping.

Arrays are stored as base64 little-endian bytes plus shape, so a loaded
model reproduces the saved one bit for bit on any platform.
"""

import base64
import json
from pathlib import Path

import numpy as np

from breakoutcast.errors import ValidationError

FORMAT_VERSION = 1

_ARRAY_TAG = "__ndarray__"
_DTYPES = {"<f8": np.float64, "<i4": np.int32, "<i8": np.int64, "|b1": np.bool_}


def encode_value(obj):
    """Recursively replace ndarrays with tagged base64 dicts."""
    if isinstance(obj, np.ndarray):
        for code, dtype in _DTYPES.items():
            if obj.dtype == dtype:
                data = np.ascontiguousarray(obj, dtype=np.dtype(code))
                return {
                    _ARRAY_TAG: base64.b64encode(data.tobytes()).decode("ascii"),
                    "dtype": code,
                    "shape": list(obj.shape),
                }
        raise TypeError(f"unsupported array dtype: {obj.dtype}")
    if isinstance(obj, dict):
        return {str(k): encode_value(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [encode_value(v) for v in obj]
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, (np.integer, np.bool_)):
        return obj.item()
    return obj


def decode_value(obj):
    if isinstance(obj, dict):
        if _ARRAY_TAG in obj:
            code = obj["dtype"]
            if code not in _DTYPES:
                raise ValidationError(f"unsupported array dtype in file: {code}")
            raw = base64.b64decode(obj[_ARRAY_TAG])
            arr = np.frombuffer(raw, dtype=np.dtype(code))
            return arr.reshape(obj["shape"]).copy()
        return {k: decode_value(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [decode_value(v) for v in obj]
    return obj


def _registry():
    from breakoutcast.classical import ClassicalPerEntityModel
    from breakoutcast.mlmodels.neural import LstmRegressor, MlnnRegressor
    from breakoutcast.mlmodels.trees import (
        GradientBoostedTrees,
        RandomForestRegressor,
    )

    classes = (
        RandomForestRegressor,
        GradientBoostedTrees,
        MlnnRegressor,
        LstmRegressor,
        ClassicalPerEntityModel,
    )
    return {cls.kind: cls for cls in classes}


def save_model(model, path):
    doc = {
        "format_version": FORMAT_VERSION,
        "kind": model.kind,
        "state": encode_value(model.state_dict()),
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True))


def load_model(path):
    doc = json.loads(Path(path).read_text())
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ValidationError(f"unsupported model file version: {version!r}")
    registry = _registry()
    kind = doc.get("kind")
    if kind not in registry:
        raise ValidationError(f"unknown model kind: {kind!r}")
    return registry[kind].from_state(decode_value(doc["state"]))
