"""Versioned model serialization: one .npz holding arrays plus a JSON
manifest under the key "__manifest__". Nested component models (the
numerator and propensity inside a PU model) are stored with prefixed
array keys. An optional feature scaler (mean/std) rides along so scoring
pipelines can reproduce training-time standardization.
"""

from __future__ import annotations

import dataclasses
import io
import json

import numpy as np

from .errors import DataError
from .forest import RandomForest, RFConfig
from .pu import ConstantModel, PUModel
from .svm import SVMConfig, WeightedLinearSVM

__all__ = ["save_model", "load_model", "FORMAT_VERSION"]

FORMAT_VERSION = 1

_RF_ARRAYS = ("feat", "thr", "left", "right", "value", "offsets")


def _encode(model, prefix, arrays):
    if isinstance(model, RandomForest):
        for name in _RF_ARRAYS:
            arrays[prefix + name] = getattr(model, name)
        cfg = dataclasses.asdict(model.config) if model.config else None
        return {"kind": "random_forest", "feature_dims": model.feature_dims,
                "config": cfg}
    if isinstance(model, WeightedLinearSVM):
        arrays[prefix + "w"] = model.w
        cfg = dataclasses.asdict(model.config) if model.config else None
        return {"kind": "weighted_linear_svm", "feature_dims": model.feature_dims,
                "b": model.b, "calib_a": model.calib_a, "calib_b": model.calib_b,
                "config": cfg}
    if isinstance(model, ConstantModel):
        return {"kind": "constant", "feature_dims": model.feature_dims,
                "value": model.value}
    if isinstance(model, PUModel):
        entry = {"kind": "pu", "pu_kind": model.kind, "c": model.c,
                 "denominator_floor": model.denominator_floor,
                 "notes": model.notes,
                 "numerator": _encode(model.numerator_model,
                                      prefix + "num.", arrays)}
        if model.propensity_model is not None:
            entry["propensity"] = _encode(model.propensity_model,
                                          prefix + "prop.", arrays)
        return entry
    raise TypeError(f"cannot serialize {type(model).__name__}")


def _decode(entry, prefix, arrays):
    kind = entry["kind"]
    if kind == "random_forest":
        cfg = RFConfig(**entry["config"]) if entry.get("config") else None
        parts = {name: arrays[prefix + name] for name in _RF_ARRAYS}
        return RandomForest(feature_dims=entry["feature_dims"], config=cfg,
                            **parts)
    if kind == "weighted_linear_svm":
        cfg = SVMConfig(**entry["config"]) if entry.get("config") else None
        return WeightedLinearSVM(arrays[prefix + "w"], entry["b"],
                                 entry["calib_a"], entry["calib_b"],
                                 entry["feature_dims"], cfg)
    if kind == "constant":
        return ConstantModel(entry["value"], entry["feature_dims"])
    if kind == "pu":
        numerator = _decode(entry["numerator"], prefix + "num.", arrays)
        propensity = None
        if "propensity" in entry:
            propensity = _decode(entry["propensity"], prefix + "prop.", arrays)
        return PUModel(kind=entry["pu_kind"], numerator_model=numerator,
                       c=entry["c"], propensity_model=propensity,
                       denominator_floor=entry["denominator_floor"],
                       notes=entry.get("notes", ""))
    raise DataError(f"unknown model kind {kind!r} in model file")


def save_model(model, path, scaler=None, extra_meta=None) -> None:
    """Write any supported model to path. scaler, if given, is a
    (mean, std) array pair; extra_meta is a JSON-safe dict."""
    arrays = {}
    manifest = {"version": FORMAT_VERSION, "model": _encode(model, "", arrays)}
    if scaler is not None:
        mean, std = scaler
        arrays["scaler.mean"] = np.asarray(mean, dtype=np.float64)
        arrays["scaler.std"] = np.asarray(std, dtype=np.float64)
        manifest["has_scaler"] = True
    if extra_meta:
        manifest["extra"] = extra_meta
    arrays["__manifest__"] = np.frombuffer(
        json.dumps(manifest).encode(), dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez_compressed(fh, **arrays)


def load_model(path):
    """Read a model file; returns (model, scaler_or_None, extra_meta)."""
    with np.load(path) as data:
        if "__manifest__" not in data:
            raise DataError("not a model file: manifest missing")
        manifest = json.loads(bytes(data["__manifest__"]).decode())
        if manifest.get("version") != FORMAT_VERSION:
            raise DataError(
                f"unsupported model format version {manifest.get('version')!r}")
        arrays = {k: data[k] for k in data.files if k != "__manifest__"}
    model = _decode(manifest["model"], "", arrays)
    scaler = None
    if manifest.get("has_scaler"):
        scaler = (arrays["scaler.mean"], arrays["scaler.std"])
    return model, scaler, manifest.get("extra", {})
