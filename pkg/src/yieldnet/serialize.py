"""Versioned flat binary container for trained models.

Layout: 5-byte magic ``YNET1``, little-endian uint32 header length, UTF-8
JSON header, then the raw little-endian array payloads in header-manifest
order (float64 ``<f8`` or int64 ``<i8``). The header records the model kind,
its configuration, and the array manifest (name, shape, dtype). Round-trips
are bit-exact.

Array order is fixed per kind: model parameters in construction order, then
buffers, then standardizer arrays, then any mask arrays.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .baselines import AverageModel, ForestModel, LassoModel, RegressionTree
from .data.io import atomic_write_bytes
from .errors import DataFormatError
from .features import Standardizer
from .model import CnnRnnConfig, CnnRnnModel, DfnnConfig, DfnnModel

MAGIC = b"YNET1"

_ST_FIELDS = (
    "weather_mean", "weather_sd", "soil_mean", "soil_sd", "surface_mean",
    "surface_sd", "management_mean", "management_sd",
)


def _st_arrays(st: Standardizer):
    arrays = [(f"st.{name}", getattr(st, name), "<f8") for name in _ST_FIELDS]
    arrays.append((
        "st.scalars",
        np.array([
            st.avg_yield_mean, st.avg_yield_sd, st.target_mean, st.target_sd,
            1.0 if st.standardize_targets else 0.0,
        ]),
        "<f8",
    ))
    return arrays


def _st_restore(named):
    scalars = named["st.scalars"]
    return Standardizer(
        **{name: named[f"st.{name}"] for name in _ST_FIELDS},
        avg_yield_mean=float(scalars[0]),
        avg_yield_sd=float(scalars[1]),
        target_mean=float(scalars[2]),
        target_sd=float(scalars[3]),
        standardize_targets=bool(scalars[4]),
    )


def _collect(model):
    arrays = []
    if isinstance(model, CnnRnnModel):
        config = {"type": "cnn-rnn", "config": model.config.__dict__ | {}}
        for name, arr in model.params.items():
            arrays.append((f"p.{name}", arr, "<f8"))
        if model.standardizer is not None:
            arrays.extend(_st_arrays(model.standardizer))
        if model.input_mask is not None:
            arrays.append(("mask.keep", model.input_mask.astype(np.int64), "<i8"))
            arrays.append(("mask.fill", model.mask_fill, "<f8"))
    elif isinstance(model, DfnnModel):
        config = {"type": "dfnn", "config": model.config.__dict__ | {}}
        for name, arr in model.params.items():
            arrays.append((f"p.{name}", arr, "<f8"))
        for name, arr in model.buffers.items():
            arrays.append((f"buf.{name}", arr, "<f8"))
        if model.standardizer is not None:
            arrays.extend(_st_arrays(model.standardizer))
    elif isinstance(model, LassoModel):
        config = {"type": "lasso", "lam": model.lam, "intercept": model.intercept,
                  "n_sweeps": model.n_sweeps}
        arrays.append(("coef", model.coef, "<f8"))
        if model.standardizer is not None:
            arrays.extend(_st_arrays(model.standardizer))
    elif isinstance(model, ForestModel):
        config = {"type": "rf", "seed": model.seed,
                  "tree_sizes": [len(t.feature) for t in model.trees]}
        for field, dtype in (("feature", "<i8"), ("threshold", "<f8"),
                             ("left", "<i8"), ("right", "<i8"), ("value", "<f8")):
            stacked = np.concatenate([getattr(t, field) for t in model.trees])
            arrays.append((f"trees.{field}", stacked, dtype))
        if model.standardizer is not None:
            arrays.extend(_st_arrays(model.standardizer))
    elif isinstance(model, AverageModel):
        config = {"type": "average"}
        arrays.append(("mean", np.array([model.mean]), "<f8"))
        if model.standardizer is not None:
            arrays.extend(_st_arrays(model.standardizer))
    else:
        raise DataFormatError(f"cannot serialize object of type {type(model).__name__}")
    return config, arrays


def to_bytes(model) -> bytes:
    config, arrays = _collect(model)
    manifest = []
    payload = bytearray()
    for name, arr, dtype in arrays:
        arr = np.ascontiguousarray(np.asarray(arr), dtype=dtype)
        manifest.append({"name": name, "shape": list(arr.shape), "dtype": dtype})
        payload += arr.tobytes()
    header = json.dumps({"model": config, "arrays": manifest}, sort_keys=True).encode()
    return MAGIC + struct.pack("<I", len(header)) + header + bytes(payload)


def save_model(model, path):
    atomic_write_bytes(path, to_bytes(model))


def from_bytes(blob: bytes):
    if blob[:5] != MAGIC:
        raise DataFormatError("not a model container (bad magic)")
    (hlen,) = struct.unpack("<I", blob[5:9])
    header = json.loads(blob[9 : 9 + hlen].decode())
    offset = 9 + hlen
    named = {}
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        width = 8
        arr = np.frombuffer(blob, dtype=entry["dtype"], count=count, offset=offset)
        named[entry["name"]] = arr.reshape(shape).copy()
        offset += count * width
    if offset != len(blob):
        raise DataFormatError("model container has trailing bytes")
    spec = header["model"]
    kind = spec["type"]
    if kind == "cnn-rnn":
        cfg_dict = dict(spec["config"])
        for key in ("wcnn_channels", "wcnn_pool", "scnn_channels", "scnn_pool"):
            cfg_dict[key] = tuple(cfg_dict[key])
        config = CnnRnnConfig(**cfg_dict)
        params = {n[2:]: a for n, a in named.items() if n.startswith("p.")}
        model = CnnRnnModel(config=config, params=params)
        if "st.scalars" in named:
            model.standardizer = _st_restore(named)
        if "mask.keep" in named:
            model.input_mask = named["mask.keep"].astype(bool)
            model.mask_fill = named["mask.fill"]
        return model
    if kind == "dfnn":
        config = DfnnConfig(**spec["config"])
        params = {n[2:]: a for n, a in named.items() if n.startswith("p.")}
        buffers = {n[4:]: a for n, a in named.items() if n.startswith("buf.")}
        model = DfnnModel(config=config, params=params, buffers=buffers)
        if "st.scalars" in named:
            model.standardizer = _st_restore(named)
        return model
    st = _st_restore(named) if "st.scalars" in named else None
    if kind == "lasso":
        return LassoModel(coef=named["coef"], intercept=spec["intercept"],
                          lam=spec["lam"], n_sweeps=spec["n_sweeps"], standardizer=st)
    if kind == "rf":
        trees = []
        start = 0
        for size in spec["tree_sizes"]:
            sl = slice(start, start + size)
            trees.append(RegressionTree(
                feature=named["trees.feature"][sl],
                threshold=named["trees.threshold"][sl],
                left=named["trees.left"][sl],
                right=named["trees.right"][sl],
                value=named["trees.value"][sl],
            ))
            start += size
        return ForestModel(trees=trees, seed=spec["seed"], standardizer=st)
    if kind == "average":
        return AverageModel(mean=float(named["mean"][0]), standardizer=st)
    raise DataFormatError(f"unknown model type tag {kind!r}")


def load_model(path):
    with open(path, "rb") as fh:
        return from_bytes(fh.read())
