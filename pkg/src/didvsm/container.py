"""Versioned binary container for fitted models (``MVDM``).

Layout (little-endian)::

    b"MVDM" | version u32 | header length u32 | JSON header | array payload

The JSON header is written with sorted keys and no whitespace and holds the
stage tag, creation metadata (config hash, seed), scalar attributes, and an
index of the arrays (name, dtype, shape, byte offset into the payload).
Arrays are stored raw, C order, so a load/save cycle is byte-identical.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .acoustic import GmmUbm, TvModel
from .classifier import SoftmaxModel
from .discriminant import LdaModel, WccnModel
from .errors import FormatError
from .fusion import CcaModel
from .phonotactic import NgramVocab, PhonotacticProjector

MAGIC = b"MVDM"
VERSION = 1
STAGES = ("vocab", "projector", "ubm", "tv", "cca", "lda", "wccn", "softmax")
_PREFIX = struct.Struct("<4sII")
_DTYPES = {"f8": "<f8", "i8": "<i8"}


@dataclass
class Container:
    stage: str
    meta: dict = field(default_factory=dict)
    attrs: dict = field(default_factory=dict)
    arrays: dict = field(default_factory=dict)


def _canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def dumps(c: Container) -> bytes:
    if c.stage not in STAGES:
        raise FormatError(f"unknown stage tag {c.stage!r}")
    index = []
    chunks = []
    offset = 0
    for name in sorted(c.arrays):
        arr = np.asarray(c.arrays[name])
        kind = "i8" if np.issubdtype(arr.dtype, np.integer) else "f8"
        raw = np.ascontiguousarray(arr, dtype=_DTYPES[kind]).tobytes()
        index.append({"name": name, "dtype": kind, "shape": list(arr.shape), "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    header = _canonical_json({"stage": c.stage, "meta": c.meta, "attrs": c.attrs, "arrays": index})
    return _PREFIX.pack(MAGIC, VERSION, len(header)) + header + b"".join(chunks)


def loads(blob: bytes) -> Container:
    if len(blob) < _PREFIX.size:
        raise FormatError("container shorter than its prefix")
    magic, version, hlen = _PREFIX.unpack_from(blob)
    if magic != MAGIC:
        raise FormatError(f"bad container magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"unsupported container version {version}")
    start = _PREFIX.size
    try:
        header = json.loads(blob[start:start + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"corrupt container header: {exc}") from None
    payload = blob[start + hlen:]
    arrays = {}
    for entry in header["arrays"]:
        raw = payload[entry["offset"]:entry["offset"] + entry["nbytes"]]
        if len(raw) != entry["nbytes"]:
            raise FormatError(f"array {entry['name']!r} is truncated")
        arrays[entry["name"]] = np.frombuffer(raw, dtype=_DTYPES[entry["dtype"]]).reshape(entry["shape"]).copy()
    expected = sum(e["nbytes"] for e in header["arrays"])
    if len(payload) != expected:
        raise FormatError(f"payload has {len(payload)} bytes, index implies {expected}")
    if header["stage"] not in STAGES:
        raise FormatError(f"unknown stage tag {header['stage']!r}")
    return Container(header["stage"], header["meta"], header["attrs"], arrays)


def save(path, c: Container) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps(c))


def load(path, stage: str = None) -> Container:
    with open(path, "rb") as fh:
        c = loads(fh.read())
    if stage is not None and c.stage != stage:
        raise FormatError(f"{path}: expected a {stage!r} container, found {c.stage!r}")
    return c


def _plain(v):
    return v.item() if isinstance(v, np.generic) else v


def _opt(arr):
    return None if arr is None else np.asarray(arr)


def encode(model, meta: dict = None) -> Container:
    """Wrap a fitted model in a container with the matching stage tag."""
    meta = dict(meta or {})
    if isinstance(model, NgramVocab):
        return Container("vocab", meta, {"orders": list(model.orders), "terms": [list(t) for t in model.terms]})
    if isinstance(model, PhonotacticProjector):
        return Container("projector", meta, {"weighting": model.weighting},
                         {"pi": model.pi, "singular_values": model.singular_values, "mean": model.mean})
    if isinstance(model, GmmUbm):
        return Container("ubm", meta, {"loglik_history": [float(v) for v in model.loglik_history]},
                         {"weights": model.weights, "means": model.means, "variances": model.variances})
    if isinstance(model, TvModel):
        return Container("tv", meta, {}, {"t": model.t, "u": model.u})
    if isinstance(model, CcaModel):
        return Container("cca", meta, {"ridge": float(model.ridge)},
                         {"phi_p": model.phi_p, "phi_a": model.phi_a, "correlations": model.correlations,
                          "mean_p": model.mean_p, "mean_a": model.mean_a})
    if isinstance(model, LdaModel):
        return Container("lda", meta, {"ridge": float(model.ridge)},
                         {"w": model.w, "eigenvalues": model.eigenvalues, "class_means": model.class_means,
                          "global_mean": model.global_mean})
    if isinstance(model, WccnModel):
        return Container("wccn", meta, {"ridge": float(model.ridge)}, {"b": model.b})
    if isinstance(model, SoftmaxModel):
        arrays = {"w": model.w, "bias": model.bias}
        if model.x_mean is not None:
            arrays.update(x_mean=model.x_mean, x_scale=model.x_scale)
        return Container("softmax", meta,
                         {"label_set": [_plain(v) for v in model.label_set],
                          "loss_history": [float(v) for v in model.loss_history]},
                         arrays)
    raise TypeError(f"cannot encode {type(model).__name__}")


def decode(c: Container):
    a, x = c.attrs, c.arrays
    if c.stage == "vocab":
        return NgramVocab(tuple(a["orders"]), [tuple(t) for t in a["terms"]])
    if c.stage == "projector":
        return PhonotacticProjector(x["pi"], x["singular_values"], x["mean"], a["weighting"])
    if c.stage == "ubm":
        return GmmUbm(x["weights"], x["means"], x["variances"], tuple(a["loglik_history"]))
    if c.stage == "tv":
        return TvModel(x["t"], x["u"])
    if c.stage == "cca":
        return CcaModel(x["phi_p"], x["phi_a"], x["correlations"], x["mean_p"], x["mean_a"], a["ridge"])
    if c.stage == "lda":
        return LdaModel(x["w"], x["eigenvalues"], x["class_means"], x["global_mean"], a["ridge"])
    if c.stage == "wccn":
        return WccnModel(x["b"], a["ridge"])
    if c.stage == "softmax":
        return SoftmaxModel(x["w"], x["bias"], tuple(a["label_set"]), _opt(x.get("x_mean")),
                            _opt(x.get("x_scale")), tuple(a["loss_history"]))
    raise FormatError(f"unknown stage tag {c.stage!r}")
