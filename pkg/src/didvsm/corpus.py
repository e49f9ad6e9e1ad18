"""Utterance manifests, MVF1 frame files, synthetic two-view data and splits.

Manifest files hold one JSON object per line::

    {"id": "utt1", "label": "EGY", "phones": ["a", "b"], "frames": "utt1.mvf"}

Relative ``frames`` paths resolve against the manifest's directory. Frames are
only opened by :func:`load_frames`, so a manifest may name files that do not
exist yet.

Random generation uses ``numpy.random.default_rng(seed)`` (PCG64) everywhere.
"""
from __future__ import annotations

import json
import math
import os
import struct
import warnings
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import DataError, FormatError, InputError

DEFAULT_LABELS = ("EGY", "GLF", "LAV", "MSA", "NOR")

MVF_MAGIC = b"MVF1"
MVF_VERSION = 1
_MVF_HEADER = struct.Struct("<4sIII")


@dataclass(frozen=True)
class UtteranceRecord:
    id: str
    label: Optional[str] = None
    phones: Optional[tuple] = None
    frames_ref: Optional[str] = None

    def __post_init__(self):
        if self.phones is not None and not isinstance(self.phones, tuple):
            object.__setattr__(self, "phones", tuple(self.phones))


@dataclass(frozen=True)
class Dataset:
    records: tuple
    label_set: tuple = DEFAULT_LABELS

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        object.__setattr__(self, "label_set", tuple(self.label_set))
        if len(self.label_set) < 2:
            raise InputError("label set needs at least two labels")
        if len(set(self.label_set)) != len(self.label_set):
            raise InputError("label set has duplicates")
        known = set(self.label_set)
        seen = set()
        for rec in self.records:
            if rec.id in seen:
                raise DataError(f"duplicate utterance id {rec.id!r}")
            seen.add(rec.id)
            if rec.label is not None and rec.label not in known:
                raise DataError(f"record {rec.id!r} has unknown label {rec.label!r}")

    def __len__(self):
        return len(self.records)

    @property
    def ids(self):
        return [r.id for r in self.records]

    def label_indices(self) -> np.ndarray:
        """Integer class index of every record, in label-set order."""
        index = {name: i for i, name in enumerate(self.label_set)}
        missing = [r.id for r in self.records if r.label is None]
        if missing:
            raise DataError(f"unlabeled records: {missing[:5]}")
        return np.array([index[r.label] for r in self.records], dtype=np.int64)


def load_manifest(path, label_set: Sequence[str] = DEFAULT_LABELS) -> Dataset:
    path = Path(path)
    base = path.parent
    records = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}:{lineno}: {exc.msg}") from None
            if not isinstance(obj, dict) or not isinstance(obj.get("id"), str):
                raise FormatError(f"{path}:{lineno}: expected an object with a string 'id'")
            unknown = set(obj) - {"id", "label", "phones", "frames"}
            if unknown:
                raise FormatError(f"{path}:{lineno}: unknown fields {sorted(unknown)}")
            uid = obj["id"]
            if uid in seen:
                raise DataError(f"{path}:{lineno}: duplicate id {uid!r}")
            seen.add(uid)
            label = obj.get("label")
            if label is not None and label not in label_set:
                raise DataError(f"{path}:{lineno}: unknown label {label!r}")
            phones = obj.get("phones")
            if phones is not None and not all(isinstance(p, str) for p in phones):
                raise FormatError(f"{path}:{lineno}: phones must be strings")
            frames = obj.get("frames")
            if phones is None and frames is None:
                raise FormatError(f"{path}:{lineno}: record has neither phones nor frames")
            if frames is not None:
                frames = str(base / frames) if not os.path.isabs(frames) else frames
            records.append(UtteranceRecord(uid, label, None if phones is None else tuple(phones), frames))
    if not records:
        warnings.warn(f"manifest {path} has no records", stacklevel=2)
    return Dataset(records, tuple(label_set))


def save_manifest(dataset: Dataset, path) -> None:
    path = Path(path)
    base = path.parent.resolve()
    with open(path, "w", encoding="utf-8") as fh:
        for rec in dataset.records:
            frames = rec.frames_ref
            if frames is not None:
                resolved = Path(frames).resolve()
                try:
                    frames = resolved.relative_to(base).as_posix()
                except ValueError:
                    frames = str(resolved)
            obj = {
                "id": rec.id,
                "label": rec.label,
                "phones": None if rec.phones is None else list(rec.phones),
                "frames": frames,
            }
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")


def save_frames(path, values) -> None:
    """Write a matrix as MVF1: header then little-endian float32, row-major."""
    values = np.asarray(values)
    if values.ndim != 2:
        raise InputError(f"frames must be 2-D, got shape {values.shape}")
    if not np.all(np.isfinite(values)):
        raise InputError("frames contain non-finite values")
    rows, cols = values.shape
    payload = np.ascontiguousarray(values, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(_MVF_HEADER.pack(MVF_MAGIC, MVF_VERSION, rows, cols))
        fh.write(payload)


def load_frames(ref) -> np.ndarray:
    """Read an MVF1 file into a float32 array of its declared shape."""
    with open(ref, "rb") as fh:
        blob = fh.read()
    if len(blob) < _MVF_HEADER.size:
        raise FormatError(f"{ref}: file shorter than the MVF1 header")
    magic, version, rows, cols = _MVF_HEADER.unpack_from(blob)
    if magic != MVF_MAGIC:
        raise FormatError(f"{ref}: bad magic {magic!r}")
    if version != MVF_VERSION:
        raise FormatError(f"{ref}: unsupported MVF version {version}")
    if rows == 0 or cols == 0:
        raise DataError(f"{ref}: degenerate shape {rows}x{cols}")
    expected = rows * cols * 4
    payload = blob[_MVF_HEADER.size:]
    if len(payload) != expected:
        raise FormatError(f"{ref}: payload has {len(payload)} bytes, header implies {expected}")
    values = np.frombuffer(payload, dtype="<f4").reshape(rows, cols).copy()
    if not np.all(np.isfinite(values)):
        raise InputError(f"{ref}: non-finite value in payload")
    return values


def stratified_split(d: Dataset, test_fraction: float, seed: int):
    """Split ``d`` into (train, test) keeping per-class proportions.

    Records are canonically sorted by id before shuffling, so the result does
    not depend on input order. Each class contributes
    ``floor(n_c * test_fraction + 0.5)`` records to the test side. Both
    outputs are returned in id order.
    """
    if not 0 < test_fraction < 1:
        raise InputError("test_fraction must lie strictly between 0 and 1")
    unlabeled = [r.id for r in d.records if r.label is None]
    if unlabeled:
        raise DataError(f"cannot stratify unlabeled records: {unlabeled[:5]}")
    rng = np.random.default_rng(seed)
    ordered = sorted(d.records, key=lambda r: r.id)
    test_ids = set()
    for label in d.label_set:
        members = [r for r in ordered if r.label == label]
        n_test = math.floor(len(members) * test_fraction + 0.5)
        perm = rng.permutation(len(members))
        test_ids.update(members[i].id for i in perm[:n_test])
    train = [r for r in ordered if r.id not in test_ids]
    test = [r for r in ordered if r.id in test_ids]
    return Dataset(train, d.label_set), Dataset(test, d.label_set)


@dataclass(frozen=True)
class SynthConfig:
    """Knobs of the two-view generator beyond the required arguments."""

    p_dim: int = 24
    a_dim: int = 12
    private_dim: int = 2
    class_sep: float = 1.0
    private_sep: float = 1.0
    labels: Optional[tuple] = None


def synth_two_view(n_per_class: int, classes: int, shared_dim: int,
                   noise_p: float, noise_a: float, seed: int,
                   config: SynthConfig = SynthConfig()):
    """Generate a labeled two-view dataset with a shared latent factor.

    Every utterance draws a shared latent ``z``: its class mean plus unit
    Gaussian nuisance restricted to the directions orthogonal to the span of
    the class means. Each view also draws a private latent
    ``h = private_class_mean + N(0, I)``. View P is
    ``[z, h_p] @ map_p + noise_p * N(0, I)`` and view A likewise with its own
    fixed random map. Class information is therefore split between a part
    both views see (through ``z``) and parts only one view sees. With both
    noise levels at zero the classes are linearly separable in each view.

    Returns ``(dataset, x_p, x_a)``; rows follow dataset order (class-major).
    """
    if min(n_per_class, classes, shared_dim) < 1:
        raise InputError("counts must be >= 1")
    if classes < 2:
        raise InputError("a label set needs at least two classes")
    if noise_p < 0 or noise_a < 0:
        raise InputError("noise levels must be >= 0")
    cfg = config
    if cfg.p_dim < shared_dim + cfg.private_dim or cfg.a_dim < shared_dim + cfg.private_dim:
        raise InputError("view dimensions must be >= shared_dim + private_dim")
    labels = cfg.labels
    if labels is None:
        labels = DEFAULT_LABELS if classes == len(DEFAULT_LABELS) else tuple(f"C{i}" for i in range(classes))
    if len(labels) != classes:
        raise InputError("labels must have one name per class")

    rng = np.random.default_rng(seed)
    latent = shared_dim + cfg.private_dim
    if shared_dim >= classes - 1:
        # Equidistant class means: a regular simplex, randomly rotated into the latent space.
        simplex = np.eye(classes) - 1.0 / classes
        basis = np.linalg.svd(simplex)[0][:, :classes - 1]
        rot = np.linalg.qr(rng.normal(size=(shared_dim, classes - 1)))[0]
        class_means = cfg.class_sep * math.sqrt(classes - 1) * (simplex @ basis) @ rot.T
    else:
        class_means = rng.normal(0.0, cfg.class_sep, (classes, shared_dim))
    private_p = rng.normal(0.0, cfg.private_sep, (classes, cfg.private_dim))
    private_a = rng.normal(0.0, cfg.private_sep, (classes, cfg.private_dim))
    map_p = rng.normal(size=(latent, cfg.p_dim)) / math.sqrt(latent)
    map_a = rng.normal(size=(latent, cfg.a_dim)) / math.sqrt(latent)

    y = np.repeat(np.arange(classes), n_per_class)
    n = y.size
    # Nuisance never moves a point along the class-mean directions.
    centered = class_means - class_means.mean(axis=0)
    u, sv, _ = np.linalg.svd(centered.T, full_matrices=True)
    span = u[:, :int(np.sum(sv > 1e-10 * max(sv.max(), 1.0)))]
    nuisance = rng.normal(size=(n, shared_dim))
    z = class_means[y] + nuisance - (nuisance @ span) @ span.T
    h_p = private_p[y] + rng.normal(size=(n, cfg.private_dim))
    h_a = private_a[y] + rng.normal(size=(n, cfg.private_dim))
    x_p = np.hstack([z, h_p]) @ map_p + noise_p * rng.normal(size=(n, cfg.p_dim))
    x_a = np.hstack([z, h_a]) @ map_a + noise_a * rng.normal(size=(n, cfg.a_dim))

    width = max(5, len(str(n)))
    records = [UtteranceRecord(f"synth-{i:0{width}d}", labels[y[i]]) for i in range(n)]
    return Dataset(records, tuple(labels)), x_p, x_a


def synth_corpus(d: Dataset, x_p, x_a, seed: int, n_phones: int = 16,
                 phones_per_utt: int = 150, frames_per_utt: int = 120,
                 feat_dim: int = 6, components: int = 8,
                 phone_scale: float = 1.0, frame_scale: float = 1.0):
    """Render two-view latent rows as phone strings and frame matrices.

    Phones come from a Markov chain whose next-phone logits are a fixed base
    table plus a linear function of the utterance's P-view row. Frames come
    from a GMM whose component means shift by a fixed linear map of the
    A-view row, mirroring the total-variability model.

    Returns the dataset with phones filled in and a list of frame arrays.
    """
    x_p = np.asarray(x_p, dtype=np.float64)
    x_a = np.asarray(x_a, dtype=np.float64)
    if not len(d) == x_p.shape[0] == x_a.shape[0]:
        raise InputError("dataset and view rows disagree")
    rng = np.random.default_rng(seed)
    symbols = [f"ph{i:02d}" for i in range(n_phones)]
    base = rng.normal(size=(n_phones, n_phones))
    emit = rng.normal(size=(x_p.shape[1], n_phones)) * phone_scale / math.sqrt(x_p.shape[1])
    means = rng.normal(0.0, 3.0, (components, feat_dim))
    shift = rng.normal(size=(x_a.shape[1], components * feat_dim)) * frame_scale / math.sqrt(x_a.shape[1])

    records = []
    frames = []
    for i, rec in enumerate(d.records):
        logits = base + x_p[i] @ emit
        probs = np.exp(logits - logits.max(axis=1, keepdims=True))
        cdf = np.cumsum(probs / probs.sum(axis=1, keepdims=True), axis=1)
        draws = rng.random(phones_per_utt)
        seq = [int(rng.integers(n_phones))]
        for u in draws[1:]:
            seq.append(min(int(np.searchsorted(cdf[seq[-1]], u)), n_phones - 1))
        records.append(replace(rec, phones=tuple(symbols[s] for s in seq)))

        utt_means = means + (x_a[i] @ shift).reshape(components, feat_dim)
        comp = rng.integers(components, size=frames_per_utt)
        frames.append(utt_means[comp] + rng.normal(size=(frames_per_utt, feat_dim)))
    return Dataset(records, d.label_set), frames
