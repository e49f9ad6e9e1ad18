"""Confusion matrices, accuracy / macro precision / macro recall, text reports."""
from __future__ import annotations

import re
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DataError, DimensionError, InputError

BEST_MARK = "*"


@dataclass(frozen=True)
class ConfusionMatrix:
    labels: tuple
    counts: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.shape != (len(self.labels), len(self.labels)):
            raise DimensionError(f"counts shape {counts.shape} does not match {len(self.labels)} labels")
        if np.any(counts < 0):
            raise InputError("confusion counts must be non-negative")
        object.__setattr__(self, "counts", counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    macro_precision: float
    macro_recall: float
    per_class: tuple


def confusion(truth: Sequence, pred: Sequence, labels: Sequence) -> ConfusionMatrix:
    """Rows are true labels, columns predicted labels, both in ``labels`` order."""
    truth, pred = list(truth), list(pred)
    if len(truth) != len(pred):
        raise DimensionError(f"{len(truth)} truths vs {len(pred)} predictions")
    if not truth:
        raise DataError("nothing to evaluate")
    index = {lab: i for i, lab in enumerate(labels)}
    unknown = {x for x in truth + pred if x not in index}
    if unknown:
        raise DataError(f"unknown labels: {sorted(map(str, unknown))}")
    counts = np.zeros((len(labels), len(labels)), dtype=np.int64)
    np.add.at(counts, ([index[t] for t in truth], [index[p] for p in pred]), 1)
    return ConfusionMatrix(tuple(labels), counts)


def metrics(cm: ConfusionMatrix) -> Metrics:
    counts = cm.counts.astype(np.float64)
    total = counts.sum()
    if total == 0:
        raise DataError("empty confusion matrix")
    diag = np.diag(counts)
    col = counts.sum(axis=0)
    row = counts.sum(axis=1)
    empty_cols = [cm.labels[i] for i in np.flatnonzero(col == 0)]
    if empty_cols:
        warnings.warn(f"no predictions for {empty_cols}; precision set to 0", RuntimeWarning, stacklevel=2)
    empty_rows = [cm.labels[i] for i in np.flatnonzero(row == 0)]
    if empty_rows:
        warnings.warn(f"no true samples for {empty_rows}; recall set to 0", RuntimeWarning, stacklevel=2)
    precision = np.divide(diag, col, out=np.zeros_like(diag), where=col > 0)
    recall = np.divide(diag, row, out=np.zeros_like(diag), where=row > 0)
    return Metrics(
        accuracy=float(diag.sum() / total),
        macro_precision=float(precision.mean()),
        macro_recall=float(recall.mean()),
        per_class=tuple((float(p), float(r)) for p, r in zip(precision, recall)),
    )


def report(named_results) -> str:
    """Fixed-width table of ``(name, Metrics, dim)`` rows; best accuracy gets ``*``."""
    rows = list(named_results)
    if not rows:
        raise InputError("no results to report")
    best = max(range(len(rows)), key=lambda i: (rows[i][1].accuracy, -i))
    width = max(len("VSM"), *(len(name) for name, _, _ in rows))
    lines = [f"{'VSM':<{width}}  {'d':>5}  {'ACC':>5}  {'PRC':>5}  {'RCL':>5}"]
    lines.append("-" * len(lines[0]))
    for i, (name, m, dim) in enumerate(rows):
        mark = BEST_MARK if i == best else ""
        lines.append(
            f"{name:<{width}}  {dim:>5d}  {m.accuracy:>5.2f}  {m.macro_precision:>5.2f}  {m.macro_recall:>5.2f}{mark}"
        )
    return "\n".join(lines) + "\n"


_ROW = re.compile(r"^(?P<name>.+?)\s+(?P<dim>\d+)\s+(?P<acc>[\d.]+)\s+(?P<prc>[\d.]+)\s+(?P<rcl>[\d.]+)(?P<best>\*?)$")


def parse_report(text: str):
    """Inverse of :func:`report`: list of dicts with name, dim, acc, prc, rcl, best."""
    out = []
    for line in text.splitlines()[2:]:
        if not line.strip():
            continue
        match = _ROW.match(line.rstrip())
        if match is None:
            raise InputError(f"unparseable report line: {line!r}")
        out.append({
            "name": match["name"].strip(),
            "dim": int(match["dim"]),
            "acc": float(match["acc"]),
            "prc": float(match["prc"]),
            "rcl": float(match["rcl"]),
            "best": bool(match["best"]),
        })
    return out


def format_confusion(cm: ConfusionMatrix) -> str:
    width = max(5, *(len(lab) for lab in cm.labels), len(str(int(cm.counts.max(initial=0)))))
    head = " " * width + "".join(f" {lab:>{width}}" for lab in cm.labels)
    body = [f"{lab:<{width}}" + "".join(f" {v:>{width}d}" for v in row) for lab, row in zip(cm.labels, cm.counts)]
    return "\n".join([head, *body]) + "\n"
