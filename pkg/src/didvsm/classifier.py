"""Softmax regression with elastic-net penalty, and score-level fusion.

Training minimizes::

    mean cross-entropy + reg_strength * (l1_ratio * |W|_1 + l2_ratio * 0.5 * |W|_2^2)

by proximal stochastic gradient: a gradient step on the cross-entropy, then
the closed-form elastic-net proximal map on ``W``. The bias is never
penalized.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import log_softmax, softmax

from .errors import DataError, DimensionError, DivergenceError, InputError
from .numerics import as_matrix

SCHEDULES = ("invscaling", "constant")
SCORE_SPACES = ("prob", "logodds")


@dataclass(frozen=True)
class TrainConfig:
    l1_ratio: float = 0.5
    l2_ratio: float = 0.5
    reg_strength: float = 1e-4
    learning_rate: float = 0.1
    schedule: str = "invscaling"
    epochs: int = 20
    batch: int = 1
    seed: int = 0
    standardize: bool = True

    def __post_init__(self):
        if self.l1_ratio < 0 or self.l2_ratio < 0:
            raise InputError("elastic-net ratios must be >= 0")
        if self.reg_strength < 0:
            raise InputError("reg_strength must be >= 0")
        if self.learning_rate <= 0:
            raise InputError("learning_rate must be positive")
        if self.schedule not in SCHEDULES:
            raise InputError(f"schedule must be one of {SCHEDULES}")
        if self.epochs < 1:
            raise InputError("epochs must be >= 1")
        if self.batch < 0:
            raise InputError("batch must be >= 0 (0 means full batch)")


@dataclass(frozen=True)
class SoftmaxModel:
    w: np.ndarray
    bias: np.ndarray
    label_set: tuple
    x_mean: Optional[np.ndarray] = None
    x_scale: Optional[np.ndarray] = None
    loss_history: tuple = ()

    def scaled(self, x: np.ndarray) -> np.ndarray:
        if self.x_mean is None:
            return x
        return (x - self.x_mean) / self.x_scale


def _label_index(labels, label_set) -> np.ndarray:
    labels = np.asarray(labels)
    index = {lab: i for i, lab in enumerate(label_set)}
    try:
        return np.array([index[lab.item() if hasattr(lab, "item") else lab] for lab in labels], dtype=np.int64)
    except KeyError as exc:
        raise DataError(f"label {exc.args[0]!r} is not in the label set") from None


def cross_entropy(w, bias, x, y) -> float:
    logp = log_softmax(x @ w + bias, axis=1)
    return float(-np.mean(logp[np.arange(len(y)), y]))


def objective(w, bias, x, y, cfg: TrainConfig) -> float:
    """Full penalized objective on already-scaled features and index labels."""
    pen = cfg.reg_strength * (cfg.l1_ratio * np.abs(w).sum() + 0.5 * cfg.l2_ratio * np.sum(w * w))
    return cross_entropy(w, bias, x, y) + float(pen)


def smooth_gradient(w, bias, x, y, cfg: TrainConfig):
    """Gradient of cross-entropy plus the L2 term, as ``(dW, db)``."""
    p = softmax(x @ w + bias, axis=1)
    p[np.arange(len(y)), y] -= 1.0
    p /= len(y)
    return x.T @ p + cfg.reg_strength * cfg.l2_ratio * w, p.sum(axis=0)


def l1_subgradient(w, cfg: TrainConfig) -> np.ndarray:
    return cfg.reg_strength * cfg.l1_ratio * np.sign(w)


def prox_elastic_net(w, step: float, cfg: TrainConfig) -> np.ndarray:
    shrunk = np.sign(w) * np.maximum(np.abs(w) - step * cfg.reg_strength * cfg.l1_ratio, 0.0)
    return shrunk / (1.0 + step * cfg.reg_strength * cfg.l2_ratio)


def lipschitz_bound(x, cfg: TrainConfig) -> float:
    """Upper bound on the curvature of the smooth objective in (W, b)."""
    aug = np.hstack([x, np.ones((x.shape[0], 1))])
    top = np.linalg.norm(aug, 2) ** 2
    return 0.5 * top / x.shape[0] + cfg.reg_strength * cfg.l2_ratio


def train_softmax(x, labels, cfg: TrainConfig = TrainConfig(),
                  label_set: Optional[Sequence] = None) -> SoftmaxModel:
    x = as_matrix(x, "x")
    if label_set is None:
        label_set = tuple(np.unique(np.asarray(labels)).tolist())
    label_set = tuple(label_set)
    y = _label_index(labels, label_set)
    n, dim = x.shape
    if y.size != n:
        raise DimensionError(f"{y.size} labels for {n} rows")
    if n < len(label_set):
        raise DataError(f"{n} samples for {len(label_set)} classes")

    if cfg.standardize:
        mean = x.mean(axis=0)
        scale = x.std(axis=0)
        scale = np.where(scale > 0, scale, 1.0)
        xs = (x - mean) / scale
    else:
        mean = scale = None
        xs = x

    n_classes = len(label_set)
    w = np.zeros((dim, n_classes))
    b = np.zeros(n_classes)
    rng = np.random.default_rng(cfg.seed)
    batch = n if cfg.batch == 0 else min(cfg.batch, n)
    eta0 = cfg.learning_rate
    step_count = 0
    history = []
    # Overflow is caught below as divergence, so numpy's own warnings are noise.
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(1, cfg.epochs + 1):
            order = np.arange(n) if cfg.batch == 0 else rng.permutation(n)
            for start in range(0, n, batch):
                idx = order[start:start + batch]
                if cfg.schedule == "invscaling":
                    eta = eta0 / (1.0 + eta0 * cfg.reg_strength * step_count)
                else:
                    eta = eta0
                logits = xs[idx] @ w + b
                p = softmax(logits, axis=1)
                p[np.arange(idx.size), y[idx]] -= 1.0
                p /= idx.size
                w = prox_elastic_net(w - eta * (xs[idx].T @ p), eta, cfg)
                b = b - eta * p.sum(axis=0)
                step_count += 1
            loss = objective(w, b, xs, y, cfg)
            if not np.isfinite(loss) or not np.all(np.isfinite(w)):
                raise DivergenceError(f"training diverged at epoch {epoch}")
            history.append(loss)
    return SoftmaxModel(w=w, bias=b, label_set=label_set, x_mean=mean, x_scale=scale,
                        loss_history=tuple(history))


def predict_proba(m: SoftmaxModel, x) -> np.ndarray:
    x = as_matrix(x, "x")
    if x.shape[1] != m.w.shape[0]:
        raise DimensionError(f"{x.shape[1]} columns, model expects {m.w.shape[0]}")
    logits = m.scaled(x) @ m.w + m.bias
    logits -= logits.max(axis=1, keepdims=True)
    e = np.exp(logits)
    return e / e.sum(axis=1, keepdims=True)


def predict_index(proba) -> np.ndarray:
    """Row-wise argmax; ties go to the lowest label index."""
    return np.argmax(np.asarray(proba), axis=1)


def predict(m: SoftmaxModel, x) -> list:
    return [m.label_set[i] for i in predict_index(predict_proba(m, x))]


def score_fuse(probas: Sequence, weights=None, space: str = "prob") -> np.ndarray:
    """Weighted combination of per-system posterior matrices.

    ``space="prob"`` averages probabilities; ``space="logodds"`` averages log
    probabilities and renormalizes with a softmax. Rows of the result sum to 1.
    """
    probas = [np.asarray(p, dtype=np.float64) for p in probas]
    if not probas:
        raise InputError("nothing to fuse")
    shape = probas[0].shape
    if any(p.shape != shape for p in probas):
        raise DimensionError("probability matrices have different shapes")
    weights = np.ones(len(probas)) if weights is None else np.asarray(weights, dtype=np.float64)
    if weights.shape != (len(probas),):
        raise DimensionError("need one weight per system")
    if np.any(weights < 0) or weights.sum() <= 0:
        raise InputError("weights must be >= 0 and not all zero")
    if space not in SCORE_SPACES:
        raise InputError(f"space must be one of {SCORE_SPACES}")
    weights = weights / weights.sum()
    if space == "prob":
        fused = sum(wt * p for wt, p in zip(weights, probas))
        return fused / fused.sum(axis=1, keepdims=True)
    with np.errstate(divide="ignore"):
        logs = [np.log(p) for p in probas]
    fused = sum(wt * lp for wt, lp in zip(weights, logs) if wt > 0)
    return softmax(fused, axis=1)
