"""Linear discriminant analysis and within-class covariance normalization."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cholesky, LinAlgError

from .errors import ConfigError, DimensionError, InsufficientDataError, NotPSDError
from .numerics import DEFAULT_RIDGE, as_matrix, inv_sqrt_psd, sign_flips, sym_eig

ORDERS = ("lda_wccn", "wccn_lda")


@dataclass(frozen=True)
class LdaModel:
    w: np.ndarray
    eigenvalues: np.ndarray
    class_means: np.ndarray
    global_mean: np.ndarray
    ridge: float

    @property
    def m(self) -> int:
        return self.w.shape[1]


@dataclass(frozen=True)
class WccnModel:
    b: np.ndarray
    ridge: float


def _classes(x, labels):
    x = as_matrix(x, "x")
    labels = np.asarray(labels)
    if labels.shape != (x.shape[0],):
        raise DimensionError(f"{labels.shape[0] if labels.ndim else 0} labels for {x.shape[0]} rows")
    classes, counts = np.unique(labels, return_counts=True)
    small = classes[counts < 2]
    if small.size:
        raise InsufficientDataError(f"classes with fewer than 2 samples: {small.tolist()}")
    return x, labels, classes


def scatter_matrices(x, labels):
    """Within- and between-class scatter, each sample weighted equally (divided by N)."""
    x, labels, classes = _classes(x, labels)
    n = x.shape[0]
    mu = x.mean(axis=0)
    s_w = np.zeros((x.shape[1], x.shape[1]))
    s_b = np.zeros_like(s_w)
    means = []
    for c in classes:
        xc = x[labels == c]
        mc = xc.mean(axis=0)
        means.append(mc)
        dc = xc - mc
        s_w += dc.T @ dc
        s_b += len(xc) * np.outer(mc - mu, mc - mu)
    return s_w / n, s_b / n, np.array(means), mu


def fit_lda(x, labels, m: int = None, ridge: float = DEFAULT_RIDGE) -> LdaModel:
    """Top-``m`` eigenvectors of ``(S_w + ridge I)^-1 S_b``.

    Solved through the symmetric similarity transform
    ``W^-1/2 S_b W^-1/2`` with ``W = S_w + ridge I``. ``m`` defaults to C-1.
    """
    x, labels, classes = _classes(x, labels)
    n_classes = classes.size
    if n_classes < 2:
        raise InsufficientDataError("LDA needs at least two classes")
    if m is None:
        m = min(n_classes - 1, x.shape[1])
    if not 1 <= m <= n_classes - 1:
        raise DimensionError(f"m={m} outside [1, {n_classes - 1}] for {n_classes} classes")
    if m > x.shape[1]:
        raise DimensionError(f"m={m} exceeds input dimension {x.shape[1]}")
    s_w, s_b, means, mu = scatter_matrices(x, labels)
    w_half = inv_sqrt_psd(s_w, ridge)
    sym = w_half @ s_b @ w_half
    eig = sym_eig(0.5 * (sym + sym.T))
    w = w_half @ eig.vectors[:, :m]
    w = w * sign_flips(w)
    return LdaModel(w=w, eigenvalues=eig.values[:m], class_means=means, global_mean=mu, ridge=ridge)


def transform_lda(model: LdaModel, x) -> np.ndarray:
    x = as_matrix(x, "x")
    if x.shape[1] != model.w.shape[0]:
        raise DimensionError(f"{x.shape[1]} columns, LDA expects {model.w.shape[0]}")
    return (x - model.global_mean) @ model.w


def within_class_covariance(x, labels) -> np.ndarray:
    """Unweighted mean over classes of each class's (1/n_c) covariance."""
    x, labels, classes = _classes(x, labels)
    total = np.zeros((x.shape[1], x.shape[1]))
    for c in classes:
        dc = x[labels == c] - x[labels == c].mean(axis=0)
        total += dc.T @ dc / dc.shape[0]
    total /= classes.size
    return 0.5 * (total + total.T)


def fit_wccn(x, labels, ridge: float = DEFAULT_RIDGE) -> WccnModel:
    """Lower-triangular ``b`` with ``b b' = (W + ridge I)^-1``."""
    w = within_class_covariance(x, labels)
    reg = w + ridge * np.eye(w.shape[0])
    try:
        # Inverse through the eigenbasis keeps the result symmetric.
        half = inv_sqrt_psd(reg, 0.0)
        b = cholesky(half @ half, lower=True)
    except (NotPSDError, LinAlgError):
        raise NotPSDError("within-class covariance is singular; use a positive ridge") from None
    return WccnModel(b=b, ridge=ridge)


def transform_wccn(model: WccnModel, x) -> np.ndarray:
    x = as_matrix(x, "x")
    if x.shape[1] != model.b.shape[0]:
        raise DimensionError(f"{x.shape[1]} columns, WCCN expects {model.b.shape[0]}")
    return x @ model.b


def fit_lda_wccn(x, labels, m: int = None, lda_ridge: float = DEFAULT_RIDGE,
                 wccn_ridge: float = DEFAULT_RIDGE, order: str = "lda_wccn"):
    """Fit the two projections in the given order; returns ``(lda, wccn)``."""
    if order not in ORDERS:
        raise ConfigError(f"order must be one of {ORDERS}")
    if order == "lda_wccn":
        lda = fit_lda(x, labels, m, lda_ridge)
        wccn = fit_wccn(transform_lda(lda, x), labels, wccn_ridge)
    else:
        wccn = fit_wccn(x, labels, wccn_ridge)
        lda = fit_lda(transform_wccn(wccn, x), labels, m, lda_ridge)
    return lda, wccn


def apply_lda_wccn(lda: LdaModel, wccn: WccnModel, x, order: str = "lda_wccn") -> np.ndarray:
    if order == "lda_wccn":
        return transform_wccn(wccn, transform_lda(lda, x))
    return transform_lda(lda, transform_wccn(wccn, x))
