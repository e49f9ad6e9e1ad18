"""Canonical correlation analysis between the phonotactic and acoustic views.

The fit whitens each view's covariance, takes the SVD of the whitened
cross-covariance ``C_pp^-1/2 C_pa C_aa^-1/2 = U diag(rho) V'`` and maps the
singular vectors back: ``phi_p = C_pp^-1/2 U``, ``phi_a = C_aa^-1/2 V``.
Both direction matrices are stored column-wise (p x c and q x c).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, InsufficientDataError
from .numerics import DEFAULT_RIDGE, as_matrix, cross_cov, inv_sqrt_psd, truncated_svd

DEFAULT_C = 300


@dataclass(frozen=True)
class CovarianceSet:
    c_pp: np.ndarray
    c_aa: np.ndarray
    c_pa: np.ndarray
    mean_p: np.ndarray
    mean_a: np.ndarray


@dataclass(frozen=True)
class CcaModel:
    phi_p: np.ndarray
    phi_a: np.ndarray
    correlations: np.ndarray
    mean_p: np.ndarray
    mean_a: np.ndarray
    ridge: float

    @property
    def c(self) -> int:
        return self.correlations.size


def covariance_set(x_p, x_a) -> CovarianceSet:
    x_p = as_matrix(x_p, "x_p")
    x_a = as_matrix(x_a, "x_a")
    if x_p.shape[0] != x_a.shape[0]:
        raise DimensionError(f"views have {x_p.shape[0]} and {x_a.shape[0]} rows")
    if x_p.shape[0] < 2:
        raise InsufficientDataError("CCA needs at least 2 samples")
    mean_p, mean_a = x_p.mean(axis=0), x_a.mean(axis=0)
    xp, xa = x_p - mean_p, x_a - mean_a
    c_pp = cross_cov(xp, xp, center=False)
    c_aa = cross_cov(xa, xa, center=False)
    return CovarianceSet(
        c_pp=0.5 * (c_pp + c_pp.T),
        c_aa=0.5 * (c_aa + c_aa.T),
        c_pa=cross_cov(xp, xa, center=False),
        mean_p=mean_p,
        mean_a=mean_a,
    )


def fit_cca(x_p, x_a, c: int = DEFAULT_C, ridge: float = DEFAULT_RIDGE) -> CcaModel:
    cov = covariance_set(x_p, x_a)
    p, q = cov.c_pa.shape
    if not 1 <= c <= min(p, q):
        raise DimensionError(f"c={c} outside [1, {min(p, q)}]")
    w_p = inv_sqrt_psd(cov.c_pp, ridge)
    w_a = inv_sqrt_psd(cov.c_aa, ridge)
    res = truncated_svd(w_p @ cov.c_pa @ w_a, c)
    return CcaModel(
        phi_p=w_p @ res.u,
        phi_a=w_a @ res.v,
        correlations=res.s,
        mean_p=cov.mean_p,
        mean_a=cov.mean_a,
        ridge=ridge,
    )


def transform(m: CcaModel, x_p, x_a) -> np.ndarray:
    """Shared representation: phonotactic variates then acoustic variates."""
    x_p = as_matrix(x_p, "x_p")
    x_a = as_matrix(x_a, "x_a")
    if x_p.shape[1] != m.phi_p.shape[0] or x_a.shape[1] != m.phi_a.shape[0]:
        raise DimensionError("view widths do not match the CCA model")
    if x_p.shape[0] != x_a.shape[0]:
        raise DimensionError("views have different row counts")
    return np.hstack([(x_p - m.mean_p) @ m.phi_p, (x_a - m.mean_a) @ m.phi_a])


def canonical_correlations(m: CcaModel) -> np.ndarray:
    return m.correlations.copy()
