"""Dense linear-algebra primitives used by every modelling stage.

Vectors returned by :func:`truncated_svd` and :func:`sym_eig` follow one sign
convention: each column is flipped so that its largest-magnitude entry is
positive (ties go to the lowest row index). This keeps fitted models
bit-reproducible across runs.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import svds

from .errors import DimensionError, InputError, InsufficientDataError, NotPSDError

DEFAULT_RIDGE = 1e-6

# Above this size a sparse input is decomposed iteratively instead of densified.
_DENSE_LIMIT = 1500


@dataclass(frozen=True)
class SvdResult:
    u: np.ndarray
    s: np.ndarray
    v: np.ndarray


@dataclass(frozen=True)
class EigResult:
    values: np.ndarray
    vectors: np.ndarray


def as_matrix(a, name="matrix") -> np.ndarray:
    """Return ``a`` as a finite 2-D float64 array or raise :class:`InputError`."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise InputError(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise InputError(f"{name} has non-finite entries")
    return m


def sign_flips(vectors: np.ndarray) -> np.ndarray:
    """Per-column signs making each column's largest-magnitude entry positive."""
    if vectors.shape[0] == 0:
        return np.ones(vectors.shape[1])
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return signs


def truncated_svd(m, k: int, tol: float = 1e-8) -> SvdResult:
    """Top-``k`` singular triplets of ``m`` (dense array or scipy sparse matrix).

    Returns ``u`` (n x k), ``s`` (k, descending) and ``v`` (m x k) so that
    ``m ~= u @ diag(s) @ v.T`` with the optimal rank-``k`` error.
    """
    if tol <= 0:
        raise InputError("tol must be positive")
    if sp.issparse(m):
        m = sp.csr_matrix(m, dtype=np.float64)
        if not np.all(np.isfinite(m.data)):
            raise InputError("matrix has non-finite entries")
    else:
        m = as_matrix(m)
    n_rows, n_cols = m.shape
    if not 1 <= k <= min(n_rows, n_cols):
        raise DimensionError(f"k={k} outside [1, {min(n_rows, n_cols)}]")

    if sp.issparse(m) and min(n_rows, n_cols) > _DENSE_LIMIT and k < min(n_rows, n_cols) // 2:
        v0 = np.full(min(n_rows, n_cols), 1.0 / np.sqrt(min(n_rows, n_cols)))
        u, s, vt = svds(m, k=k, tol=0, v0=v0)
        order = np.argsort(-s, kind="stable")
        u, s, v = u[:, order], s[order], vt[order].T
    else:
        dense = m.toarray() if sp.issparse(m) else m
        u, s, vt = np.linalg.svd(dense, full_matrices=False)
        u, s, v = u[:, :k], s[:k], vt[:k].T

    signs = sign_flips(v)
    return SvdResult(u=u * signs, s=np.maximum(s, 0.0), v=v * signs)


def check_symmetric(a, atol: float = 1e-10, name="matrix") -> np.ndarray:
    a = as_matrix(a, name)
    if a.shape[0] != a.shape[1]:
        raise InputError(f"{name} must be square, got {a.shape}")
    if a.size and np.max(np.abs(a - a.T)) > atol:
        raise InputError(f"{name} is not symmetric within {atol}")
    return a


def sym_eig(a, atol: float = 1e-10) -> EigResult:
    """Full eigendecomposition of a symmetric matrix, eigenvalues descending."""
    a = check_symmetric(a, atol)
    a = 0.5 * (a + a.T)
    values, vectors = np.linalg.eigh(a)
    values, vectors = values[::-1], vectors[:, ::-1]
    return EigResult(values=values.copy(), vectors=vectors * sign_flips(vectors))


def inv_sqrt_psd(c, ridge: float = DEFAULT_RIDGE) -> np.ndarray:
    """Symmetric inverse square root ``(c + ridge*I)^(-1/2)``."""
    if ridge < 0:
        raise InputError("ridge must be non-negative")
    c = check_symmetric(c, atol=1e-8 * max(1.0, float(np.max(np.abs(c))) if np.size(c) else 1.0))
    reg = 0.5 * (c + c.T) + ridge * np.eye(c.shape[0])
    values, vectors = np.linalg.eigh(reg)
    if values.size and values[0] < -1e-8:
        raise NotPSDError(f"smallest eigenvalue {values[0]:.3e} is negative")
    if values.size and values[0] <= 0:
        raise NotPSDError("matrix is singular; use a positive ridge")
    return (vectors / np.sqrt(values)) @ vectors.T


def cross_cov(x, y, center: bool = True) -> np.ndarray:
    """Sample cross-covariance ``x~.T @ y~ / (N - 1)``."""
    x = as_matrix(x, "x")
    y = as_matrix(y, "y")
    if x.shape[0] != y.shape[0]:
        raise DimensionError(f"row counts differ: {x.shape[0]} vs {y.shape[0]}")
    n = x.shape[0]
    if n < 2:
        raise InsufficientDataError("need at least 2 samples for a covariance")
    if center:
        x = x - x.mean(axis=0)
        y = y - y.mean(axis=0)
    return x.T @ y / (n - 1)
