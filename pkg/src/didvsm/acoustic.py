"""GMM-UBM, Baum-Welch statistics, total-variability training and i-vectors.

Supervectors stack component blocks: entry ``g * F + f`` belongs to
component ``g`` and feature ``f``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.cluster.vq import kmeans2
from scipy.special import logsumexp

from .corpus import Dataset, load_frames
from .errors import DataError, DimensionError, InputError, InsufficientDataError

COLLAPSE_OCCUPANCY = 1e-8
FLOOR_SCALE = 1e-4
TV_INIT_SCALE = 0.1
_CHUNK = 256


@dataclass(frozen=True)
class GmmUbm:
    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    loglik_history: tuple = ()

    @property
    def g(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]


@dataclass(frozen=True)
class BaumWelchStats:
    n: np.ndarray
    f: np.ndarray


@dataclass(frozen=True)
class TvModel:
    t: np.ndarray
    u: np.ndarray

    @property
    def r(self) -> int:
        return self.t.shape[1]


def _frames_array(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1:
        raise InputError(f"frames must be a non-empty 2-D array, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise InputError("frames contain non-finite values")
    return x


def component_loglik(x: np.ndarray, ubm: GmmUbm) -> np.ndarray:
    """``log(w_g) + log N(x_t | mu_g, diag var_g)`` as a T x G array."""
    prec = 1.0 / ubm.variances
    quad = (x ** 2) @ prec.T - 2.0 * x @ (ubm.means * prec).T + np.sum(ubm.means ** 2 * prec, axis=1)
    log_norm = -0.5 * (ubm.dim * math.log(2 * math.pi) + np.sum(np.log(ubm.variances), axis=1))
    with np.errstate(divide="ignore"):
        log_w = np.log(ubm.weights)
    return log_w + log_norm - 0.5 * quad


def total_loglik(x, ubm: GmmUbm) -> float:
    return float(np.sum(logsumexp(component_loglik(_frames_array(x), ubm), axis=1)))


def _kmeans_init(x: np.ndarray, g: int, rng, floor: np.ndarray) -> GmmUbm:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        centroids, assign = kmeans2(x, g, iter=10, minit="++", missing="warn", rng=rng)
    global_var = x.var(axis=0)
    weights = np.empty(g)
    variances = np.empty_like(centroids)
    for k in range(g):
        members = x[assign == k]
        weights[k] = max(len(members), 1)
        variances[k] = members.var(axis=0) if len(members) > 1 else global_var
    weights /= weights.sum()
    return GmmUbm(weights, centroids, np.maximum(variances, floor))


def _reseed_collapsed(means, variances, weights, dead: np.ndarray):
    for k in np.flatnonzero(dead):
        donor = int(np.argmax(np.where(dead, -np.inf, variances.sum(axis=1))))
        offset = 0.5 * np.sqrt(variances[donor])
        means[k] = means[donor] + offset
        means[donor] = means[donor] - offset
        variances[k] = variances[donor]
        weights[k] = weights[donor] = 0.5 * weights[donor]
        warnings.warn(f"UBM component {k} collapsed; re-seeded from component {donor}", RuntimeWarning, stacklevel=3)


def train_ubm(frames: Sequence, g: int, iters: int, seed: int,
              var_floor: Optional[float] = None, init: Optional[GmmUbm] = None) -> GmmUbm:
    """EM-train a diagonal-covariance GMM on pooled frames.

    Means start from seeded k-means unless ``init`` supplies a starting
    model (its variances are floored). ``var_floor`` defaults to
    ``1e-4 * global per-dimension variance``. The returned model carries the
    total log-likelihood before each EM step and after the last one.
    """
    x = np.vstack([_frames_array(f) for f in frames])
    if g < 1:
        raise InputError("g must be >= 1")
    if x.shape[0] < g:
        raise InsufficientDataError(f"{x.shape[0]} frames cannot fit {g} components")
    if iters < 0:
        raise InputError("iters must be >= 0")
    if var_floor is None:
        global_var = x.var(axis=0)
        floor = FLOOR_SCALE * np.where(global_var > 0, global_var, 1.0)
    else:
        if var_floor <= 0:
            raise InputError("var_floor must be positive")
        floor = np.full(x.shape[1], float(var_floor))

    rng = np.random.default_rng(seed)
    # Work in globally centered coordinates to limit cancellation in the variance update.
    shift = x.mean(axis=0)
    xc = x - shift
    if init is None:
        if np.unique(x, axis=0).shape[0] < g:
            raise InsufficientDataError(f"fewer distinct frames than the {g} components")
        init = _kmeans_init(xc, g, rng, floor)
    else:
        if init.means.shape != (g, x.shape[1]):
            raise DimensionError(f"init model has shape {init.means.shape}, expected {(g, x.shape[1])}")
        init = GmmUbm(init.weights, init.means - shift, np.maximum(init.variances, floor))
    weights, means, variances = init.weights.copy(), init.means.copy(), init.variances.copy()
    history = []
    xsq = xc ** 2
    for _ in range(iters):
        model = GmmUbm(weights, means, variances)
        ll = component_loglik(xc, model)
        norm = logsumexp(ll, axis=1, keepdims=True)
        history.append(float(np.sum(norm)))
        gamma = np.exp(ll - norm)
        occ = gamma.sum(axis=0)
        dead = occ < COLLAPSE_OCCUPANCY
        safe = np.where(dead, 1.0, occ)
        new_means = (gamma.T @ xc) / safe[:, None]
        new_vars = (gamma.T @ xsq) / safe[:, None] - new_means ** 2
        new_weights = occ / occ.sum()
        means = np.where(dead[:, None], means, new_means)
        variances = np.maximum(np.where(dead[:, None], variances, new_vars), floor)
        weights = new_weights
        if dead.any():
            _reseed_collapsed(means, variances, weights, dead)
            weights = weights / weights.sum()
    final = GmmUbm(weights, means, variances)
    history.append(total_loglik(xc, final))
    return GmmUbm(weights, means + shift, variances, tuple(history))


def accumulate_stats(x, ubm: GmmUbm) -> BaumWelchStats:
    """Zeroth- and centered first-order statistics of one utterance."""
    x = _frames_array(x)
    if x.shape[1] != ubm.dim:
        raise DimensionError(f"frames have {x.shape[1]} dims, UBM has {ubm.dim}")
    ll = component_loglik(x, ubm)
    gamma = np.exp(ll - logsumexp(ll, axis=1, keepdims=True))
    n = gamma.sum(axis=0)
    f = gamma.T @ x - n[:, None] * ubm.means
    return BaumWelchStats(n=n, f=f)


def _stack_stats(stats, ubm: GmmUbm):
    n = np.stack([s.n for s in stats])
    f = np.stack([s.f.reshape(-1) for s in stats])
    if n.shape[1] != ubm.g or f.shape[1] != ubm.g * ubm.dim:
        raise DimensionError("statistics do not match the UBM shape")
    return n, f


def _posteriors(n_chunk, f_chunk, t, sigma, g, dim):
    """Posterior means (U x R) and precisions (U x R x R) for a chunk."""
    r = t.shape[1]
    t3 = t.reshape(g, dim, r)
    tst = np.einsum("gfr,gfs->grs", t3 / sigma.reshape(g, dim, 1), t3)
    prec = np.eye(r) + np.einsum("ug,grs->urs", n_chunk, tst)
    lin = f_chunk @ (t / sigma[:, None])
    means = np.linalg.solve(prec, lin[:, :, None])[:, :, 0]
    return means, prec


def train_tv(stats: Sequence[BaumWelchStats], ubm: GmmUbm, r: int, iters: int, seed: int,
             init: Optional[np.ndarray] = None, min_divergence: bool = False) -> TvModel:
    """Maximum-likelihood EM for the total-variability matrix.

    E-step: per utterance, precision ``L = I + T' S^-1 N T`` and posterior
    mean ``v = L^-1 T' S^-1 f``. M-step: for each component block,
    ``T_g = C_g A_g^-1`` with ``A_g = sum_u n_g (L^-1 + v v')`` and
    ``C_g = sum_u f_g v'``.
    """
    stats = list(stats)
    if not stats:
        raise InsufficientDataError("no statistics to train on")
    g, dim = ubm.g, ubm.dim
    sv = g * dim
    if not 1 <= r <= sv:
        raise DimensionError(f"r={r} outside [1, {sv}]")
    n_all, f_all = _stack_stats(stats, ubm)
    sigma = ubm.variances.reshape(-1)
    if init is None:
        rng = np.random.default_rng(seed)
        t = rng.standard_normal((sv, r)) * np.sqrt(sigma)[:, None] * TV_INIT_SCALE
    else:
        t = np.array(init, dtype=np.float64).reshape(sv, r)

    for _ in range(iters):
        acc_a = np.zeros((g, r, r))
        acc_c = np.zeros((sv, r))
        acc_phi = np.zeros((r, r))
        for start in range(0, len(stats), _CHUNK):
            nc = n_all[start:start + _CHUNK]
            fc = f_all[start:start + _CHUNK]
            means, prec = _posteriors(nc, fc, t, sigma, g, dim)
            phi = np.linalg.inv(prec) + means[:, :, None] * means[:, None, :]
            acc_a += np.einsum("ug,urs->grs", nc, phi)
            acc_c += fc.T @ means
            acc_phi += phi.sum(axis=0)
        c3 = acc_c.reshape(g, dim, r)
        new_t = np.empty_like(c3)
        for k in range(g):
            a = acc_a[k]
            if np.linalg.cond(a) > 1e12:
                warnings.warn(f"singular M-step system for component {k}; adding ridge 1e-8",
                              RuntimeWarning, stacklevel=2)
                a = a + 1e-8 * np.eye(r)
            new_t[k] = np.linalg.solve(a, c3[k].T).T
        t = new_t.reshape(sv, r)
        if min_divergence:
            t = t @ np.linalg.cholesky(acc_phi / len(stats))
    return TvModel(t=t, u=ubm.means.reshape(-1).copy())


def extract_ivectors(stats: Sequence[BaumWelchStats], tv: TvModel, ubm: GmmUbm) -> np.ndarray:
    stats = list(stats)
    if tv.t.shape[0] != ubm.g * ubm.dim:
        raise DimensionError("TV matrix does not match the UBM supervector size")
    if not stats:
        return np.zeros((0, tv.r))
    n_all, f_all = _stack_stats(stats, ubm)
    sigma = ubm.variances.reshape(-1)
    out = []
    for start in range(0, len(stats), _CHUNK):
        means, _ = _posteriors(n_all[start:start + _CHUNK], f_all[start:start + _CHUNK],
                               tv.t, sigma, ubm.g, ubm.dim)
        out.append(means)
    return np.vstack(out)


def extract_ivector(s: BaumWelchStats, tv: TvModel, ubm: GmmUbm) -> np.ndarray:
    """Posterior mean ``(I + T' S^-1 N T)^-1 T' S^-1 f`` for one utterance."""
    return extract_ivectors([s], tv, ubm)[0]


def reconstruct_supervector(tv: TvModel, v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (tv.r,):
        raise DimensionError(f"i-vector has shape {v.shape}, expected ({tv.r},)")
    return tv.u + tv.t @ v


def length_normalize(x: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    return x / np.where(norms > 0, norms, 1.0)


def build_acoustic_vsm(d: Dataset, ubm: GmmUbm, tv: TvModel, length_norm: bool = False,
                       loader=load_frames) -> np.ndarray:
    """Stack the i-vectors of every record, in dataset order."""
    missing = [r.id for r in d.records if r.frames_ref is None]
    if missing:
        raise DataError(f"records without frames: {missing[:5]}")
    stats = []
    for rec in d.records:
        try:
            frames = loader(rec.frames_ref)
        except FileNotFoundError:
            raise DataError(f"frames file for {rec.id!r} not found: {rec.frames_ref}") from None
        stats.append(accumulate_stats(frames, ubm))
    x = extract_ivectors(stats, tv, ubm)
    return length_normalize(x) if length_norm else x
