"""Phone n-gram term-document matrices and their truncated-SVD subspace."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .corpus import Dataset
from .errors import DataError, DimensionError, InputError
from .numerics import truncated_svd

DEFAULT_ORDERS = (2, 3)
DEFAULT_MAX_TERMS = 8000
DEFAULT_K = 1200
WEIGHTINGS = ("raw", "log1p")


@dataclass(frozen=True)
class NgramVocab:
    orders: tuple
    terms: tuple
    index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "orders", tuple(sorted(self.orders)))
        object.__setattr__(self, "terms", tuple(tuple(t) for t in self.terms))
        object.__setattr__(self, "index", {t: j for j, t in enumerate(self.terms)})
        if len(self.index) != len(self.terms):
            raise InputError("vocabulary terms must be unique")
        bad = [t for t in self.terms if len(t) not in self.orders]
        if bad:
            raise InputError(f"terms with orders outside {self.orders}: {bad[:3]}")

    @property
    def size(self) -> int:
        return len(self.terms)


@dataclass(frozen=True)
class TermDocMatrix:
    counts: sp.csr_matrix
    vocab: NgramVocab

    @property
    def shape(self):
        return self.counts.shape


@dataclass(frozen=True)
class PhonotacticProjector:
    pi: np.ndarray
    singular_values: np.ndarray
    mean: np.ndarray
    weighting: str = "raw"

    @property
    def k(self) -> int:
        return self.pi.shape[1]


def iter_ngrams(phones: Sequence[str], orders: Iterable[int]):
    phones = tuple(phones)
    for n in orders:
        for i in range(len(phones) - n + 1):
            yield phones[i:i + n]


def build_vocab(d: Dataset, orders=DEFAULT_ORDERS, max_terms: int = DEFAULT_MAX_TERMS) -> NgramVocab:
    """Keep the ``max_terms`` most frequent n-grams, ties broken lexicographically."""
    if max_terms < 1:
        raise InputError("max_terms must be >= 1")
    orders = tuple(sorted(set(orders)))
    if not orders or min(orders) < 1:
        raise InputError("orders must be positive integers")
    missing = [r.id for r in d.records if r.phones is None]
    if missing:
        raise DataError(f"records without phones: {missing[:5]}")
    freq = Counter()
    for rec in d.records:
        freq.update(iter_ngrams(rec.phones, orders))
    if not freq:
        raise DataError("corpus contains no n-grams of the requested orders")
    ranked = sorted(freq.items(), key=lambda kv: (-kv[1], kv[0]))
    return NgramVocab(orders, [t for t, _ in ranked[:max_terms]])


def count_ngrams(phones: Sequence[str], v: NgramVocab) -> sp.csr_matrix:
    """Overlapping occurrence counts of each vocabulary term, as a 1 x d row."""
    hits = Counter(v.index[g] for g in iter_ngrams(phones, v.orders) if g in v.index)
    cols = np.fromiter(sorted(hits), dtype=np.int64, count=len(hits))
    data = np.array([hits[c] for c in cols], dtype=np.int64)
    return sp.csr_matrix((data, (np.zeros_like(cols), cols)), shape=(1, v.size))


def term_doc_matrix(d: Dataset, v: NgramVocab) -> TermDocMatrix:
    missing = [r.id for r in d.records if r.phones is None]
    if missing:
        raise DataError(f"records without phones: {missing[:5]}")
    if not d.records:
        return TermDocMatrix(sp.csr_matrix((0, v.size), dtype=np.int64), v)
    rows = [count_ngrams(r.phones, v) for r in d.records]
    return TermDocMatrix(sp.vstack(rows, format="csr"), v)


def _weighted(counts, weighting: str):
    if weighting not in WEIGHTINGS:
        raise InputError(f"unknown weighting {weighting!r}")
    m = sp.csr_matrix(counts, dtype=np.float64)
    if weighting == "log1p":
        m.data = np.log1p(m.data)
    return m


def fit_projector(x: TermDocMatrix, k: int = DEFAULT_K, weighting: str = "raw",
                  center: bool = False) -> PhonotacticProjector:
    """Learn the top-``k`` right singular subspace of the (weighted) counts."""
    m = _weighted(x.counts, weighting)
    n, d = m.shape
    if not 1 <= k <= min(n, d):
        raise DimensionError(f"k={k} outside [1, {min(n, d)}]")
    if center:
        mean = np.asarray(m.mean(axis=0)).ravel()
        res = truncated_svd(m.toarray() - mean, k)
    else:
        mean = np.zeros(d)
        res = truncated_svd(m, k)
    return PhonotacticProjector(pi=res.v, singular_values=res.s, mean=mean, weighting=weighting)


def project(x, p: PhonotacticProjector) -> np.ndarray:
    """Map count rows (TermDocMatrix, sparse or dense array) to the k-dim space."""
    counts = x.counts if isinstance(x, TermDocMatrix) else x
    if not sp.issparse(counts):
        counts = np.atleast_2d(np.asarray(counts))
    if counts.shape[1] != p.pi.shape[0]:
        raise DimensionError(f"{counts.shape[1]} columns, projector expects {p.pi.shape[0]}")
    m = _weighted(counts, p.weighting)
    return np.asarray(m @ p.pi) - p.mean @ p.pi
