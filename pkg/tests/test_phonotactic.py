import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from didvsm.corpus import Dataset, UtteranceRecord
from didvsm.errors import DataError, DimensionError
from didvsm.phonotactic import (NgramVocab, TermDocMatrix, build_vocab, count_ngrams, fit_projector,
                                project, term_doc_matrix)
from oracles import full_ngram_counts


def corpus(*seqs):
    return Dataset([UtteranceRecord(f"u{i:03d}", None, tuple(s.split())) for i, s in enumerate(seqs)])


def dense(v):
    return np.asarray(v.toarray()).ravel()


def test_vocab_enumeration():
    v = build_vocab(corpus("a b c"), orders={2})
    assert v.terms == (("a", "b"), ("b", "c"))
    assert v.size == 2


def test_vocab_frequency_cutoff():
    v = build_vocab(corpus("a b a b a b a b a b c", "b c"), orders={2}, max_terms=1)
    assert v.terms == (("a", "b"),)


def test_vocab_tie_break_is_lexicographic():
    v = build_vocab(corpus("c d", "a b"), orders={2})
    assert v.terms == (("a", "b"), ("c", "d"))


def random_corpus(rng, n=100, symbols=6):
    return [" ".join(f"p{k}" for k in rng.integers(symbols, size=rng.integers(0, 30))) for _ in range(n)]


def test_vocab_keeps_most_frequent(rng):
    seqs = random_corpus(rng)
    v = build_vocab(corpus(*seqs), orders=(2, 3), max_terms=50)
    full = full_ngram_counts([s.split() for s in seqs], (2, 3))
    kept = set(v.terms)
    dropped = [c for t, c in full.items() if t not in kept]
    assert len(kept) == 50
    assert min(full[t] for t in kept) >= max(dropped)
    # column ids follow descending frequency
    freqs = [full[t] for t in v.terms]
    assert freqs == sorted(freqs, reverse=True)


def test_vocab_deterministic(rng):
    seqs = random_corpus(rng, 30)
    assert build_vocab(corpus(*seqs), max_terms=40) == build_vocab(corpus(*seqs), max_terms=40)


def test_vocab_errors():
    with pytest.raises(DataError):
        build_vocab(corpus("a"), orders={2})
    with pytest.raises(DataError):
        build_vocab(Dataset([UtteranceRecord("x", None, None, "f.mvf")]))


def test_count_hand_case():
    v = NgramVocab((2,), [("a", "b"), ("b", "a")])
    assert list(dense(count_ngrams("a b a b".split(), v))) == [2, 1]


@pytest.mark.parametrize("phones", [[], ["a"]])
def test_count_degenerate(phones):
    v = NgramVocab((2, 3), [("a", "b"), ("a", "b", "a")])
    assert not dense(count_ngrams(phones, v)).any()


def test_count_matches_oracle(rng):
    seqs = random_corpus(rng, 20)
    v = build_vocab(corpus(*seqs), orders=(2, 3))
    x = term_doc_matrix(corpus(*seqs), v)
    for i, s in enumerate(seqs):
        full = full_ngram_counts([s.split()], (2, 3))
        expect = [full.get(t, 0) for t in v.terms]
        assert list(dense(x.counts[i])) == expect


phone_seq = st.lists(st.sampled_from(["a", "b", "c"]), max_size=12)


@settings(max_examples=60, deadline=None)
@given(phone_seq, phone_seq)
def test_count_concatenation(s1, s2):
    v = NgramVocab((2, 3), [t for t in full_ngram_counts([["a", "b", "c"] * 3, ["c", "b", "a"] * 3], (2, 3))])
    joined = dense(count_ngrams(s1 + s2, v))
    parts = dense(count_ngrams(s1, v)) + dense(count_ngrams(s2, v))
    assert np.all(joined >= parts)
    assert np.sum(joined - parts) <= (2 - 1) + (3 - 1)
    sep = dense(count_ngrams(s1 + ["#"] + s2, v))
    assert np.array_equal(sep, parts)


def test_projector_identity():
    x = TermDocMatrix(sp.csr_matrix(np.eye(3, dtype=np.int64)), NgramVocab((1,), [("a",), ("b",), ("c",)]))
    p = fit_projector(x, 3)
    np.testing.assert_allclose(p.singular_values, [1, 1, 1])
    np.testing.assert_allclose(p.pi.T @ p.pi, np.eye(3), atol=1e-12)


def test_projector_rank_one():
    row = np.array([[1, 0, 2, 3]])
    counts = np.repeat(row, 5, axis=0)
    x = TermDocMatrix(sp.csr_matrix(counts), NgramVocab((1,), [(s,) for s in "abcd"]))
    p = fit_projector(x, 1)
    xp = project(x, p)
    np.testing.assert_allclose(xp @ p.pi.T, counts, atol=1e-12)


def random_tdm(rng, n=40, d=25):
    counts = rng.poisson(1.5, size=(n, d))
    return TermDocMatrix(sp.csr_matrix(counts), NgramVocab((1,), [(f"t{j}",) for j in range(d)])), counts


def test_projection_columns_match_full_svd(rng):
    x, counts = random_tdm(rng)
    p = fit_projector(x, 10)
    xp = project(x, p)
    u, s, _ = np.linalg.svd(counts.astype(float))
    gram = xp.T @ xp
    np.testing.assert_allclose(np.diag(gram), s[:10] ** 2, rtol=1e-10)
    assert np.max(np.abs(gram - np.diag(np.diag(gram)))) < 1e-8 * s[0] ** 2
    np.testing.assert_allclose(np.linalg.norm(xp, axis=0), s[:10], atol=1e-8)
    np.testing.assert_allclose(np.abs(xp), np.abs(u[:, :10] * s[:10]), atol=1e-8)
    np.testing.assert_allclose(p.pi.T @ p.pi, np.eye(10), atol=1e-8)


def test_projection_zero_and_oov(rng):
    x, _ = random_tdm(rng)
    p = fit_projector(x, 5)
    assert not project(np.zeros((1, 25)), p).any()
    v = NgramVocab((2,), [("a", "b")])
    oov = count_ngrams("c d c".split(), v)
    q = fit_projector(TermDocMatrix(sp.csr_matrix([[1], [2]]), v), 1)
    assert not project(oov, q).any()


def test_projector_errors(rng):
    x, _ = random_tdm(rng, 5, 8)
    for k in (0, 6):
        with pytest.raises(DimensionError):
            fit_projector(x, k)
    p = fit_projector(x, 2)
    with pytest.raises(DimensionError):
        project(np.zeros((1, 7)), p)


def test_centered_and_log_weighting(rng):
    x, counts = random_tdm(rng)
    p = fit_projector(x, 4, center=True)
    xp = project(x, p)
    np.testing.assert_allclose(xp.mean(axis=0), 0, atol=1e-10)
    q = fit_projector(x, 4, weighting="log1p")
    s = np.linalg.svd(np.log1p(counts), compute_uv=False)
    np.testing.assert_allclose(q.singular_values, s[:4], rtol=1e-10)
