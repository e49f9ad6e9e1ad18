import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from didvsm.classifier import (SoftmaxModel, TrainConfig, cross_entropy, l1_subgradient, lipschitz_bound,
                               objective, predict, predict_index, predict_proba, score_fuse,
                               smooth_gradient, train_softmax)
from didvsm.errors import DataError, DimensionError, DivergenceError, InputError


def smooth_objective(w, b, x, y, cfg):
    return cross_entropy(w, b, x, y) + 0.5 * cfg.reg_strength * cfg.l2_ratio * np.sum(w * w)


def central_diff(fn, a, h=1e-5):
    g = np.zeros_like(a)
    for idx in np.ndindex(a.shape):
        up, down = a.copy(), a.copy()
        up[idx] += h
        down[idx] -= h
        g[idx] = (fn(up) - fn(down)) / (2 * h)
    return g


def rel_err(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-300)


def test_gradient_matches_finite_differences(rng):
    x = rng.normal(size=(40, 10))
    y = rng.integers(5, size=40)
    w = rng.normal(size=(10, 5))
    b = rng.normal(size=5)
    cfg = TrainConfig(reg_strength=0.3)
    gw, gb = smooth_gradient(w, b, x, y, cfg)
    assert rel_err(gw, central_diff(lambda v: smooth_objective(v, b, x, y, cfg), w)) < 1e-4
    assert rel_err(gb, central_diff(lambda v: smooth_objective(w, v, x, y, cfg), b)) < 1e-4


def test_l1_subgradient_away_from_zero(rng):
    w = rng.normal(size=(6, 3))
    w[np.abs(w) < 0.1] = 0.5
    cfg = TrainConfig(reg_strength=0.7, l1_ratio=0.4)
    fd = central_diff(lambda v: cfg.reg_strength * cfg.l1_ratio * np.abs(v).sum(), w)
    np.testing.assert_allclose(l1_subgradient(w, cfg), fd, rtol=1e-6)


def test_separable_two_class():
    x = np.array([[0.0, 0.0], [0.2, 0.5], [0.4, 0.1], [3.0, 3.0], [3.5, 2.5], [2.8, 3.7]])
    y = np.array(["EGY", "EGY", "EGY", "MSA", "MSA", "MSA"])
    m = train_softmax(x, y, TrainConfig(reg_strength=1e-3, epochs=50))
    assert predict(m, x) == list(y)
    assert m.label_set == ("EGY", "MSA")


def test_huge_penalty_predicts_prior(rng):
    x = rng.normal(size=(60, 4))
    y = np.array([0] * 10 + [1] * 35 + [2] * 15)
    cfg = TrainConfig(reg_strength=1e6, schedule="constant", batch=0, epochs=300, learning_rate=0.5)
    m = train_softmax(x, y, cfg)
    assert np.all(m.w == 0)
    assert set(predict_index(predict_proba(m, x))) == {1}
    np.testing.assert_allclose(predict_proba(m, x[:1])[0], [10 / 60, 35 / 60, 15 / 60], atol=1e-3)


def test_full_batch_descent_is_monotone(rng):
    x = rng.normal(size=(80, 6))
    y = rng.integers(4, size=80)
    probe = TrainConfig(reg_strength=0.05, standardize=False)
    lr = 0.9 / lipschitz_bound(x, probe)
    cfg = TrainConfig(reg_strength=0.05, schedule="constant", batch=0, epochs=40, learning_rate=lr,
                      standardize=False)
    m = train_softmax(x, y, cfg)
    hist = np.array(m.loss_history)
    start = objective(np.zeros((6, 4)), np.zeros(4), x, y, cfg)
    assert hist[0] <= start + 1e-8
    assert np.all(np.diff(hist) <= 1e-8)


def test_training_is_deterministic(rng):
    x = rng.normal(size=(50, 5))
    y = rng.integers(3, size=50)
    a = train_softmax(x, y, TrainConfig(seed=4, epochs=3))
    b = train_softmax(x, y, TrainConfig(seed=4, epochs=3))
    assert a.w.tobytes() == b.w.tobytes() and a.bias.tobytes() == b.bias.tobytes()
    c = train_softmax(x, y, TrainConfig(seed=5, epochs=3))
    assert a.w.tobytes() != c.w.tobytes()


def test_l1_produces_exact_zeros(rng):
    x = rng.normal(size=(100, 20))
    y = (x[:, 0] > 0).astype(int)
    m = train_softmax(x, y, TrainConfig(reg_strength=0.05, l1_ratio=1.0, l2_ratio=0.0, epochs=10, batch=10))
    assert np.sum(m.w == 0) > 0
    assert np.all(m.w[0] != 0)


def test_training_errors(rng):
    x = rng.normal(size=(6, 2))
    with pytest.raises(DataError):
        train_softmax(x, [0, 1, 2, 0, 1, 5], label_set=(0, 1, 2))
    with pytest.raises(DataError):
        train_softmax(x[:2], [0, 1], label_set=(0, 1, 2))
    with pytest.raises(DimensionError):
        train_softmax(x, [0, 1, 0], label_set=(0, 1))
    with pytest.raises(DivergenceError, match="epoch 1"):
        train_softmax(x * 1e300, [0, 1, 0, 1, 0, 1], TrainConfig(learning_rate=1e300, standardize=False,
                                                                 schedule="constant"))


@pytest.mark.parametrize("kwargs", [dict(l1_ratio=-1), dict(epochs=0), dict(batch=-1),
                                    dict(learning_rate=0), dict(schedule="cosine"), dict(reg_strength=-1)])
def test_config_validation(kwargs):
    with pytest.raises(InputError):
        TrainConfig(**kwargs)


def model(w, b, labels=("a", "b", "c")):
    return SoftmaxModel(np.asarray(w, float), np.asarray(b, float), labels)


def test_proba_uniform():
    p = predict_proba(model(np.zeros((2, 3)), np.zeros(3)), np.ones((4, 2)))
    np.testing.assert_allclose(p, 1 / 3)


def test_proba_no_overflow():
    p = predict_proba(model(np.zeros((2, 3)), [1000.0, 0, 0]), np.ones((1, 2)))
    assert np.all(np.isfinite(p))
    np.testing.assert_allclose(p, [[1, 0, 0]], atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.1, 50))
def test_proba_on_simplex(seed, scale):
    rng = np.random.default_rng(seed)
    m = model(scale * rng.normal(size=(4, 3)), scale * rng.normal(size=3))
    x = rng.normal(size=(10, 4))
    p = predict_proba(m, x)
    assert np.all(np.abs(p.sum(axis=1) - 1) < 1e-9)
    assert np.all((p >= 0) & (p <= 1))
    assert predict(m, x) == [m.label_set[i] for i in np.argmax(p, axis=1)]


def test_proba_dimension_mismatch():
    with pytest.raises(DimensionError):
        predict_proba(model(np.zeros((2, 3)), np.zeros(3)), np.ones((1, 3)))


def test_predict_tie_breaks():
    assert list(predict_index(np.full((1, 3), 1 / 3))) == [0]
    assert list(predict_index(np.array([[0.1, 0.7, 0.2]]))) == [1]


def test_score_fuse_cases(rng):
    p = rng.dirichlet(np.ones(4), size=5)
    q = rng.dirichlet(np.ones(4), size=5)
    np.testing.assert_allclose(score_fuse([p], [1.0]), p, atol=1e-15)
    np.testing.assert_allclose(score_fuse([p, p], [0.3, 0.9]), p, atol=1e-15)
    np.testing.assert_allclose(score_fuse([p, q], [1.0, 0.0]), p, atol=1e-15)
    np.testing.assert_allclose(score_fuse([p, q]), (p + q) / 2, atol=1e-15)
    for space in ("prob", "logodds"):
        fused = score_fuse([p, q], space=space)
        np.testing.assert_allclose(fused.sum(axis=1), 1, atol=1e-12)
    np.testing.assert_allclose(score_fuse([p, q], [1.0, 0.0], space="logodds"), p, atol=1e-12)


def test_score_fuse_errors(rng):
    p = rng.dirichlet(np.ones(3), size=2)
    with pytest.raises(DimensionError):
        score_fuse([p, p[:1]])
    with pytest.raises(InputError):
        score_fuse([p, p], [0.0, 0.0])
    with pytest.raises(InputError):
        score_fuse([p, p], [-1.0, 2.0])
