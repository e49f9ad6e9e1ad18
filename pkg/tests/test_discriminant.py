import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from didvsm.discriminant import (apply_lda_wccn, fit_lda, fit_lda_wccn, fit_wccn, scatter_matrices,
                                 transform_lda, transform_wccn, within_class_covariance)
from didvsm.errors import ConfigError, DimensionError, InsufficientDataError, NotPSDError


def blobs(rng, n_per=40, classes=3, dim=4, sep=3.0):
    means = sep * rng.normal(size=(classes, dim))
    x = np.vstack([m + rng.normal(size=(n_per, dim)) for m in means])
    return x, np.repeat(np.arange(classes), n_per)


def test_lda_recovers_separating_axis(rng):
    n = 500
    x = rng.normal(size=(2 * n, 3))
    x[n:, 0] += 4.0
    y = np.repeat([0, 1], n)
    lda = fit_lda(x, y, m=1)
    w = lda.w[:, 0] / np.linalg.norm(lda.w[:, 0])
    assert abs(w[0]) >= 0.99


def test_lda_five_classes_gives_four_dims(rng):
    x, y = blobs(rng, classes=5, dim=10)
    lda = fit_lda(x, y)
    assert lda.m == 4
    assert transform_lda(lda, x).shape == (200, 4)
    with pytest.raises(DimensionError):
        fit_lda(x, y, m=5)


def test_lda_singleton_class(rng):
    x = rng.normal(size=(5, 2))
    with pytest.raises(InsufficientDataError):
        fit_lda(x, np.arange(5))


def test_lda_eigenvalues_non_increasing(rng):
    x, y = blobs(rng, classes=5, dim=6)
    lda = fit_lda(x, y)
    assert np.all(np.diff(lda.eigenvalues) <= 1e-12)
    # eigen-equation of the regularized generalized problem
    s_w, s_b, _, _ = scatter_matrices(x, y)
    lhs = s_b @ lda.w
    rhs = (s_w + lda.ridge * np.eye(6)) @ lda.w * lda.eigenvalues
    np.testing.assert_allclose(lhs, rhs, atol=1e-8)


def test_lda_global_mean_maps_to_zero(rng):
    x, y = blobs(rng)
    lda = fit_lda(x, y)
    assert np.allclose(transform_lda(lda, np.tile(lda.global_mean, (4, 1))), 0, atol=1e-12)


def test_lda_preserves_class_order_on_first_axis(rng):
    x, y = blobs(rng, classes=2, dim=3, sep=5.0)
    lda = fit_lda(x, y)
    proj = transform_lda(lda, lda.class_means)[:, 0]
    data = transform_lda(lda, x)[:, 0]
    assert np.sign(proj[1] - proj[0]) == np.sign(data[y == 1].mean() - data[y == 0].mean())


def test_lda_dimension_mismatch(rng):
    x, y = blobs(rng)
    with pytest.raises(DimensionError):
        transform_lda(fit_lda(x, y), x[:, :2])


def test_wccn_identity_within_class():
    s = np.sqrt(2.0)
    cls = np.array([[s, 0], [-s, 0], [0, s], [0, -s]])
    x = np.vstack([cls + [5, 0], cls - [5, 0]])
    y = np.repeat([0, 1], 4)
    np.testing.assert_allclose(within_class_covariance(x, y), np.eye(2), atol=1e-15)
    np.testing.assert_allclose(fit_wccn(x, y, ridge=0.0).b, np.eye(2), atol=1e-12)


def test_wccn_scalar():
    x = np.array([[-2.0], [2.0], [8.0], [12.0]])
    y = np.array([0, 0, 1, 1])
    assert fit_wccn(x, y, ridge=0.0).b[0, 0] == pytest.approx(0.5, abs=1e-15)


def test_wccn_whitens(rng):
    x, y = blobs(rng, classes=3, dim=4)
    x = x @ rng.normal(size=(4, 4))
    model = fit_wccn(x, y, ridge=0.0)
    w = within_class_covariance(x, y)
    np.testing.assert_allclose(model.b.T @ w @ model.b, np.eye(4), atol=1e-8)
    np.testing.assert_allclose(within_class_covariance(transform_wccn(model, x), y), np.eye(4), atol=1e-8)
    assert np.allclose(model.b, np.tril(model.b))
    np.testing.assert_allclose(model.b @ model.b.T, np.linalg.inv(w), rtol=1e-8)


def test_wccn_singular_needs_ridge(rng):
    x, y = blobs(rng, classes=2, dim=3)
    x[:, 2] = 0.0
    with pytest.raises(NotPSDError):
        fit_wccn(x, y, ridge=0.0)
    assert np.all(np.isfinite(fit_wccn(x, y, ridge=1e-6).b))


@pytest.mark.parametrize("order", ["lda_wccn", "wccn_lda"])
def test_composition(rng, order):
    x, y = blobs(rng, classes=5, dim=8)
    lda, wccn = fit_lda_wccn(x, y, order=order, wccn_ridge=0.0)
    z = apply_lda_wccn(lda, wccn, x, order)
    assert z.shape == (200, 4)
    if order == "lda_wccn":
        np.testing.assert_allclose(within_class_covariance(z, y), np.eye(4), atol=1e-8)


def test_composition_rejects_unknown_order(rng):
    x, y = blobs(rng)
    with pytest.raises(ConfigError):
        fit_lda_wccn(x, y, order="both")


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 6), st.integers(0, 2**31))
def test_lda_rank_bound(classes, seed):
    rng = np.random.default_rng(seed)
    x, y = blobs(rng, n_per=6, classes=classes, dim=7)
    _, s_b, _, _ = scatter_matrices(x, y)
    assert np.linalg.matrix_rank(s_b, tol=1e-9 * max(1.0, np.abs(s_b).max())) <= classes - 1
    lda = fit_lda(x, y, m=classes - 1)
    assert lda.m == classes - 1
    assert np.linalg.matrix_rank(lda.w) == classes - 1
