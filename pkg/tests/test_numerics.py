from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from supsplitlog.errors import ConfigurationError, UsageError
from supsplitlog.numerics import (
    REINVERT_EVERY,
    DesignState,
    dense_logdet_ratio,
    elliptical_potential,
    insert,
    logdet_ratio,
    logdet_upper_bound,
    mahalanobis_sq,
    new_design,
)


def dense_state(vectors, dim, ridge):
    """Oracle: rebuild V, V^{-1} and the log-det ratio from scratch."""
    V = ridge * np.eye(dim)
    for x in vectors:
        V += np.outer(x, x)
    sign, ld = np.linalg.slogdet(V)
    assert sign > 0
    return V, np.linalg.inv(V), ld - dim * math.log(ridge)


def unit_rows(rng, n, d):
    X = rng.standard_normal((n, d))
    return X / np.linalg.norm(X, axis=1, keepdims=True)


def test_new_design_identity():
    s = new_design(2, 1)
    np.testing.assert_array_equal(s.matrix, np.eye(2))
    assert logdet_ratio(s) == 0.0
    assert s.count == 0


def test_new_design_inverse_is_scalar_reciprocal():
    np.testing.assert_allclose(new_design(3, 20).inverse, 0.05 * np.eye(3), rtol=0, atol=1e-15)


@pytest.mark.parametrize("dim, ridge", [(1, 0), (1, -1.0), (0, 1), (2.5, 1), (2, float("inf"))])
def test_new_design_rejects_bad_arguments(dim, ridge):
    with pytest.raises(ConfigurationError):
        new_design(dim, ridge)


def test_insert_e1_on_identity():
    s = insert(new_design(2, 1), np.array([1.0, 0.0]))
    assert s.logdet_ratio == pytest.approx(math.log(2), abs=1e-15)
    np.testing.assert_allclose(s.inverse, np.diag([0.5, 1.0]), atol=1e-15)


def test_insert_zero_vector_only_counts():
    s = new_design(3, 2.0)
    before = s.copy()
    s.insert(np.zeros(3))
    assert s.count == 1
    np.testing.assert_array_equal(s.matrix, before.matrix)
    np.testing.assert_array_equal(s.inverse, before.inverse)
    assert s.logdet_ratio == before.logdet_ratio


def test_two_axis_inserts_match_dense_logdet():
    s = new_design(2, 1)
    s.insert(np.array([1.0, 0.0])).insert(np.array([0.0, 1.0]))
    _, _, ld = dense_state([np.eye(2)[0], np.eye(2)[1]], 2, 1.0)
    assert s.logdet_ratio == pytest.approx(2 * math.log(2), abs=1e-14)
    assert s.logdet_ratio == pytest.approx(ld, abs=1e-12)


def test_insert_rejects_wrong_shape():
    s = new_design(3, 1)
    with pytest.raises(UsageError):
        s.insert(np.ones(2))
    with pytest.raises(UsageError):
        s.insert(np.ones((2, 3)))


def test_mahalanobis_small_cases():
    e1 = np.array([1.0, 0.0])
    assert mahalanobis_sq(new_design(2, 1), e1) == 1.0
    assert mahalanobis_sq(new_design(2, 4), e1) == 0.25
    s = new_design(2, 1).insert(e1)
    V, _, _ = dense_state([e1], 2, 1.0)
    assert mahalanobis_sq(s, e1) == pytest.approx(e1 @ np.linalg.solve(V, e1), abs=1e-15)
    assert mahalanobis_sq(s, e1) == pytest.approx(0.5, abs=1e-15)


def test_mahalanobis_rowwise_matches_single():
    rng = np.random.default_rng(0)
    s = new_design(4, 3.0)
    for x in unit_rows(rng, 30, 4):
        s.insert(x)
    X = rng.standard_normal((7, 4))
    np.testing.assert_allclose(s.mahalanobis_sq(X), [s.mahalanobis_sq(x) for x in X], rtol=1e-13)


def test_fifty_unit_vectors_logdet_matches_eigen_oracle():
    rng = np.random.default_rng(1)
    X = unit_rows(rng, 50, 5)
    s = new_design(5, 20)
    for x in X:
        s.insert(x)
    dense = dense_logdet_ratio(20 * np.eye(5) + X.T @ X, 20)
    assert s.logdet_ratio == pytest.approx(dense, abs=1e-8)
    assert s.logdet_ratio <= 5 * math.log(1 + 50 / 100)


@pytest.mark.parametrize("d, ridge", [(1, 1.0), (7, 0.5), (30, 20.0), (100, 20.0)])
def test_long_insertion_sequence_tracks_dense_recompute(d, ridge):
    rng = np.random.default_rng(d)
    n = 10_000
    X = rng.standard_normal((n, d)) * rng.uniform(0, 1, size=(n, 1)) / math.sqrt(d)
    s = new_design(d, ridge)
    V = ridge * np.eye(d)
    for i, x in enumerate(X, start=1):
        s.insert(x)
        if i % 2500 == 0 or i == n - 1:
            V_now = ridge * np.eye(d) + X[:i].T @ X[:i]
            np.testing.assert_allclose(s.inverse, np.linalg.inv(V_now), rtol=0, atol=1e-6)
            assert s.logdet_ratio == pytest.approx(dense_logdet_ratio(V_now, ridge), abs=1e-6)
    V += X.T @ X
    np.testing.assert_allclose(s.matrix, V, rtol=1e-12, atol=1e-9)


def test_reinversion_keeps_inverse_symmetric():
    rng = np.random.default_rng(3)
    s = new_design(6, 1.0)
    for x in unit_rows(rng, REINVERT_EVERY, 6):
        s.insert(x)
    np.testing.assert_array_equal(s.inverse, s.inverse.T)


def test_logdet_upper_bound_formula():
    assert logdet_upper_bound(5, 50, 20) == pytest.approx(5 * math.log(1.5), rel=1e-15)
    assert logdet_upper_bound(3, 0, 1) == 0.0


def test_elliptical_potential_matches_manual_sum():
    rng = np.random.default_rng(4)
    X = unit_rows(rng, 40, 3) * 0.7
    total, ld = elliptical_potential(X, 1.0)
    V = np.eye(3)
    manual = 0.0
    for x in X:
        manual += min(1.0, x @ np.linalg.solve(V, x))
        V += np.outer(x, x)
    assert total == pytest.approx(manual, rel=1e-10)
    assert ld == pytest.approx(dense_logdet_ratio(V, 1.0), abs=1e-10)


vectors = st.integers(1, 6).flatmap(
    lambda d: arrays(
        np.float64,
        st.tuples(st.integers(1, 40), st.just(d)),
        elements=st.floats(-1, 1, allow_nan=False, width=64),
    )
)


@settings(max_examples=60, deadline=None)
@given(X=vectors, ridge=st.floats(0.05, 50))
def test_property_elliptical_potential(X, ridge):
    # sum min(1, q) <= 2 log(1 + q) summed, which telescopes to 2 * logdet ratio
    total, ld = elliptical_potential(X, ridge)
    assert total <= 2 * ld + 1e-9


@settings(max_examples=60, deadline=None)
@given(X=vectors, ridge=st.floats(0.1, 50))
def test_property_incremental_equals_dense(X, ridge):
    d = X.shape[1]
    s = new_design(d, ridge)
    for x in X:
        s.insert(x)
    V, Vinv, ld = dense_state(X, d, ridge)
    assert s.count == len(X)
    np.testing.assert_allclose(s.matrix, V, atol=1e-12)
    np.testing.assert_allclose(s.inverse, Vinv, atol=1e-9 / ridge)
    assert s.logdet_ratio == pytest.approx(ld, abs=1e-9)
    assert s.logdet_ratio >= -1e-12


@settings(max_examples=40, deadline=None)
@given(X=vectors, seed=st.integers(0, 2**32 - 1))
def test_property_order_independent(X, seed):
    perm = np.random.default_rng(seed).permutation(len(X))
    a, b = new_design(X.shape[1], 1.0), new_design(X.shape[1], 1.0)
    for x in X:
        a.insert(x)
    for x in X[perm]:
        b.insert(x)
    assert a.logdet_ratio == pytest.approx(b.logdet_ratio, abs=1e-9)
    np.testing.assert_allclose(a.inverse, b.inverse, atol=1e-9)


@settings(max_examples=40, deadline=None)
@given(X=vectors)
def test_property_logdet_under_worst_case_bound(X):
    norms = np.linalg.norm(X, axis=1)
    L = max(float(norms.max()), 1e-12)
    s = new_design(X.shape[1], 2.0)
    for x in X:
        s.insert(x)
    assert s.logdet_ratio <= logdet_upper_bound(X.shape[1], len(X), 2.0, L) + 1e-9
