import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import shardroute as sr


def test_inner_product_arithmetic():
    assert sr.inner_product([1.0, 2.0], [3.0, 4.0]) == pytest.approx(11.0)


def test_inner_product_zero_vector():
    q = np.array([0.3, -0.7, 1.1])
    assert sr.inner_product(q, np.zeros(3)) == 0.0


def test_inner_product_orthogonal():
    assert sr.inner_product([1.0, 0.0], [0.0, 1.0]) == 0.0


def test_inner_product_dimension_mismatch():
    with pytest.raises(ValueError):
        sr.inner_product([1.0, 2.0], [1.0, 2.0, 3.0])


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_inner_product_symmetric_bilinear(seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=8)
    b = rng.normal(size=8)
    c = rng.normal(size=8)
    alpha = float(rng.normal())
    assert sr.inner_product(a, b) == pytest.approx(sr.inner_product(b, a), rel=1e-12)
    lhs = sr.inner_product(a, alpha * b + c)
    rhs = alpha * sr.inner_product(a, b) + sr.inner_product(a, c)
    assert lhs == pytest.approx(rhs, rel=1e-5, abs=1e-9)


def test_l2_normalize_345():
    out = sr.l2_normalize(np.array([3.0, 4.0]))
    np.testing.assert_allclose(out, [0.6, 0.8], rtol=1e-6)


def test_l2_normalize_idempotent_on_unit_vector():
    v = np.array([1.0, 0.0, 0.0])
    np.testing.assert_allclose(sr.l2_normalize(v), v, atol=1e-7)


def test_l2_normalize_zero_vector_error():
    with pytest.raises(ValueError):
        sr.l2_normalize(np.zeros(4))


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_l2_normalize_unit_norm(seed):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=16) * 10.0 ** rng.integers(-3, 4)
    out = sr.l2_normalize(v)
    assert abs(np.linalg.norm(out) - 1.0) < 1e-6


def test_top_k_basic():
    res = sr.top_k([(0, 0.5), (1, 0.9), (2, 0.1)], k=2)
    assert list(res.ids) == [1, 0]
    np.testing.assert_allclose(res.scores, [0.9, 0.5])


def test_top_k_tie_breaks_by_smaller_id():
    res = sr.top_k([(1, 1.0), (0, 1.0)], k=1)
    assert list(res.ids) == [0]


def test_top_k_k_larger_than_input():
    res = sr.top_k([(0, 0.5), (1, 0.9)], k=10)
    assert list(res.ids) == [1, 0]
    assert res.k == 2


def test_top_k_requires_positive_k():
    with pytest.raises(ValueError):
        sr.top_k([(0, 1.0)], k=0)


@given(st.integers(0, 2**32 - 1), st.integers(1, 12), st.integers(1, 12))
@settings(max_examples=40, deadline=None)
def test_top_k_prefix_consistency(seed, ka, kb):
    # ids of top_k(k) must be a prefix of top_k(k') for k <= k'
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 20))
    scores = rng.choice([0.0, 0.25, 0.5, 1.0], size=n)
    pairs = list(zip(range(n), scores.tolist()))
    k_small, k_big = min(ka, kb), max(ka, kb)
    small = sr.top_k(pairs, k_small)
    big = sr.top_k(pairs, k_big)
    assert list(small.ids) == list(big.ids)[: small.k]


def test_vector_set_basic():
    vs = sr.VectorSet(np.arange(6, dtype=np.float32).reshape(3, 2))
    assert vs.count == 3
    assert vs.dim == 2
    np.testing.assert_array_equal(vs.row(1), [2.0, 3.0])


def test_vector_set_is_immutable():
    vs = sr.VectorSet(np.zeros((2, 2), dtype=np.float32))
    with pytest.raises((ValueError, RuntimeError)):
        vs.vectors[0, 0] = 1.0


def test_vector_set_rejects_non_finite():
    bad = np.array([[1.0, np.nan]], dtype=np.float32)
    with pytest.raises(ValueError):
        sr.VectorSet(bad)


def test_vector_set_rejects_1d():
    with pytest.raises(ValueError):
        sr.VectorSet(np.zeros(4, dtype=np.float32))


def test_rank_descending_ties_ascending_id():
    order = sr.rank_descending(np.array([0.5, 0.9, 0.5]))
    assert list(order) == [1, 0, 2]
