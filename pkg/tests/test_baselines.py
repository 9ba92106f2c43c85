import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cxloss.baselines import feature_l1_loss, gram_loss, gram_matrix, l1_loss, l2_loss
from cxloss.cx import CxParams, contextual_loss


def test_l1_examples():
    assert l1_loss([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert l1_loss([1.0, 2.0], [0.0, 0.0]) == 3.0
    assert l1_loss([0.0, 0.0], [1.0, 2.0]) == 3.0


def test_l2_examples():
    assert l2_loss([5.0], [5.0]) == 0.0
    assert l2_loss([3.0, 4.0], [0.0, 0.0]) == 5.0


@pytest.mark.parametrize("fn", [l1_loss, l2_loss])
def test_length_mismatch(fn):
    with pytest.raises(ValueError, match="length mismatch"):
        fn([1.0, 2.0], [1.0])


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 20), st.integers(0, 2**32 - 1))
def test_l2_triangle_inequality(n, seed):
    a, b, c = np.random.default_rng(seed).normal(size=(3, n))
    assert l2_loss(a, c) <= l2_loss(a, b) + l2_loss(b, c) + 1e-12


def test_feature_l1_examples():
    x = np.arange(6.0).reshape(3, 2)
    assert feature_l1_loss(x, x) == 0.0
    y = x.copy()
    y[1, 0] += 0.5
    assert feature_l1_loss(x, y) == 0.5


def test_feature_l1_shape_mismatch():
    with pytest.raises(ValueError, match="shape mismatch"):
        feature_l1_loss(np.zeros((3, 2)), np.zeros((2, 2)))


def _loop_l1(a, b):
    return sum(abs(u - v) for ra, rb in zip(a.tolist(), b.tolist()) for u, v in zip(ra, rb))


def test_feature_l1_sensitive_to_order(rng):
    x = rng.normal(size=(5, 3))
    y = rng.normal(size=(5, 3))
    perm = np.array([1, 0, 2, 3, 4])
    a, b = feature_l1_loss(x, y), feature_l1_loss(x, y[perm])
    assert a == pytest.approx(_loop_l1(x, y), rel=1e-12)
    assert b == pytest.approx(_loop_l1(x, y[perm]), rel=1e-12)
    assert a != b


def test_gram_hand_example():
    x, y = np.array([[1.0, 0.0]]), np.array([[0.0, 1.0]])
    assert np.array_equal(gram_matrix(x), np.array([[0.5, 0.0], [0.0, 0.0]]))
    # independent routine: outer products and explicit Frobenius sum
    gx = np.outer(x[0], x[0]) / 2
    gy = np.outer(y[0], y[0]) / 2
    ref = sum((gx[i, j] - gy[i, j]) ** 2 for i in range(2) for j in range(2))
    assert ref == 0.5
    assert gram_loss(x, y) == 0.5


def test_gram_permutation_invariant(rng):
    y = rng.normal(size=(9, 4))
    assert gram_loss(y[rng.permutation(9)], y) <= 1e-12
    assert gram_loss(y, y) == 0.0


def test_gram_properties(rng):
    f = rng.normal(size=(7, 5))
    g = gram_matrix(f)
    assert np.allclose(g, g.T, atol=1e-9)
    for _ in range(20):
        v = rng.normal(size=5)
        assert v @ g @ v >= -1e-9


def test_gram_dim_mismatch():
    with pytest.raises(ValueError, match="dimension mismatch"):
        gram_loss(np.zeros((2, 3)), np.zeros((2, 4)))


def test_gram_allows_different_counts(rng):
    assert gram_loss(rng.normal(size=(3, 2)), rng.normal(size=(8, 2))) > 0


def test_alignment_taxonomy(rng):
    # permuting rows: Gram and CX do not notice, feature-L1 does
    x = rng.normal(size=(10, 4))
    xp = x[rng.permutation(10)]
    assert gram_loss(x, xp) <= 1e-15
    assert contextual_loss(xp, x, CxParams()) == pytest.approx(contextual_loss(x, x, CxParams()), abs=1e-12)
    assert feature_l1_loss(x, xp) > 0


def test_losses_nonnegative(rng):
    for _ in range(10):
        a, b = rng.normal(size=(2, 6, 3))
        for v in (l1_loss(a, b), l2_loss(a, b), feature_l1_loss(a, b), gram_loss(a, b)):
            assert v >= 0
