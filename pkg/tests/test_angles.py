import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from noisypower.angles import (
    COS_FLOOR,
    angle_oracle,
    angle_report,
    cos_theta_k,
    residual_norm,
    tan_theta_k,
)
from noisypower.dense import gram_schmidt_qr, random_orthogonal, random_orthonormal_basis
from noisypower.errors import BudgetExceeded, DimensionMismatch

seeds = st.integers(min_value=0, max_value=2**32 - 1)
E = np.eye(3)
DIAG = np.array([[1.0], [1.0]]) / math.sqrt(2)


def _pair(seed, d, k, p):
    rng = np.random.default_rng(seed)
    return random_orthonormal_basis(d, k, rng), random_orthonormal_basis(d, p, rng)


def test_cos_examples():
    U = random_orthonormal_basis(5, 2, np.random.default_rng(0))
    assert cos_theta_k(U, U) == pytest.approx(1.0, abs=1e-15)
    assert cos_theta_k(np.eye(2)[:, :1], np.eye(2)[:, 1:]) == 0.0
    assert cos_theta_k(np.eye(2)[:, :1], DIAG) == pytest.approx(1 / math.sqrt(2), abs=1e-15)


def test_tan_examples():
    U = random_orthonormal_basis(5, 2, np.random.default_rng(0))
    assert tan_theta_k(U, U) <= 1e-14
    assert tan_theta_k(np.eye(2)[:, :1], DIAG) == pytest.approx(1.0, abs=1e-15)
    assert tan_theta_k(np.eye(2)[:, :1], np.eye(2)[:, 1:]) == math.inf


def test_residual_examples():
    U = random_orthonormal_basis(5, 2, np.random.default_rng(0))
    assert residual_norm(U, U) <= 1e-15
    assert residual_norm(np.eye(2)[:, :1], DIAG) == pytest.approx(1 / math.sqrt(2), abs=1e-15)


def test_tan_resolves_tiny_angles():
    t = 1e-12
    X = np.array([[1.0], [t]]) / math.hypot(1.0, t)
    assert tan_theta_k(np.eye(2)[:, :1], X) == pytest.approx(t, rel=1e-10)


def test_dimension_checks():
    with pytest.raises(DimensionMismatch):
        cos_theta_k(np.eye(3)[:, :2], np.eye(3)[:, :1])
    with pytest.raises(DimensionMismatch):
        tan_theta_k(np.eye(3)[:, :1], np.eye(4)[:, :1])


@settings(max_examples=100, deadline=None)
@given(seed=seeds, d=st.integers(1, 8), data=st.data())
def test_report_invariants(seed, d, data):
    k = data.draw(st.integers(1, d))
    p = data.draw(st.integers(k, d))
    U, X = _pair(seed, d, k, p)
    rep = angle_report(U, X)
    assert 0.0 <= rep.cos_theta_k <= 1.0
    assert rep.residual <= rep.tan_theta_k + 1e-10
    if rep.cos_theta_k > COS_FLOOR:
        c = rep.cos_theta_k
        assert 1 / c <= 1 + rep.tan_theta_k + 1e-12
        # residual is the sine of the largest angle for any p >= k; sqrt(1 - c*c)
        # amplifies rounding in c near 1, so compare only away from it
        if c < 1 - 1e-6:
            assert rep.residual == pytest.approx(math.sqrt(1 - c * c), rel=1e-7)
            assert rep.tan_theta_k == pytest.approx(math.sqrt(1 - c * c) / c, rel=1e-7)
        else:
            assert rep.residual <= 2e-3


@settings(max_examples=60, deadline=None)
@given(seed=seeds, d=st.integers(2, 10), data=st.data())
def test_orthogonal_invariance(seed, d, data):
    k = data.draw(st.integers(1, d))
    p = data.draw(st.integers(k, d))
    U, X = _pair(seed, d, k, p)
    O = random_orthogonal(d, np.random.default_rng(seed + 1))
    assert cos_theta_k(O @ U, O @ X) == pytest.approx(cos_theta_k(U, X), abs=1e-10)


@settings(max_examples=60, deadline=None)
@given(seed=seeds, d=st.integers(2, 10), data=st.data())
def test_cos_monotone_in_width(seed, d, data):
    k = data.draw(st.integers(1, d - 1))
    p = data.draw(st.integers(k, d - 1))
    rng = np.random.default_rng(seed)
    U = random_orthonormal_basis(d, k, rng)
    W = random_orthonormal_basis(d, d, rng)
    assert cos_theta_k(U, W[:, : p + 1]) >= cos_theta_k(U, W[:, :p]) - 1e-12


# -- brute-force oracle ---------------------------------------------------------------

def test_oracle_identical_subspaces():
    U = random_orthonormal_basis(5, 2, np.random.default_rng(1))
    np.testing.assert_allclose(angle_oracle(U, U), [0.0, 0.0], atol=1e-6)


def test_oracle_hand_geometry():
    angles = angle_oracle(E[:, [0, 1]], E[:, [0, 2]])
    np.testing.assert_allclose(angles, [0.0, math.pi / 2], atol=1e-6)
    assert cos_theta_k(E[:, [0, 1]], E[:, [0, 2]]) == pytest.approx(0.0, abs=1e-15)


def test_oracle_budget():
    with pytest.raises(BudgetExceeded):
        angle_oracle(np.eye(13)[:, :1], np.eye(13)[:, :1])
    with pytest.raises(BudgetExceeded):
        angle_oracle(np.eye(6)[:, :4], np.eye(6)[:, :4])


def test_oracle_agrees_with_svd_route():
    rng = np.random.default_rng(7)
    for _ in range(10):
        U = random_orthonormal_basis(6, 2, rng)
        X = random_orthonormal_basis(6, 3, rng)
        assert abs(math.cos(angle_oracle(U, X)[-1]) - cos_theta_k(U, X)) <= 1e-4


def test_oracle_three_angles():
    rng = np.random.default_rng(8)
    U = random_orthonormal_basis(7, 3, rng)
    X = gram_schmidt_qr(U + 0.3 * rng.standard_normal((7, 3)))[0]
    assert abs(math.cos(angle_oracle(U, X)[-1]) - cos_theta_k(U, X)) <= 1e-4
