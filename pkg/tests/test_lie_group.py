import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.testing import assert_allclose
from scipy.linalg import expm, logm

from arrayins.lie_group import (
    SMALL_ANGLE,
    CompositeGroupElement,
    bortz_gamma,
    composite_adjoint,
    composite_compose,
    composite_exp,
    composite_log,
    composite_right_jacobian,
    is_rotation,
    skew,
    so3_exp,
    so3_log,
    so3_right_jacobian,
)

from conftest import random_rotation_vector

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)
vec3 = st.tuples(finite, finite, finite).map(np.array)


def _ball(radius):
    return st.tuples(
        st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1), st.floats(0, radius)
    ).filter(lambda t: np.linalg.norm(t[:3]) > 1e-3).map(
        lambda t: np.array(t[:3]) / np.linalg.norm(t[:3]) * t[3]
    )


# --- skew -----------------------------------------------------------------

def test_skew_example():
    assert_allclose(skew([1, 2, 3]), [[0, -3, 2], [3, 0, -1], [-2, 1, 0]])
    assert_allclose(skew([0, 0, 0]), np.zeros((3, 3)))
    assert_allclose(skew([0, 0, 1]) @ [1, 0, 0], [0, 1, 0])


@given(vec3, vec3)
def test_skew_is_cross_product(v, w):
    S = skew(v)
    assert_allclose(S, -S.T)
    assert_allclose(S @ w, np.cross(v, w), atol=1e-12)


# --- exp / log --------------------------------------------------------------

def test_exp_examples():
    assert_allclose(so3_exp([0, 0, 0]), np.eye(3))
    assert_allclose(so3_exp([np.pi, 0, 0]), np.diag([1.0, -1.0, -1.0]), atol=1e-15)
    assert_allclose(so3_exp([np.pi / 2, 0, 0]), [[1, 0, 0], [0, 0, -1], [0, 1, 0]], atol=1e-15)


@given(_ball(np.pi))
def test_exp_matches_dense_expm(theta):
    assert_allclose(so3_exp(theta), expm(skew(theta)), atol=1e-13)


@given(_ball(np.pi))
def test_exp_is_rotation(theta):
    R = so3_exp(theta)
    assert np.linalg.norm(R.T @ R - np.eye(3)) < 1e-12
    assert abs(np.linalg.det(R) - 1.0) < 1e-12
    assert is_rotation(R)


def test_log_examples():
    assert_allclose(so3_log(np.eye(3)), np.zeros(3))
    assert_allclose(so3_log(np.diag([1.0, -1.0, -1.0])), [np.pi, 0, 0])
    # angle exactly pi: first nonzero axis component is positive
    assert_allclose(so3_log(np.diag([-1.0, 1.0, -1.0])), [0, np.pi, 0])
    axis = np.array([-1.0, 2.0, 2.0]) / 3.0
    R = 2 * np.outer(axis, axis) - np.eye(3)
    assert_allclose(so3_log(R), -np.pi * axis, atol=1e-12)


def test_log_roundtrip_100_draws(rng):
    for _ in range(100):
        t = random_rotation_vector(rng, np.pi - 1e-6)
        assert_allclose(so3_log(so3_exp(t)), t, atol=1e-10)


def test_log_roundtrip_10k_draws(rng):
    worst = 0.0
    for _ in range(10_000):
        t = random_rotation_vector(rng, np.pi - 1e-3)
        worst = max(worst, np.abs(so3_log(so3_exp(t)) - t).max())
    assert worst < 1e-10


@given(_ball(np.pi))
def test_exp_log_exp(theta):
    R = so3_exp(theta)
    r = so3_log(R)
    assert np.linalg.norm(r) <= np.pi + 1e-12
    assert_allclose(so3_exp(r), R, atol=1e-10)


def test_log_near_pi_matches_dense_logm(rng):
    for _ in range(20):
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        t = axis * (np.pi - 1e-7)
        R = so3_exp(t)
        assert_allclose(so3_exp(so3_log(R)), R, atol=1e-12)
        L = np.real(logm(R))
        assert_allclose(np.abs(so3_log(R)), np.abs([L[2, 1], L[0, 2], L[1, 0]]), atol=1e-6)


def test_small_angle_exp_log():
    for n in (1e-12, 1e-8, 0.99 * SMALL_ANGLE, 1.01 * SMALL_ANGLE):
        t = np.array([0.3, -0.5, 0.8]) / np.linalg.norm([0.3, -0.5, 0.8]) * n
        assert_allclose(so3_exp(t), expm(skew(t)), atol=1e-16, rtol=0)
        assert_allclose(so3_log(so3_exp(t)), t, atol=1e-18, rtol=1e-9)


# --- Gamma and right Jacobian ---------------------------------------------

def _gamma_mp(theta, dps=50):
    with mpmath.workdps(dps):
        th = [mpmath.mpf(float(x)) for x in theta]
        n = mpmath.sqrt(sum(x * x for x in th))
        c = (1 - (n / 2) * mpmath.cot(n / 2)) / n**2
        S = mpmath.matrix([[0, -th[2], th[1]], [th[2], 0, -th[0]], [-th[1], th[0], 0]])
        G = mpmath.eye(3) + S / 2 + c * S * S
        return np.array(G.tolist(), dtype=float)


def test_gamma_zero():
    assert_allclose(bortz_gamma([0, 0, 0]), np.eye(3))


def test_gamma_small_series():
    t = np.array([1.0, -2.0, 0.5])
    t *= 1e-6 / np.linalg.norm(t)
    S = skew(t)
    assert_allclose(bortz_gamma(t), np.eye(3) + S / 2 + S @ S / 12, atol=1e-12, rtol=0)


def test_gamma_quarter_turn_high_precision():
    t = np.array([np.pi / 2, 0.0, 0.0])
    assert_allclose(bortz_gamma(t), _gamma_mp(t), atol=1e-15)


def test_gamma_random_high_precision(rng):
    for _ in range(20):
        t = random_rotation_vector(rng, 6.0)
        assert_allclose(bortz_gamma(t), _gamma_mp(t), atol=1e-12)


def test_right_jacobian_zero():
    assert_allclose(so3_right_jacobian([0, 0, 0]), np.eye(3))


def test_right_jacobian_defining_relation(rng):
    for _ in range(50):
        theta = random_rotation_vector(rng, 3.0)
        d = rng.normal(size=3)
        d *= 1e-6 / np.linalg.norm(d)
        lhs = so3_exp(theta + d)
        rhs = so3_exp(theta) @ so3_exp(so3_right_jacobian(theta) @ d)
        assert np.abs(lhs - rhs).max() < 1e-11


def test_right_jacobian_error_is_second_order(rng):
    theta = np.array([0.7, -1.1, 0.4])
    d0 = rng.normal(size=3)
    d0 /= np.linalg.norm(d0)
    errs = []
    for h in (1e-2, 1e-3):
        d = h * d0
        lhs = so3_exp(theta + d)
        rhs = so3_exp(theta) @ so3_exp(so3_right_jacobian(theta) @ d)
        errs.append(np.linalg.norm(so3_log(rhs.T @ lhs)))
    assert 70 < errs[0] / errs[1] < 130


def test_gamma_is_inverse_right_jacobian(rng):
    for _ in range(50):
        theta = random_rotation_vector(rng, np.pi - 1e-3)
        assert_allclose(bortz_gamma(theta) @ so3_right_jacobian(theta), np.eye(3), atol=1e-12)
        assert_allclose(bortz_gamma(theta), np.linalg.inv(so3_right_jacobian(theta)), atol=1e-10)


@pytest.mark.parametrize("func", [bortz_gamma, so3_right_jacobian, so3_exp])
def test_continuous_across_branch_switch(func):
    axis = np.array([0.2, 0.9, -0.4]) / np.linalg.norm([0.2, 0.9, -0.4])
    below = func(axis * SMALL_ANGLE * (1 - 1e-9))
    above = func(axis * SMALL_ANGLE * (1 + 1e-9))
    assert np.abs(below - above).max() < 1e-12


def test_so3_log_continuous_across_branch_switch():
    axis = np.array([0.2, 0.9, -0.4]) / np.linalg.norm([0.2, 0.9, -0.4])
    lo = so3_log(so3_exp(axis * SMALL_ANGLE * (1 - 1e-9)))
    hi = so3_log(so3_exp(axis * SMALL_ANGLE * (1 + 1e-9)))
    assert np.abs(lo - hi).max() < 1e-12


# --- composite group ---------------------------------------------------------

def _embed(x: CompositeGroupElement) -> np.ndarray:
    m = x.euclidean.shape[0]
    M = np.zeros((m + 4, m + 4))
    M[:3, :3] = x.rotation
    M[3 : 3 + m, 3 : 3 + m] = np.eye(m)
    M[3 : 3 + m, -1] = x.euclidean
    M[-1, -1] = 1.0
    return M


def _embed_algebra(e: np.ndarray) -> np.ndarray:
    m = e.shape[0] - 3
    M = np.zeros((m + 4, m + 4))
    M[:3, :3] = skew(e[:3])
    M[3 : 3 + m, -1] = e[3:]
    return M


def test_composite_identity():
    x = composite_exp(np.zeros(21))
    assert_allclose(x.rotation, np.eye(3))
    assert_allclose(x.euclidean, np.zeros(18))
    assert_allclose(composite_adjoint(CompositeGroupElement.identity(12)), np.eye(15))


def test_composite_dimension_mismatch():
    with pytest.raises(ValueError):
        composite_exp(np.zeros(21), m=12)
    with pytest.raises(ValueError):
        composite_compose(CompositeGroupElement.identity(12), CompositeGroupElement.identity(18))


def test_composite_is_immutable():
    x = composite_exp(np.ones(15))
    with pytest.raises(ValueError):
        x.euclidean[0] = 3.0
    with pytest.raises(AttributeError):
        x.rotation = np.eye(3)


@pytest.mark.parametrize("m", [12, 18])
def test_composite_matches_dense_embedding(rng, m):
    for _ in range(20):
        e = rng.normal(scale=0.3, size=m + 3)
        f = rng.normal(scale=0.3, size=m + 3)
        X, Y = composite_exp(e), composite_exp(f)
        assert_allclose(_embed(X), expm(_embed_algebra(e)), atol=1e-10)
        assert_allclose(_embed(composite_compose(X, Y)), _embed(X) @ _embed(Y), atol=1e-10)
        assert_allclose(_embed(X.inverse()), np.linalg.inv(_embed(X)), atol=1e-10)
        L = np.real(logm(_embed(X)))
        assert_allclose(composite_log(X), np.r_[L[2, 1], L[0, 2], L[1, 0], L[3 : 3 + m, -1]], atol=1e-10)


def test_composite_adjoint_matches_conjugation(rng):
    X = composite_exp(rng.normal(size=15))
    e = rng.normal(scale=0.2, size=15)
    lhs = _embed(X) @ _embed_algebra(e) @ np.linalg.inv(_embed(X))
    assert_allclose(lhs, _embed_algebra(composite_adjoint(X) @ e), atol=1e-12)


def test_composite_roundtrip_small_perturbation(rng):
    for _ in range(50):
        X = composite_exp(rng.normal(size=21))
        e = rng.normal(scale=0.05, size=21)
        Y = composite_compose(X, composite_exp(e))
        assert_allclose(composite_log(X.inverse() @ Y), e, atol=1e-12)


def test_composite_right_jacobian_blockwise(rng):
    e = rng.normal(size=15)
    J = composite_right_jacobian(e)
    assert_allclose(J[:3, :3], so3_right_jacobian(e[:3]))
    assert_allclose(J[3:, 3:], np.eye(12))
    assert_allclose(J[:3, 3:], 0)
    assert_allclose(J[3:, :3], 0)
