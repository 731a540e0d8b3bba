import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hkfloer.quat import (
    I_UNIT,
    J_UNIT,
    K_UNIT,
    ImQuat,
    Quat,
    UNITS,
    inner,
    left_matrix,
    omega,
    qconj,
    qmul,
    right_matrix,
    structure_apply,
    structure_matrix,
)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)
quats = arrays(np.float64, (4,), elements=finite)
hn = arrays(np.float64, (3, 4), elements=finite)
lams = arrays(np.float64, (3,), elements=finite)


def su2(q):
    """Independent oracle: the complex 2x2 representation of a quaternion."""
    a, b, c, d = q
    return np.array([[a + 1j * b, c + 1j * d], [-c + 1j * d, a - 1j * b]])


def from_su2(M):
    return np.array([M[0, 0].real, M[0, 0].imag, M[0, 1].real, M[0, 1].imag])


one, i, j, k = np.eye(4)


@pytest.mark.parametrize(
    "a, b, expected",
    [
        (i, j, k),
        (j, k, i),
        (k, i, j),
        (j, i, -k),
        (i, i, -one),
        (k, k, -one),
        (one + i, one + j, one + i + j + k),
    ],
)
def test_products(a, b, expected):
    assert np.allclose(qmul(a, b), expected, atol=0)


def test_ijk_is_minus_one():
    assert np.array_equal(qmul(qmul(i, j), k), -one)


@given(quats, quats)
def test_product_matches_matrix_oracle(a, b):
    assert np.allclose(qmul(a, b), from_su2(su2(a) @ su2(b)), atol=1e-9)


@given(quats, quats, quats)
def test_associative(a, b, c):
    assert np.allclose(qmul(qmul(a, b), c), qmul(a, qmul(b, c)), atol=1e-8)


@given(quats, quats, quats)
def test_distributive(a, b, c):
    assert np.allclose(qmul(a, b + c), qmul(a, b) + qmul(a, c), atol=1e-9)


@given(quats, quats)
def test_norm_is_multiplicative(a, b):
    assert np.isclose(np.linalg.norm(qmul(a, b)), np.linalg.norm(a) * np.linalg.norm(b), rtol=1e-12, atol=1e-12)


@given(quats, quats)
def test_conjugate_reverses_products(a, b):
    assert np.allclose(qconj(qmul(a, b)), qmul(qconj(b), qconj(a)), atol=1e-9)


def test_broadcasting():
    a = np.random.default_rng(0).standard_normal((5, 3, 4))
    out = qmul(a, j)
    assert out.shape == (5, 3, 4)
    assert np.allclose(out[2, 1], qmul(a[2, 1], j))


def test_left_and_right_matrices():
    rng = np.random.default_rng(1)
    q, v = rng.standard_normal((2, 4))
    assert np.allclose(left_matrix(q) @ v, qmul(q, v))
    assert np.allclose(right_matrix(q) @ v, qmul(v, q))
    # left and right multiplications commute
    assert np.allclose(left_matrix(q) @ right_matrix(v), right_matrix(v) @ left_matrix(q))


def test_structures_satisfy_quaternion_relations():
    I, J, K = (left_matrix(u) for u in UNITS)
    eye = np.eye(4)
    for M in (I, J, K):
        assert np.allclose(M @ M, -eye)
        assert np.allclose(M.T, -M)
    assert np.allclose(I @ J, K)
    assert np.allclose(J @ K, I)
    assert np.allclose(K @ I, J)


@pytest.mark.parametrize(
    "lam, v, expected",
    [((1, 0, 0), one, i), ((0, 1, 0), i, -k), ((0, 0, 1), j, -i), ((1, 1, 0), one, i + j)],
)
def test_structure_apply_examples(lam, v, expected):
    assert np.allclose(structure_apply(lam, v), expected)


@given(lams, hn)
def test_structure_apply_matches_matrix(lam, v):
    assert np.allclose(structure_apply(lam, v), v @ structure_matrix(lam).T, atol=1e-9)


@given(lams, quats)
def test_unit_structure_squares_to_minus_one(lam, v):
    norm = np.linalg.norm(lam)
    if norm < 1e-3:
        return
    u = lam / norm
    assert np.allclose(structure_apply(u, structure_apply(u, v)), -v, atol=1e-9)


def test_omega_examples():
    assert omega((1, 0, 0), one, i) == pytest.approx(1.0)
    assert omega((1, 0, 0), i, one) == pytest.approx(-1.0)
    assert omega((0, 1, 0), one, j) == pytest.approx(1.0)
    assert omega((0, 0, 1), one, i) == pytest.approx(0.0)


@given(lams, hn, hn)
def test_omega_is_skew(lam, xi, eta):
    assert np.isclose(omega(lam, xi, eta), -omega(lam, eta, xi), atol=1e-7 * (1 + np.abs(xi).max() * np.abs(eta).max()))


@given(lams, hn, hn, quats)
def test_omega_invariant(lam, xi, eta, g):
    """A structure preserves its own symplectic form and the metric."""
    J = lambda v: structure_apply(lam, v)  # noqa: E731
    scale = 1 + np.linalg.norm(lam) ** 2
    n = np.linalg.norm(lam)
    if n < 1e-3:
        return
    u = lam / n
    Ju = lambda v: structure_apply(u, v)  # noqa: E731
    assert np.isclose(omega(u, Ju(xi), Ju(eta)), omega(u, xi, eta), atol=1e-7 * (1 + np.abs(xi).max() * np.abs(eta).max()))
    assert np.isclose(inner(Ju(xi), Ju(eta)), inner(xi, eta), atol=1e-7 * (1 + np.abs(xi).max() * np.abs(eta).max()))
    # right multiplication by a quaternion commutes with every left structure
    assert np.allclose(J(qmul(xi, g)), qmul(J(xi), g), atol=1e-6 * scale * (1 + np.abs(xi).max() * np.abs(g).max()))


def test_dataclasses():
    a = Quat(1, 2, 3, 4)
    assert a.conj() == Quat(1, -2, -3, -4)
    assert a.norm() == pytest.approx(np.sqrt(30))
    assert (I_UNIT.as_quat() * J_UNIT) == K_UNIT.as_quat()
    assert np.array_equal((2 * a).as_array(), [2, 4, 6, 8])
    assert (a - a) == Quat()
    assert ImQuat(3, 4, 0).norm() == 5.0
    assert np.array_equal(Quat.from_array([1, 0, 0, 0]).as_array(), one)
