import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from mccir.linalg import SingularMatrixError, cholesky, invert_sym, mat_mul, solve_spd, sym_eigenvalues


def test_mat_mul_identity():
    a = np.array([[1.0, 2], [3, 4]])
    np.testing.assert_array_equal(mat_mul(np.eye(2), a), a)


def test_mat_mul_hand_product():
    out = mat_mul(np.array([[1.0, 1], [0, 1]]), np.array([[9.0, 6], [6, 4]]))
    np.testing.assert_array_equal(out, [[15, 10], [6, 4]])


def test_mat_mul_zero():
    a = np.arange(6.0).reshape(2, 3)
    np.testing.assert_array_equal(mat_mul(a, np.zeros((3, 4))), np.zeros((2, 4)))


def test_mat_mul_shape_mismatch():
    with pytest.raises(ValueError):
        mat_mul(np.ones((2, 3)), np.ones((2, 3)))


def test_solve_identity():
    np.testing.assert_allclose(solve_spd(np.eye(3), np.array([1.0, 2, 3])), [1, 2, 3])


def test_solve_hand_2x2():
    x = solve_spd(np.array([[30.0, 10], [10, 6]]), np.array([1.0, 0]))
    np.testing.assert_allclose(x, [0.075, -0.125], rtol=1e-12)


def test_solve_rank_deficient():
    with pytest.raises(SingularMatrixError):
        solve_spd(np.ones((2, 2)), np.array([1.0, 1]))


def test_invert_identity():
    np.testing.assert_allclose(invert_sym(np.eye(4)), np.eye(4))


def test_invert_hand_2x2():
    inv = invert_sym(np.array([[0.2, 0.2], [0.2, 0.7]]))
    np.testing.assert_allclose(inv, [[7, -2], [-2, 2]], rtol=1e-12)


def test_invert_zero_matrix():
    with pytest.raises(SingularMatrixError):
        invert_sym(np.zeros((3, 3)))


def test_eigen_diagonal():
    np.testing.assert_allclose(sym_eigenvalues(np.diag([3.0, 1, 2])), [1, 2, 3])


def test_eigen_hand_2x2():
    np.testing.assert_allclose(sym_eigenvalues(np.array([[2.0, 1], [1, 2]])), [1, 3], atol=1e-13)


def test_eigen_identity():
    np.testing.assert_allclose(sym_eigenvalues(np.eye(5)), np.ones(5))


def test_eigen_rejects_nonsymmetric():
    with pytest.raises(ValueError):
        sym_eigenvalues(np.array([[1.0, 2], [0, 1]]))


def _spd(draw_mat):
    n = draw_mat.shape[0]
    return draw_mat @ draw_mat.T + n * np.eye(n)


square = st.integers(1, 6).flatmap(
    lambda n: arrays(np.float64, (n, n), elements=st.floats(-3, 3, allow_nan=False))
)


@settings(max_examples=60, deadline=None)
@given(square)
def test_cholesky_reconstructs(m):
    a = _spd(m)
    low = cholesky(a)
    np.testing.assert_allclose(low @ low.T, a, rtol=1e-10, atol=1e-10)
    assert np.allclose(np.triu(low, 1), 0)


@settings(max_examples=60, deadline=None)
@given(square)
def test_solve_matches_numpy(m):
    a = _spd(m)
    b = np.arange(1.0, a.shape[0] + 1)
    np.testing.assert_allclose(solve_spd(a, b), np.linalg.solve(a, b), rtol=1e-9, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(square)
def test_eigenvalues_match_numpy(m):
    a = m + m.T
    np.testing.assert_allclose(sym_eigenvalues(a), np.linalg.eigvalsh(a), atol=1e-9 * (1 + np.abs(a).max()))
