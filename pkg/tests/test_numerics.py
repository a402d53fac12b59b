import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tinyodl import numerics as nx
from tinyodl.numerics import FixedPoint32


def triple_loop(a, b):
    out = np.zeros((a.shape[0], b.shape[1]))
    for i in range(a.shape[0]):
        for j in range(b.shape[1]):
            for k in range(a.shape[1]):
                out[i, j] += a[i, k] * b[k, j]
    return out


def test_matmul_identity():
    A = np.array([[1.5, -2.0], [0.25, 7.0]])
    np.testing.assert_array_equal(nx.matmul(np.eye(2), A), A)


def test_matmul_hand_example():
    got = nx.matmul(np.array([[1.0, 2.0], [3.0, 4.0]]), np.array([[1.0], [1.0]]))
    np.testing.assert_array_equal(got, [[3.0], [7.0]])


def test_matmul_matches_triple_loop(rng):
    a, b = rng.normal(size=(8, 8)), rng.normal(size=(8, 8))
    np.testing.assert_allclose(nx.matmul(a, b), triple_loop(a, b), rtol=0, atol=1e-12)


def test_matmul_dimension_mismatch():
    with pytest.raises(nx.DimensionError):
        nx.matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_fixed_matmul_close_to_float(rng):
    a, b = rng.uniform(-1, 1, (5, 7)), rng.uniform(-1, 1, (7, 3))
    got = nx.from_fixed(nx.matmul(nx.to_fixed(a), nx.to_fixed(b), "fixed"))
    # 7 rounded products plus quantized inputs
    np.testing.assert_allclose(got, a @ b, atol=7 * 3 / nx.ONE)


def test_fixed_matmul_vector_shapes():
    a = nx.to_fixed(np.array([[1.0, 2.0], [3.0, 4.0]]))
    v = nx.to_fixed(np.array([1.0, -1.0]))
    np.testing.assert_array_equal(nx.from_fixed(nx.fx_matmul(a, v)), [-1.0, -1.0])
    assert nx.from_fixed(nx.fx_matmul(v, v)) == 2.0


@pytest.mark.parametrize("a, b, expected", [(1.0, 1.0, 1.0), (0.5, 0.5, 0.25), (-1.5, 2.0, -3.0)])
def test_fp_mul_exact(a, b, expected):
    assert nx.fp_mul(FixedPoint32.from_float(a), FixedPoint32.from_float(b)).to_float() == expected


def test_fp_mul_saturates():
    r = nx.fp_mul(FixedPoint32.from_float(200.0), FixedPoint32.from_float(200.0))
    assert r == nx.FIXED_MAX
    assert r.saturated
    assert r.to_float() == pytest.approx(32767.99998, abs=1e-5)
    neg = nx.fp_mul(FixedPoint32.from_float(-200.0), FixedPoint32.from_float(200.0))
    assert neg == nx.FIXED_MIN


def test_rounding_ties_toward_positive():
    half_ulp = 1 << 15
    assert nx._round_shift(half_ulp, 16) == 1
    assert nx._round_shift(-half_ulp, 16) == 0


def test_fp_div():
    one = FixedPoint32.from_float(1.0)
    three = FixedPoint32.from_float(3.0)
    assert abs(nx.fp_div(one, three).to_float() - 1 / 3) <= 0.5 / nx.ONE
    with pytest.raises(ZeroDivisionError):
        nx.fp_div(one, FixedPoint32(0))


def test_to_fixed_rejects_nan():
    with pytest.raises(ValueError):
        nx.to_fixed([1.0, np.nan])


def test_unknown_mode():
    with pytest.raises(ValueError, match="scalar mode"):
        nx.matmul(np.eye(2), np.eye(2), "float16")


@settings(max_examples=200, deadline=None)
@given(st.floats(-100, 100), st.floats(-100, 100))
def test_fp_mul_within_one_ulp(a, b):
    fa, fb = FixedPoint32.from_float(a), FixedPoint32.from_float(b)
    exact = fa.to_float() * fb.to_float()
    assert abs(nx.fp_mul(fa, fb).to_float() - exact) <= 0.5 / nx.ONE


def test_solve_identity(rng):
    b = rng.normal(size=(4, 2))
    np.testing.assert_array_equal(nx.solve_spd(np.eye(4), b), b)


def test_solve_diagonal():
    np.testing.assert_allclose(nx.solve_spd(np.diag([2.0, 4.0]), [[2.0], [4.0]]), [[1.0], [1.0]])


def test_solve_random_spd_residual(rng):
    M = rng.normal(size=(6, 6))
    A = M @ M.T + 6 * np.eye(6)
    b = rng.normal(size=(6, 3))
    X = nx.solve_spd(A, b)
    assert np.max(np.abs(A @ X - b)) < 1e-9


def test_solve_vector_rhs(rng):
    A = np.array([[4.0, 1.0], [1.0, 3.0]])
    x = nx.solve_spd(A, np.array([1.0, 2.0]))
    assert x.shape == (2,)
    np.testing.assert_allclose(A @ x, [1.0, 2.0])


def test_solve_names_failing_pivot():
    A = np.array([[1.0, 2.0], [2.0, 1.0]])
    with pytest.raises(nx.NotPositiveDefiniteError) as info:
        nx.solve_spd(A, np.eye(2))
    assert info.value.pivot == 1
    assert "pivot 1" in str(info.value)


def test_cholesky_matches_numpy(rng):
    M = rng.normal(size=(5, 5))
    A = M @ M.T + np.eye(5)
    np.testing.assert_allclose(nx.cholesky(A), np.linalg.cholesky(A), atol=1e-12)
