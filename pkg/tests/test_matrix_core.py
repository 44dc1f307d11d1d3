import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dropoutmf.exceptions import ConvergenceError, ParameterError, ShapeError
from dropoutmf.matrix_core import (
    frobenius_norm_sq,
    jacobi_svd,
    make_rng,
    read_matrix_csv,
    sample_bernoulli_matrix,
    sample_bernoulli_vector,
    spawn_rngs,
    svd,
    write_matrix_csv,
)


def test_frobenius_examples():
    assert frobenius_norm_sq(np.zeros((2, 2))) == 0.0
    assert frobenius_norm_sq(np.eye(2)) == 2.0
    assert frobenius_norm_sq([[3.0, 0.0], [0.0, 4.0]]) == 25.0


@pytest.mark.parametrize("bad", [np.array([[np.nan]]), np.array([1.0, 2.0]), np.zeros((0, 3))])
def test_frobenius_rejects_bad_input(bad):
    with pytest.raises(ValueError):
        frobenius_norm_sq(bad)


def test_svd_diagonal():
    res = svd(np.diag([3.0, 1.0]))
    np.testing.assert_allclose(res.sigma, [3.0, 1.0])
    np.testing.assert_allclose(np.abs(res.L), np.eye(2), atol=1e-15)
    np.testing.assert_allclose(np.abs(res.R), np.eye(2), atol=1e-15)


def test_svd_zero_matrix():
    res = svd(np.zeros((2, 2)))
    np.testing.assert_array_equal(res.sigma, [0.0, 0.0])
    np.testing.assert_allclose(res.L.T @ res.L, np.eye(2), atol=1e-14)


def test_svd_reconstructs_random(rng):
    A = rng.normal(size=(5, 3))
    res = svd(A)
    assert np.linalg.norm(res.reconstruct() - A) <= 1e-8 * np.linalg.norm(A)


@settings(max_examples=40, deadline=None)
@given(m=st.integers(1, 7), n=st.integers(1, 7), seed=st.integers(0, 2**31))
def test_svd_invariants(m, n, seed):
    A = np.random.default_rng(seed).normal(size=(m, n))
    res = svd(A)
    k = min(m, n)
    assert res.sigma.shape == (k,)
    assert np.all(np.diff(res.sigma) <= 0) and np.all(res.sigma >= 0)
    np.testing.assert_allclose(res.L.T @ res.L, np.eye(k), atol=1e-12)
    np.testing.assert_allclose(res.R.T @ res.R, np.eye(k), atol=1e-12)
    np.testing.assert_allclose(res.reconstruct(), A, atol=1e-12 * max(1.0, np.abs(A).max()))
    # sign convention: first nonzero entry of each left vector is non-negative
    for j in range(k):
        nz = res.L[np.abs(res.L[:, j]) > 1e-12, j]
        assert nz.size == 0 or nz[0] >= 0


@pytest.mark.parametrize("shape", [(6, 4), (4, 6), (5, 5), (1, 3)])
def test_jacobi_matches_lapack(rng, shape):
    A = rng.normal(size=shape)
    ref = np.linalg.svd(A, compute_uv=False)
    res = jacobi_svd(A)
    np.testing.assert_allclose(res.sigma, ref, rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(res.reconstruct(), A, atol=1e-12)


def test_jacobi_rank_deficient(rng):
    A = rng.normal(size=(6, 2)) @ rng.normal(size=(2, 5))
    res = jacobi_svd(A)
    k = min(A.shape)
    np.testing.assert_allclose(res.L.T @ res.L, np.eye(k), atol=1e-12)
    np.testing.assert_allclose(res.reconstruct(), A, atol=1e-12)
    assert res.sigma[2] < 1e-12


def test_jacobi_reports_sweep_cap(rng):
    with pytest.raises(ConvergenceError) as info:
        jacobi_svd(rng.normal(size=(8, 8)), max_sweeps=1)
    assert info.value.iterations == 1


def test_bernoulli_determinism():
    a = sample_bernoulli_vector(4, 0.5, make_rng(7))
    b = sample_bernoulli_vector(4, 0.5, make_rng(7))
    np.testing.assert_array_equal(a, b)
    assert set(np.unique(a)) <= {0, 1}


def test_bernoulli_law_of_large_numbers():
    r = sample_bernoulli_vector(100_000, 0.7, make_rng(0))
    assert abs(r.mean() - 0.7) <= 0.005


def test_bernoulli_near_one():
    M = sample_bernoulli_matrix(10_000, 1, 0.999, make_rng(1))
    assert M.mean() >= 0.99


@pytest.mark.parametrize("theta", [0.0, 1.0, -0.1, 1.5])
def test_bernoulli_rejects_theta(theta):
    with pytest.raises(ParameterError):
        sample_bernoulli_vector(3, theta, make_rng(0))


def test_spawned_streams_are_independent_and_reproducible():
    a = [g.random(3) for g in spawn_rngs(5, 3)]
    b = [g.random(3) for g in spawn_rngs(5, 3)]
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x, y)
    assert not np.allclose(a[0], a[1])


def test_csv_roundtrip(tmp_path, rng):
    A = rng.normal(size=(4, 3))
    path = tmp_path / "a.csv"
    write_matrix_csv(path, A)
    np.testing.assert_array_equal(read_matrix_csv(path), A)


def test_csv_rejects_ragged(tmp_path):
    path = tmp_path / "r.csv"
    path.write_text("1,2,3\n4,5\n")
    with pytest.raises(ShapeError):
        read_matrix_csv(path)


def test_csv_rejects_text_and_empty(tmp_path):
    bad = tmp_path / "t.csv"
    bad.write_text("1,x\n")
    with pytest.raises(ParameterError):
        read_matrix_csv(bad)
    empty = tmp_path / "e.csv"
    empty.write_text("")
    with pytest.raises(ValueError):
        read_matrix_csv(empty)
