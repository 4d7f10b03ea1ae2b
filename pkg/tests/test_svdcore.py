import numpy as np
import pytest
from hypothesis import given, strategies as st

from hybridreg.svdcore import (
    SingularSolveError,
    filter_factors,
    influence_trace,
    svd,
    tikhonov_solve,
)


def check_triplet(M, s, tol=1e-10):
    p = s.gamma.size
    assert np.max(np.abs(s.U.T @ s.U - np.eye(p))) <= tol
    assert np.max(np.abs(s.V.T @ s.V - np.eye(p))) <= tol
    assert np.linalg.norm(M - s.U @ np.diag(s.gamma) @ s.V.T) <= tol * max(np.linalg.norm(M), 1e-300)
    assert np.all(np.diff(s.gamma) <= 0) and np.all(s.gamma >= 0)


def test_diagonal():
    s = svd(np.diag([3.0, 2.0]))
    np.testing.assert_allclose(s.gamma, [3, 2])
    np.testing.assert_allclose(np.abs(s.U), np.eye(2), atol=1e-15)
    np.testing.assert_allclose(np.abs(s.V), np.eye(2), atol=1e-15)


def test_permutation():
    np.testing.assert_allclose(svd(np.array([[0.0, 1.0], [1.0, 0.0]])).gamma, [1, 1])


def test_bidiagonal_against_characteristic_polynomial():
    B = np.array([[2.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    # B^T B = [[5, 1], [1, 2]]: lambda^2 - 7 lambda + 9 = 0
    lam = np.array([(7 + np.sqrt(13)) / 2, (7 - np.sqrt(13)) / 2])
    np.testing.assert_allclose(svd(B).gamma, np.sqrt(lam), rtol=1e-14)


def test_sign_convention(rng):
    s = svd(rng.standard_normal((7, 5)))
    for j in range(5):
        col = s.U[:, j]
        assert col[np.flatnonzero(np.abs(col) > 0)[0]] >= 0


def test_full_u_spans_data_space(rng):
    M = rng.standard_normal((6, 4))
    s = svd(M, full=True)
    assert s.U_full.shape == (6, 6)
    np.testing.assert_allclose(s.U_full.T @ s.U_full, np.eye(6), atol=1e-12)
    np.testing.assert_allclose(s.U_full[:, :4], s.U)


def test_errors():
    with pytest.raises(ValueError):
        svd(np.array([[1.0, np.inf]]))
    with pytest.raises(ValueError):
        svd(np.zeros((0, 3)))


@given(st.integers(1, 64), st.integers(1, 64), st.integers(0, 2**32 - 1))
def test_triplet_invariants_random(m, n, seed):
    M = np.random.default_rng(seed).standard_normal((m, n))
    check_triplet(M, svd(M))


def test_filter_factor_examples():
    assert filter_factors([1.0], 1.0)[0] == 0.5
    np.testing.assert_array_equal(filter_factors([5.0, 1e-3], 0.0), [1, 1])
    np.testing.assert_allclose(filter_factors([3.0, 1.0], 2.0), [9 / 13, 1 / 5], rtol=1e-15)
    with pytest.raises(ValueError):
        filter_factors([1.0], np.nan)


def test_filter_factors_vectorized_over_zeta():
    phi = filter_factors([3.0, 1.0], np.array([0.0, 2.0]))
    assert phi.shape == (2, 2)
    np.testing.assert_allclose(phi[1], [9 / 13, 1 / 5])


@given(st.lists(st.floats(1e-6, 1e6), min_size=1, max_size=20), st.floats(1e-6, 1e6))
def test_filter_factors_monotone_in_index(gamma, zeta):
    gamma = np.sort(gamma)[::-1]
    phi = filter_factors(gamma, zeta)
    assert np.all((phi > 0) & (phi <= 1))
    assert np.all(np.diff(phi) <= 1e-15)


def test_tikhonov_scalar_examples():
    s = svd(np.array([[2.0]]))
    np.testing.assert_allclose(tikhonov_solve(s, [4.0], 0.0).x, [2.0])
    np.testing.assert_allclose(tikhonov_solve(s, [4.0], 2.0).x, [1.0])


def test_tikhonov_matches_normal_equations(rng):
    M = rng.standard_normal((5, 4))
    b = rng.standard_normal(5)
    z = 0.3
    ref = np.linalg.solve(M.T @ M + z**2 * np.eye(4), M.T @ b)
    sol = tikhonov_solve(svd(M), b, z)
    assert np.linalg.norm(sol.x - ref) <= 1e-10 * np.linalg.norm(ref)
    np.testing.assert_allclose(sol.phi, filter_factors(svd(M).gamma, z))


def test_tikhonov_singular_solve_error():
    s = svd(np.array([[1.0, 0.0], [0.0, 1e-17]]))
    with pytest.raises(SingularSolveError):
        tikhonov_solve(s, [1.0, 1.0], 0.0)
    with pytest.raises(ValueError):
        tikhonov_solve(s, [1.0, 1.0], -1.0)


def test_tikhonov_norm_decreases_and_vanishes(rng):
    M = rng.standard_normal((8, 6))
    b = rng.standard_normal(8)
    s = svd(M)
    norms = [np.linalg.norm(tikhonov_solve(s, b, z).x) for z in np.logspace(-3, 8, 40)]
    assert np.all(np.diff(norms) <= 1e-14)
    assert norms[-1] < 1e-14


def test_influence_trace_examples():
    assert influence_trace([1.0, 1.0], 1.0) == pytest.approx(1.0)
    assert influence_trace(np.arange(1.0, 6.0), 0.0) == 5
    g = np.array([3.0, 1.0, 0.2])
    z = 0.7
    assert influence_trace(g, z) == pytest.approx(3 - z**2 * np.sum(1 / (g**2 + z**2)), rel=1e-14)


def test_influence_trace_dense_oracle(rng):
    for _ in range(10):
        M = rng.standard_normal((8, 6))
        z = 10 ** rng.uniform(-2, 1)
        infl = M @ np.linalg.solve(M.T @ M + z**2 * np.eye(6), M.T)
        assert abs(np.trace(infl) - influence_trace(svd(M).gamma, z)) <= 1e-10
