import numpy as np
import pytest
from hypothesis import given, strategies as st

from hybridreg import operators as ops
from hybridreg.operators import (
    BlurOperator,
    DenseOperator,
    IdentityOperator,
    column_scaled,
    column_subset,
    norm_estimate,
    to_dense,
    whiten,
)
from hybridreg.problems import tomo


def adjoint_gap(op, rng):
    v = rng.standard_normal(op.cols)
    u = rng.standard_normal(op.rows)
    lhs = op.apply(v) @ u
    rhs = v @ op.apply_transpose(u)
    scale = np.linalg.norm(u) * np.linalg.norm(v) * norm_estimate(op)
    return abs(lhs - rhs) / scale


def test_identity_apply():
    np.testing.assert_array_equal(IdentityOperator(3).apply(np.array([1.0, 2, 3])), [1, 2, 3])
    u = np.array([4.0, -1, 0.5])
    np.testing.assert_array_equal(IdentityOperator(3).apply_transpose(u), u)


def test_dense_apply_and_transpose():
    A = DenseOperator([[2, 0], [0, 3], [0, 0]])
    np.testing.assert_array_equal(A.apply(np.ones(2)), [2, 3, 0])
    np.testing.assert_array_equal(A.apply_transpose(np.array([1.0, 1, 5])), [2, 3])


def test_dimension_and_finiteness_errors():
    A = DenseOperator(np.eye(2))
    with pytest.raises(ValueError):
        A.apply(np.ones(3))
    with pytest.raises(ValueError):
        A.apply_transpose(np.ones(1))
    with pytest.raises(ValueError):
        A.apply(np.array([1.0, np.nan]))


def test_blur_delta_matches_direct_convolution():
    N, sigma, hw = 17, 1.3, 4
    op = BlurOperator(N, sigma, hw)
    img = np.zeros((N, N))
    img[8, 6] = 1.0
    out = op.apply(img.ravel()).reshape(N, N)
    g = ops.gaussian_stencil(sigma, hw)
    ref = np.zeros((N, N))
    for i in range(N):
        for j in range(N):
            for a in range(-hw, hw + 1):
                for b in range(-hw, hw + 1):
                    if 0 <= i - a < N and 0 <= j - b < N:
                        ref[i, j] += g[a + hw] * g[b + hw] * img[i - a, j - b]
    np.testing.assert_allclose(out, ref, atol=1e-15)
    np.testing.assert_allclose(out[8 - hw : 8 + hw + 1, 6], g * g[hw], atol=1e-15)


def test_whiten_unit_covariance_is_identity_and_idempotent():
    A = DenseOperator(np.arange(6.0).reshape(3, 2))
    b = np.array([1.0, 2, 3])
    op, bw = whiten(A, b, np.ones(3))
    assert op is A
    np.testing.assert_array_equal(bw, b)
    op2, bw2 = whiten(op, bw, np.ones(3))
    assert op2 is A and np.array_equal(bw2, b)


def test_whiten_scaling_and_errors():
    A = DenseOperator(np.ones((3, 2)))
    op, bw = whiten(A, np.full(3, 2.0), np.full(3, 4.0))
    np.testing.assert_array_equal(bw, np.ones(3))
    np.testing.assert_array_equal(to_dense(op), np.full((3, 2), 0.5))
    for bad in (np.array([1.0, 0, 1]), np.array([1.0, -1, 1])):
        with pytest.raises(ValueError):
            whiten(A, np.ones(3), bad)


def test_whitened_noise_has_unit_variance():
    m, s = 152, 0.37
    A = DenseOperator(np.eye(m))
    b_ex = np.linspace(-1, 1, m)
    variances = []
    for seed in range(50):
        b = b_ex + s * np.random.default_rng(seed).standard_normal(m)
        _, bw = whiten(A, b, np.full(m, s**2))
        _, bw_ex = whiten(A, b_ex, np.full(m, s**2))
        variances.append(np.var(bw - bw_ex))
    assert abs(np.mean(variances) - 1.0) <= 0.2


def test_column_scaled_examples():
    A = DenseOperator([[1.0, 2.0]])
    np.testing.assert_array_equal(to_dense(column_scaled(A, [3.0, 4.0])), [[3.0, 8.0]])
    assert column_scaled(A, np.ones(2)) is A
    with pytest.raises(ValueError):
        column_scaled(A, np.ones(3))


def test_column_subset_examples():
    A = DenseOperator([[1.0, 2.0, 3.0]])
    sub = column_subset(A, [True, False, True])
    np.testing.assert_array_equal(to_dense(sub), [[1.0, 3.0]])
    assert column_subset(A, np.ones(3, bool)) is A
    with pytest.raises(ValueError):
        column_subset(A, np.zeros(3, bool))
    z = np.array([5.0, 7.0])
    np.testing.assert_array_equal(sub.scatter(z), [5.0, 0.0, 7.0])
    np.testing.assert_array_equal(sub.gather(sub.scatter(z)), z)


def test_composition_matches_dense_assembly(rng):
    M = rng.standard_normal((6, 8))
    d = np.abs(rng.standard_normal(8))
    mask = np.array([1, 0, 1, 1, 0, 1, 1, 1], bool)
    A = DenseOperator(M)
    np.testing.assert_allclose(to_dense(column_scaled(A, d)), M * d, rtol=1e-15)
    got = to_dense(column_subset(column_scaled(A, d), mask))
    np.testing.assert_array_equal(got, (M * d)[:, mask])


def test_to_dense_cap_and_identity():
    np.testing.assert_array_equal(to_dense(IdentityOperator(3)), np.eye(3))
    with pytest.raises(ValueError):
        to_dense(IdentityOperator(4), cap=15)


def test_operators_are_immutable():
    A = DenseOperator(np.eye(2))
    with pytest.raises(ValueError):
        A.matrix[0, 0] = 5.0


@pytest.mark.parametrize("kind", ["dense", "scaled", "subset", "whitened", "blur", "tomo"])
def test_adjoint_consistency(kind, rng):
    M = DenseOperator(rng.standard_normal((9, 7)))
    op = {
        "dense": lambda: M,
        "scaled": lambda: column_scaled(M, rng.uniform(0.1, 2, 7)),
        "subset": lambda: column_subset(M, rng.uniform(size=7) > 0.3),
        "whitened": lambda: whiten(M, np.ones(9), rng.uniform(0.5, 2, 9))[0],
        "blur": lambda: BlurOperator(20, 1.5, 5),
        "tomo": lambda: tomo(16, 7).op,
    }[kind]()
    for _ in range(100):
        assert adjoint_gap(op, rng) <= 1e-12


@given(st.integers(1, 12), st.integers(1, 12), st.integers(0, 2**32 - 1))
def test_to_dense_columns_are_unit_responses(m, n, seed):
    r = np.random.default_rng(seed)
    M = r.standard_normal((m, n))
    d = r.uniform(0.1, 3, n)
    op = column_scaled(DenseOperator(M), d)
    D = to_dense(op)
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        np.testing.assert_allclose(D[:, j], op.apply(e), rtol=1e-14, atol=1e-14)


def test_norm_estimate_close_to_spectral_norm(rng):
    M = rng.standard_normal((30, 20))
    est = norm_estimate(DenseOperator(M))
    true = np.linalg.norm(M, 2)
    assert 0.9 * true <= est <= true * (1 + 1e-12)
