import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hybridreg import regparam as rp
from hybridreg.regparam import SpectralData
from hybridreg.svdcore import svd, tikhonov_solve


def spectral(M, b, m_full=None):
    return SpectralData.from_svd(svd(M, full=True), b, M.shape[0] if m_full is None else m_full)


def influence(M, z):
    return M @ np.linalg.solve(M.T @ M + z**2 * np.eye(M.shape[1]), M.T)


def dense_terms(M, b, z):
    Az = influence(M, z)
    r = b - Az @ b
    return r @ r, np.trace(Az), M.shape[0]


def test_spectral_data_validation():
    with pytest.raises(ValueError):
        SpectralData([1.0, 2.0], [1.0], 3)
    with pytest.raises(ValueError):
        SpectralData([1.0, 0.0], [1.0, 1.0, 1.0], 3)
    with pytest.raises(ValueError):
        SpectralData.from_svd(svd(np.eye(2)), [1.0, 1.0], 2)


def test_projected_bhat_norm(rng):
    B = np.zeros((6, 5))
    B[range(5), range(5)] = rng.uniform(0.5, 2, 5)
    B[range(1, 6), range(5)] = rng.uniform(0.1, 1, 5)
    e = np.zeros(6)
    e[0] = 3.7
    sd = spectral(B, e, 100)
    assert sd.t == 5 and sd.rows == 6
    assert np.linalg.norm(sd.bhat) == pytest.approx(3.7, rel=1e-12)


def test_zeta_grid_examples():
    np.testing.assert_allclose(rp.zeta_grid(1, 100, 3), [1, 10, 100])
    np.testing.assert_allclose(rp.zeta_grid(0.02, 0.02e4, 5), 0.02 * 10.0 ** np.arange(5), rtol=1e-14)
    for lo, hi in ((0, 1), (-1, 1), (2, 1)):
        with pytest.raises(ValueError):
            rp.zeta_grid(lo, hi, 4)


def test_default_grid():
    g = rp.default_grid(np.array([2.0, 1.0, 0.01]))
    assert g.size == 1000 and g[0] == pytest.approx(0.01) and g[-1] == pytest.approx(2.0)
    g = rp.default_grid(np.array([2.0, 1e-20]))
    assert g[0] == pytest.approx(2e-14)


def test_upre_limits():
    c = 0.6
    sd = SpectralData([1.0], [1.0, c], 50)
    assert rp.upre(sd, 1e-9) == pytest.approx(c**2, abs=1e-12)
    assert rp.upre(sd, 1e9) == pytest.approx(1 + c**2 - 2, abs=1e-12)
    assert rp.upre(sd, 1.0, "full") - rp.upre(sd, 1.0) == pytest.approx(2 - 50)
    with pytest.raises(ValueError):
        rp.upre(sd, 1.0, "other")


def test_objectives_match_dense_influence(rng):
    for m, n in ((8, 6), (30, 20), (64, 40)):
        M = rng.standard_normal((m, n)) @ np.diag(0.7 ** np.arange(n))
        b = rng.standard_normal(m)
        sd = spectral(M, b)
        for z in 10 ** rng.uniform(-3, 1, 5):
            res, tr, mm = dense_terms(M, b, z)
            assert rp.upre(sd, z) == pytest.approx(res + 2 * tr - mm, rel=1e-8)
            assert rp.mdp_residual(sd, z) == pytest.approx(res, rel=1e-8)
            for w in (1.0, 0.3):
                Az = influence(M, z)
                den = np.trace(np.eye(m) - w * Az)
                assert rp.gcv_w(sd, z, w) == pytest.approx(res / den**2, rel=1e-8)


def test_gcv_examples(rng):
    sd = SpectralData([1.0], [1.0, 0.0], 10)
    # numerator (1/2)^2; denominator (1 + t - omega t + omega/2)^2 = (3/2)^2
    assert rp.gcv_w(sd, 1.0, 1.0) == pytest.approx(1 / 9)
    assert rp.default_omega(sd) == pytest.approx(2 / 10)
    with pytest.raises(ValueError):
        rp.gcv_w(sd, 1.0, 1.5)


def test_wgcv_zero_denominator():
    # rows = t and omega = 1: tr(I - A(zeta)) -> 0 as zeta -> 0
    sd = SpectralData([1.0], [1.0], 1)
    with pytest.raises(ZeroDivisionError):
        rp.gcv_w(sd, 0.0, 1.0)


def test_gcv_equals_projected_gcv_pointwise(rng):
    B = np.zeros((9, 8))
    B[range(8), range(8)] = np.sort(rng.uniform(0.01, 3, 8))[::-1]
    B[range(1, 9), range(8)] = rng.uniform(0.01, 1, 8)
    e = np.zeros(9)
    e[0] = 2.0
    s = svd(B, full=True)
    sd = SpectralData.from_svd(s, e, 200)
    for z in np.logspace(-3, 1, 25):
        w = tikhonov_solve(s, e, z)
        num = np.linalg.norm(B @ w.x - e) ** 2
        direct = num / (9 - np.sum(w.phi)) ** 2
        assert rp.gcv(sd, z) == pytest.approx(direct, rel=1e-12)
        assert rp.gcv_w(sd, z, 1.0) == rp.gcv(sd, z)


def test_mdp_residual_examples(rng):
    sd = SpectralData([2.0, 0.5], [1.0, -2.0, 0.7], 10)
    assert rp.mdp_residual(sd, 0.0) == pytest.approx(0.49)
    assert rp.mdp_residual(sd, 1e12) == pytest.approx(np.sum(sd.bhat**2))
    B = rng.standard_normal((6, 5))
    e = np.zeros(6)
    e[0] = 1.5
    s = svd(B, full=True)
    sd = SpectralData.from_svd(s, e, 6)
    for z in (0.01, 0.3, 4.0):
        w = tikhonov_solve(s, e, z).x
        assert rp.mdp_residual(sd, z) == pytest.approx(np.linalg.norm(B @ w - e) ** 2, rel=1e-12)


@given(st.lists(st.floats(0.01, 10), min_size=1, max_size=10), st.integers(0, 2**32 - 1))
def test_mdp_residual_nondecreasing(gamma, seed):
    gamma = np.sort(gamma)[::-1]
    bhat = np.random.default_rng(seed).standard_normal(len(gamma) + 1)
    vals = rp.mdp_residual(SpectralData(gamma, bhat, 100), np.logspace(-4, 3, 200))
    assert np.all(np.diff(vals) >= -1e-12 * vals.max())


def test_mdp_solve_scalar_closed_form():
    b1, b2 = 2.0, 0.5
    sd = SpectralData([1.0], [b1, b2], 10)
    for delta in (0.5, 1.0, 3.0, 4.2):
        s = math.sqrt((delta - b2**2) / b1**2)
        zeta_ref = math.sqrt(s / (1 - s))
        root = rp.mdp_solve(sd, delta, (1e-6, 1e6))
        assert root.flag == ""
        assert root.zeta == pytest.approx(zeta_ref, rel=1e-10)


def test_mdp_solve_flags():
    sd = SpectralData([1.0], [2.0, 0.5], 10)
    r = rp.mdp_solve(sd, 0.1, (1e-3, 1e3))
    assert r.flag == "no_root_above" and r.zeta == 1e-3
    r = rp.mdp_solve(sd, 5.0, (1e-3, 1e3))
    assert r.flag == "no_root_below" and r.zeta == 1e3
    with pytest.raises(ValueError):
        rp.mdp_solve(sd, -1.0, (1e-3, 1e3))
    with pytest.raises(ValueError):
        rp.mdp_solve(sd, 1.0, (1.0, 0.5))


@settings(max_examples=60)
@given(st.integers(1, 20), st.integers(0, 2**32 - 1), st.floats(0.05, 0.95))
def test_mdp_root_quality(t, seed, frac):
    r = np.random.default_rng(seed)
    gamma = np.sort(10 ** r.uniform(-6, 1, t))[::-1]
    sd = SpectralData(gamma, r.standard_normal(t + 1), 100)
    lo_val = rp.mdp_residual(sd, 1e-8)
    hi_val = rp.mdp_residual(sd, 1e4)
    delta = lo_val + frac * (hi_val - lo_val)
    root = rp.mdp_solve(sd, delta, (1e-8, 1e4))
    assert root.flag == ""
    assert abs(rp.mdp_residual(sd, root.zeta) - delta) <= 1e-8 * delta


def test_select_parameter_refines_three_point_grid():
    sd = SpectralData([1.0, 0.01], [3.0, 0.5, 0.2], 40)
    grid = np.array([0.01, 0.2, 3.0])
    assert np.argmin(rp.upre(sd, grid)) == 1
    sel = rp.select_parameter("UPRE", sd, grid)
    assert sel.refined
    assert rp.upre(sd, sel.zeta_opt) < sel.values.min()
    assert grid[0] <= sel.zeta_opt <= grid[-1]


@pytest.mark.parametrize("method", ["UPRE", "GCV", "WGCV"])
def test_selection_matches_fine_grid(method, rng):
    gamma = np.sort(10 ** rng.uniform(-4, 0.5, 12))[::-1]
    bhat = gamma.tolist() + [0.0]
    bhat = np.array(bhat) * 10 + 0.05 * rng.standard_normal(13)
    sd = SpectralData(gamma, bhat, 200)
    grid = rp.zeta_grid(1e-4, 3.0, 100)
    sel = rp.select_parameter(method, sd, grid)
    fine = rp.zeta_grid(1e-4, 3.0, 991)
    fvals = rp.objective(method, sd, fine)
    j = int(np.argmin(fvals))
    assert fine[max(j - 1, 0)] <= sel.zeta_opt <= fine[min(j + 1, fine.size - 1)]
    assert rp.objective(method, sd, sel.zeta_opt) <= sel.values.min() + 1e-12 * abs(sel.values.min())


def test_upre_modes_share_argmin(rng):
    gamma = np.sort(rng.uniform(0.01, 2, 7))[::-1]
    sd = SpectralData(gamma, rng.standard_normal(8), 300)
    grid = rp.zeta_grid(1e-3, 3, 500)
    assert np.argmin(rp.upre(sd, grid)) == np.argmin(rp.upre(sd, grid, "full"))


@pytest.mark.parametrize("method", ["UPRE", "GCV", "WGCV", "MDP", "PMDP"])
def test_sign_flip_invariance(method, rng):
    gamma = np.sort(rng.uniform(0.01, 2, 6))[::-1]
    bhat = rng.standard_normal(7)
    flips = rng.choice([-1.0, 1.0], 7)
    grid = rp.zeta_grid(1e-3, 3, 50)
    a = rp.select_parameter(method, SpectralData(gamma, bhat, 50), grid)
    b = rp.select_parameter(method, SpectralData(gamma, bhat * flips, 50), grid)
    assert a.zeta_opt == b.zeta_opt
    np.testing.assert_array_equal(a.values, b.values)


def test_mdp_and_pmdp_targets():
    gamma = np.array([3.0, 1.0, 0.1])
    sd = SpectralData(gamma, np.array([5.0, 3.0, 2.0, 0.5]), 20)
    grid = rp.zeta_grid(1e-4, 3.0, 100)
    pm = rp.select_parameter("PMDP", sd, grid, upsilon=1.05)
    assert rp.mdp_residual(sd, pm.zeta_opt) == pytest.approx(1.05 * 4, rel=1e-8)
    md = rp.select_parameter("MDP", sd, grid, upsilon=1.05)
    assert md.flags == ["no_root_below"] and md.zeta_opt == grid[-1]


def test_flat_objective_flagged():
    sd = SpectralData([1.0], [0.0, 0.0], 5)
    sel = rp.select_parameter("GCV", sd, rp.zeta_grid(0.1, 1, 10))
    assert "flat_objective" in sel.flags and not sel.refined
    assert sel.zeta_opt == 1.0  # ties go to the larger zeta


def test_select_parameter_errors():
    sd = SpectralData([1.0], [1.0, 0.1], 5)
    with pytest.raises(ValueError):
        rp.select_parameter("UPRE", sd, np.array([1.0, 0.5]))
    with pytest.raises(ValueError):
        rp.select_parameter("MIN", sd, np.array([0.5, 1.0]))


def test_min_oracle_noise_free_picks_smallest(rng):
    M = rng.standard_normal((10, 6))
    x_ex = rng.standard_normal(6)
    s = svd(M)
    b = M @ x_ex
    grid = rp.zeta_grid(1e-6, 1, 30)
    sel = rp.min_oracle(lambda zs: np.column_stack([tikhonov_solve(s, b, z).x for z in zs]), x_ex, grid)
    assert sel.zeta_opt == grid[0]
    assert np.all(np.diff(sel.values) >= -1e-12)


def test_objective_csv(tmp_path):
    sd = SpectralData([1.0], [1.0, 0.1], 5)
    sel = rp.select_parameter("UPRE", sd, rp.zeta_grid(0.1, 1, 4))
    rp.write_objective_csv(tmp_path / "o.csv", [sel])
    lines = (tmp_path / "o.csv").read_text().splitlines()
    assert lines[0] == "zeta,value,method" and len(lines) == 5 and lines[1].endswith(",UPRE")
