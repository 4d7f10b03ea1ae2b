"""Dense SVD and SVD-filtered Tikhonov solutions for small matrices."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SMALL_RATIO = 1e-15


class SvdConvergenceError(RuntimeError):
    pass


class SingularSolveError(ValueError):
    pass


@dataclass(frozen=True)
class SvdTriplet:
    """Thin SVD ``M = U diag(gamma) V^T`` with descending ``gamma``.

    ``U_full`` holds all ``m`` left singular vectors when requested; its
    trailing columns span the part of the data space outside ``Range(M)``.
    """

    gamma: np.ndarray
    U: np.ndarray
    V: np.ndarray
    U_full: np.ndarray | None = None
    small: np.ndarray = field(default=None)

    @property
    def p(self):
        return self.gamma.size

    @property
    def shape(self):
        return (self.U.shape[0], self.V.shape[0])


@dataclass(frozen=True)
class FilteredSolution:
    zeta: float
    phi: np.ndarray
    coeffs: np.ndarray
    x: np.ndarray


def _fix_signs(U, V):
    # first nonzero entry of each left singular vector is made nonnegative
    for j in range(min(U.shape[1], V.shape[1])):
        col = U[:, j]
        nz = np.flatnonzero(np.abs(col) > 0)
        if nz.size and col[nz[0]] < 0:
            U[:, j] = -col
            V[:, j] = -V[:, j]


def svd(M, full=False):
    """SVD of a small dense matrix (LAPACK gesdd, falling back to gesvd)."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or min(M.shape) < 1:
        raise ValueError(f"svd needs a non-empty 2-D matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError("svd input contains non-finite entries")
    try:
        U, s, Vt = np.linalg.svd(M, full_matrices=full)
    except np.linalg.LinAlgError:
        try:
            import scipy.linalg

            U, s, Vt = scipy.linalg.svd(M, full_matrices=full, lapack_driver="gesvd")
        except np.linalg.LinAlgError as exc:
            raise SvdConvergenceError(f"SVD of a {M.shape} matrix did not converge") from exc
    p = s.size
    V = Vt[:p].T.copy()
    U = U.copy()
    _fix_signs(U, V)
    U_full = U if full else None
    small = s < (s[0] * SMALL_RATIO if s[0] > 0 else np.inf)
    return SvdTriplet(gamma=s, U=U[:, :p], V=V, U_full=U_full, small=small)


def filter_factors(gamma, zeta):
    """Tikhonov filter factors gamma^2 / (gamma^2 + zeta^2).

    ``zeta`` may be an array, in which case the result has shape
    ``zeta.shape + gamma.shape``.
    """
    gamma = np.asarray(gamma, dtype=float)
    zeta = np.asarray(zeta, dtype=float)
    if not (np.all(np.isfinite(gamma)) and np.all(np.isfinite(zeta))):
        raise ValueError("filter_factors: non-finite input")
    g2 = gamma**2
    z2 = zeta[..., None] ** 2
    with np.errstate(invalid="ignore"):
        phi = g2 / (g2 + z2)
    # gamma = zeta = 0 is the unregularized limit
    return np.where(z2 == 0, 1.0, phi)


def influence_trace(gamma, zeta):
    """Trace of the influence matrix, sum_i phi_i(zeta)."""
    return np.sum(filter_factors(gamma, zeta), axis=-1)


def tikhonov_solve(svd_: SvdTriplet, b, zeta):
    """x = sum_i phi_i (u_i^T b / gamma_i) v_i."""
    b = np.asarray(b, dtype=float)
    zeta = float(zeta)
    if zeta < 0:
        raise ValueError("zeta must be nonnegative")
    gamma = svd_.gamma
    if zeta == 0 and (gamma[-1] <= 0 or gamma[-1] < gamma[0] * SMALL_RATIO):
        raise SingularSolveError("zeta = 0 with a numerically rank-deficient matrix")
    bhat = svd_.U.T @ b
    phi = filter_factors(gamma, zeta)
    # phi/gamma written as gamma/(gamma^2+zeta^2) stays finite for gamma -> 0
    coeffs = gamma / (gamma**2 + zeta**2) * bhat if zeta > 0 else bhat / gamma
    x = svd_.V @ coeffs
    return FilteredSolution(zeta=zeta, phi=phi, coeffs=coeffs, x=x)
