"""Regularization-parameter rules evaluated on a (projected) SVD.

All objectives are closed-form in the singular values ``gamma`` and the data
coefficients ``bhat = U_full^T b``. Entries of ``bhat`` beyond ``len(gamma)``
are the out-of-range component; for the projected system ``B_t`` that is the
single coefficient ``bhat[t]``. Every objective accepts a scalar or an array
of ``zeta`` values.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np


METHODS = ("UPRE", "GCV", "WGCV", "MDP", "PMDP", "MIN")
GOLDEN_ITERS = 40


@dataclass(frozen=True)
class SpectralData:
    gamma: np.ndarray
    bhat: np.ndarray
    m_full: int

    def __post_init__(self):
        gamma = np.asarray(self.gamma, dtype=float)
        bhat = np.asarray(self.bhat, dtype=float)
        if bhat.size < gamma.size:
            raise ValueError("bhat must be at least as long as gamma")
        if np.any(gamma <= 0):
            raise ValueError("singular values must be positive")
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "bhat", bhat)

    @property
    def t(self):
        return self.gamma.size

    @property
    def rows(self):
        """Number of data components of the system (t + 1 for B_t)."""
        return self.bhat.size

    @property
    def tail(self):
        return float(np.sum(self.bhat[self.t :] ** 2))

    @classmethod
    def from_svd(cls, svd_, rhs, m_full):
        """Projected data coefficients from a full-U SVD and right-hand side."""
        if svd_.U_full is None:
            raise ValueError("SpectralData needs the SVD computed with full=True")
        return cls(svd_.gamma, svd_.U_full.T @ np.asarray(rhs, dtype=float), int(m_full))


@dataclass
class RegSelection:
    method: str
    zeta_opt: float
    grid: np.ndarray
    values: np.ndarray
    refined: bool = False
    flags: list = field(default_factory=list)


class DegenerateObjective(ValueError):
    pass


def zeta_grid(lo, hi, count):
    if lo <= 0:
        raise ValueError("grid lower limit must be positive")
    if hi <= lo:
        raise ValueError("grid upper limit must exceed the lower limit")
    return np.logspace(np.log10(lo), np.log10(hi), int(count))


def default_grid(gamma, count=1000):
    """Log grid between max(1e-14 gamma_1, gamma_t) and gamma_1."""
    gamma = np.asarray(gamma, dtype=float)
    lo = max(1e-14 * gamma[0], gamma[-1])
    if lo >= gamma[0]:
        lo = 1e-14 * gamma[0]
    return zeta_grid(lo, gamma[0], count)


def _residual_terms(sd, zeta):
    zeta = np.asarray(zeta, dtype=float)
    g2 = sd.gamma**2
    z2 = zeta[..., None] ** 2
    damp = z2 / (g2 + z2)  # 1 - phi
    phi = 1.0 - damp
    res = np.sum(damp**2 * sd.bhat[: sd.t] ** 2, axis=-1) + sd.tail
    return res, phi, damp


def mdp_residual(sd, zeta):
    """Squared projected residual ||B w(zeta) - beta1 e1||^2."""
    return _residual_terms(sd, zeta)[0]


def upre(sd, zeta, mode="projected"):
    res, phi, _ = _residual_terms(sd, zeta)
    if mode == "projected":
        dof = sd.rows
    elif mode == "full":
        dof = sd.m_full
    else:
        raise ValueError(f"unknown UPRE mode {mode!r}")
    return res + 2.0 * np.sum(phi, axis=-1) - dof


def gcv_w(sd, zeta, omega=1.0):
    if not 0.0 <= omega <= 1.0:
        raise ValueError("WGCV weight must lie in [0, 1]")
    res, _, damp = _residual_terms(sd, zeta)
    # tr(I - omega B(zeta)) = (rows - omega t) + omega * sum zeta^2/(gamma^2+zeta^2)
    den = (sd.rows - omega * sd.t) + omega * np.sum(damp, axis=-1)
    if np.any(den == 0):
        raise ZeroDivisionError("WGCV denominator vanishes")
    return res / den**2


def gcv(sd, zeta):
    return gcv_w(sd, zeta, 1.0)


def default_omega(sd):
    return min(1.0, sd.rows / sd.m_full)


def _mdp_dresidual_dlog(sd, zeta):
    g2 = sd.gamma**2
    z2 = zeta**2
    return float(np.sum(4.0 * z2**2 * g2 * sd.bhat[: sd.t] ** 2 / (g2 + z2) ** 3))


@dataclass
class MdpRoot:
    zeta: float
    flag: str = ""
    iterations: int = 0


def mdp_solve(sd, delta, bracket, rtol=1e-8, maxiter=200):
    """Find zeta with R(zeta) = delta by safeguarded Newton in log(zeta).

    R is nondecreasing, so a root exists in the bracket iff R(lo) <= delta <= R(hi).
    Otherwise the nearer end is returned with flag ``no_root_below`` (R(hi) < delta)
    or ``no_root_above`` (R(lo) > delta).
    """
    if delta <= 0:
        raise ValueError("discrepancy target must be positive")
    lo, hi = float(bracket[0]), float(bracket[1])
    if not 0 < lo < hi:
        raise ValueError("bracket must satisfy 0 < lo < hi")
    f_lo = float(mdp_residual(sd, lo)) - delta
    f_hi = float(mdp_residual(sd, hi)) - delta
    if f_hi < 0:
        return MdpRoot(hi, "no_root_below")
    if f_lo > 0:
        return MdpRoot(lo, "no_root_above")
    a, b = math.log(lo), math.log(hi)
    if abs(f_lo) <= rtol * delta:
        return MdpRoot(lo)
    if abs(f_hi) <= rtol * delta:
        return MdpRoot(hi)
    s = 0.5 * (a + b)
    for it in range(1, maxiter + 1):
        z = math.exp(s)
        f = float(mdp_residual(sd, z)) - delta
        if abs(f) <= rtol * delta:
            return MdpRoot(_polish(sd, delta, s, f, a, b), "", it)
        if f < 0:
            a = s
        else:
            b = s
        d = _mdp_dresidual_dlog(sd, z)
        s_new = s - f / d if d > 0 else None
        if s_new is None or not a < s_new < b:
            s_new = 0.5 * (a + b)
        if b - a < 1e-15 * max(1.0, abs(s)):
            return MdpRoot(math.exp(s_new), "tolerance_not_met", it)
        s = s_new
    return MdpRoot(math.exp(s), "maxiter", maxiter)


def _polish(sd, delta, s, f, a, b):
    # one extra Newton step: quadratic convergence takes the root to rounding level
    d = _mdp_dresidual_dlog(sd, math.exp(s))
    if d > 0 and a < s - f / d < b:
        s_new = s - f / d
        if abs(float(mdp_residual(sd, math.exp(s_new))) - delta) <= abs(f):
            s = s_new
    return math.exp(s)


def objective(method, sd, zeta, omega=None):
    if method == "UPRE":
        return upre(sd, zeta)
    if method == "GCV":
        return gcv(sd, zeta)
    if method == "WGCV":
        return gcv_w(sd, zeta, default_omega(sd) if omega in (None, "auto") else float(omega))
    if method in ("MDP", "PMDP"):
        return mdp_residual(sd, zeta)
    raise ValueError(f"no objective for method {method!r}")


def _argmin_last(values):
    # ties go to the larger zeta
    vmin = np.min(values)
    return int(np.flatnonzero(values == vmin)[-1])


def golden_section(f, a, b, iters=GOLDEN_ITERS):
    """Minimize f on [a, b] (here: log zeta) by golden-section search."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return (c, fc) if fc <= fd else (d, fd)


def select_parameter(method, sd, grid, upsilon=1.05, omega=None, refine=True):
    """Pick zeta by ``method`` over ``grid`` (ascending), refining locally."""
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be nonempty and strictly ascending")
    if method in ("MDP", "PMDP"):
        values = mdp_residual(sd, grid)
        dof = sd.m_full if method == "MDP" else sd.rows
        root = mdp_solve(sd, upsilon * dof, (grid[0], grid[-1]))
        flags = [root.flag] if root.flag else []
        return RegSelection(method, root.zeta, grid, values, refined=not flags, flags=flags)
    if method not in ("UPRE", "GCV", "WGCV"):
        raise ValueError(f"select_parameter does not handle {method!r}")
    values = objective(method, sd, grid, omega)
    flags = []
    if np.ptp(values) <= 1e-14 * max(1.0, np.max(np.abs(values))):
        flags.append("flat_objective")
    i = _argmin_last(values)
    zeta, refined = float(grid[i]), False
    if refine and grid.size >= 2 and not flags:
        a = math.log(grid[max(i - 1, 0)])
        b = math.log(grid[min(i + 1, grid.size - 1)])
        s, fs = golden_section(lambda s: float(objective(method, sd, math.exp(s), omega)), a, b)
        if fs < values[i]:
            zeta, refined = math.exp(s), True
    zeta = min(max(zeta, grid[0]), grid[-1])
    return RegSelection(method, zeta, grid, values, refined, flags)


def min_oracle(solutions, x_ex, grid):
    """Grid zeta minimizing ||x(zeta) - x_ex|| / ||x_ex||.

    ``solutions(grid)`` returns the full-space solutions as columns.
    """
    grid = np.asarray(grid, dtype=float)
    X = solutions(grid)
    x_ex = np.asarray(x_ex, dtype=float)
    re = np.linalg.norm(X - x_ex[:, None], axis=0) / np.linalg.norm(x_ex)
    i = _argmin_last(re)
    return RegSelection("MIN", float(grid[i]), grid, re)


def write_objective_csv(path, selections):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["zeta", "value", "method"])
        for sel in selections:
            for z, v in zip(sel.grid, sel.values):
                w.writerow([repr(float(z)), repr(float(v)), sel.method])
