"""Hybrid GKB + Tikhonov solves and the iteratively reweighted outer loop.

A solve whitens the data, shifts by a prior ``x_apr``, bidiagonalizes the
right-preconditioned operator ``A_w diag(scale)`` restricted to the active
columns, picks the subspace size and the regularization parameter on the
projected problem, and maps the projected coefficients back:
``x = x_apr + scatter(scale * (G_t w))``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import regparam, subspace
from .gkb import gkb_init
from .operators import column_scaled, column_subset, whiten
from .problems import relative_error
from .svdcore import svd

T_RULES = ("rho", "min", "gcvtsvd", "fixed")


@dataclass
class HybridOptions:
    t_min: int = 3
    t_max: int = 74
    method: str = "UPRE"
    tau: float = 0.1
    upsilon: float = 1.05
    omega: object = "auto"
    grid_count: int = 1000
    t_rule: str = "rho"
    t_fixed: int | None = None
    # "spectrum": zeta in [max(1e-14 gamma_1, gamma_t), gamma_1]
    # "tau": zeta in [tau gamma_{t*}, gamma_1]
    window: str = "tau"
    # t* for the tau window: "max" -> max(t_opt_rho, t_opt_G), "rho" -> t_opt_rho
    t_star: str = "max"
    zeta: float | None = None  # used by method "FIXED"
    min_range: tuple | None = None  # explicit zeta range for the MIN oracle

    def validate(self, m=None, n=None):
        if self.method not in regparam.METHODS + ("FIXED",):
            raise ValueError(f"unknown method {self.method!r}")
        if self.method == "FIXED" and (self.zeta is None or self.zeta < 0):
            raise ValueError("method FIXED needs a nonnegative zeta")
        if self.t_rule not in T_RULES:
            raise ValueError(f"unknown t_rule {self.t_rule!r}")
        if self.window not in ("tau", "spectrum"):
            raise ValueError(f"unknown window {self.window!r}")
        if self.t_star not in ("max", "rho"):
            raise ValueError(f"unknown t_star rule {self.t_star!r}")
        if not 0 <= self.t_min < self.t_max:
            raise ValueError(f"need 0 <= t_min < t_max, got {self.t_min}, {self.t_max}")
        if m is not None and n is not None and self.t_max > min(m, n):
            raise ValueError(f"t_max={self.t_max} exceeds min(m, n)={min(m, n)}")
        if self.grid_count < 2:
            raise ValueError("grid_count must be at least 2")
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if self.omega != "auto" and not 0 <= float(self.omega) <= 1:
            raise ValueError("omega must be 'auto' or lie in [0, 1]")
        return self


@dataclass
class HybridSolution:
    t_used: int
    zeta: float
    w: np.ndarray
    x: np.ndarray
    residual_proj: float
    residual_full: float
    selection: regparam.RegSelection | None
    rho_trace: subspace.RhoSequence
    markers: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)


class ProjectedSystem:
    """One bidiagonalization, reusable for many (t, method) choices."""

    def __init__(self, op, b, t_max, cov=None, x_apr=None, scale=None, mask=None, norm_est=None):
        m, n = op.shape
        b = np.asarray(b, dtype=float)
        cov = np.ones(m) if cov is None else np.asarray(cov, dtype=float)
        self.x_apr = np.zeros(n) if x_apr is None else np.array(x_apr, dtype=float)
        self.scale = np.ones(n) if scale is None else np.asarray(scale, dtype=float)
        self.mask = np.ones(n, bool) if mask is None else np.asarray(mask, dtype=bool)
        if self.x_apr.shape != (n,) or self.scale.shape != (n,) or self.mask.shape != (n,):
            raise ValueError("x_apr, scale and mask must all have length n")
        self.op_w, self.b_w = whiten(op, b, cov)
        self.r_w = self.b_w - self.op_w.apply(self.x_apr) if self.x_apr.any() else self.b_w
        self.active = np.flatnonzero(self.mask)
        self.eff = column_subset(column_scaled(self.op_w, self.scale), self.mask)
        self.m_full = m
        t_max = min(int(t_max), m, self.active.size)
        self.fact = gkb_init(self.eff, self.r_w, capacity=t_max, norm_est=norm_est).run(t_max)
        self._svd_cache = {}

    @property
    def t_achieved(self):
        return self.fact.t

    def rho(self, t_min):
        return subspace.rho_from(self.fact, t_min)

    def spectral(self, t):
        if t not in self._svd_cache:
            s = svd(self.fact.B(t), full=True)
            sd = regparam.SpectralData.from_svd(s, self.fact.projected_rhs(t), self.m_full)
            self._svd_cache[t] = (s, sd)
        return self._svd_cache[t]

    def markers(self, t_min):
        """t_opt-rho, t_opt-min and t_opt-G for this factorization."""
        out, flags = {}, []
        rs = self.rho(t_min)
        if rs.t_achieved > t_min + subspace.OFFSET:
            if rs.is_flat():
                flags.append("flat_rho")
            out["t_opt_rho"] = subspace.t_opt_rho(rs)
            out["t_opt_min"] = subspace.t_opt_min(rs)
        else:
            flags.append("rho_too_short")
            out["t_opt_rho"] = out["t_opt_min"] = rs.t_achieved
        tm = self.t_achieved
        if tm >= 2:
            _, sd = self.spectral(tm)
            _, out["t_opt_g"] = subspace.gcv_tsvd(sd.bhat, tm)
        else:
            out["t_opt_g"] = tm
        return out, flags

    def back(self, W):
        """Full-space solution(s) x_apr + scatter(scale * G_t W); W is (t,) or (t, K)."""
        W = np.asarray(W, dtype=float)
        t = W.shape[0]
        y = self.fact.G[:, :t] @ W
        y = (self.scale[self.active] * y.T).T
        if W.ndim == 1:
            x = self.x_apr.copy()
            x[self.active] += y
            return x
        X = np.repeat(self.x_apr[:, None], W.shape[1], axis=1)
        X[self.active] += y
        return X

    def coefficients(self, t, zetas):
        """Projected solutions w_t(zeta) as columns, one per zeta."""
        s, sd = self.spectral(t)
        zetas = np.atleast_1d(np.asarray(zetas, dtype=float))
        g = s.gamma
        with np.errstate(divide="ignore", invalid="ignore"):
            C = g / (g**2 + zetas[:, None] ** 2) * sd.bhat[: g.size]
        return s.V @ C.T

    def grid(self, t, opts, t_star=None):
        s, _ = self.spectral(t)
        gamma = s.gamma
        if opts.window == "spectrum":
            return regparam.default_grid(gamma, opts.grid_count), False
        t_star = t if t_star is None else max(1, min(int(t_star), t))
        (lo, hi), degenerate = subspace.zeta_window(gamma, t_star, opts.tau)
        return regparam.zeta_grid(lo, hi, opts.grid_count), degenerate

    def solve(self, t, opts, x_ex=None, t_star=None, method=None):
        method = opts.method if method is None else method
        t = int(min(t, self.t_achieved))
        if t < 1:
            raise ValueError("no bidiagonalization steps available")
        flags = []
        s, sd = self.spectral(t)
        if np.any(s.gamma <= 0):
            raise ValueError("projected matrix has a zero singular value")
        grid, degenerate = self.grid(t, opts, t_star)
        if degenerate:
            flags.append("window_degenerate")
        selection = None
        if method == "FIXED":
            zeta = float(opts.zeta)
        elif method == "MIN":
            if x_ex is None:
                raise ValueError("the MIN oracle needs the exact solution")
            mgrid = grid
            if opts.min_range is not None:
                mgrid = regparam.zeta_grid(opts.min_range[0], opts.min_range[1], opts.grid_count)
            selection = regparam.min_oracle(
                lambda z: self.back(self.coefficients(t, z)), x_ex, mgrid
            )
            zeta = selection.zeta_opt
        else:
            selection = regparam.select_parameter(
                method, sd, grid, upsilon=opts.upsilon, omega=opts.omega
            )
            zeta = selection.zeta_opt
            flags += selection.flags
        w = self.coefficients(t, zeta)[:, 0]
        x = self.back(w)
        res_proj = float(np.linalg.norm(self.fact.B(t) @ w - self.fact.projected_rhs(t)))
        res_full = float(np.linalg.norm(self.eff.apply(self.fact.G[:, :t] @ w) - self.r_w))
        return HybridSolution(
            t_used=t,
            zeta=zeta,
            w=w,
            x=x,
            residual_proj=res_proj,
            residual_full=res_full,
            selection=selection,
            rho_trace=None,
            flags=flags,
        )

    def choose_t(self, opts, markers):
        if opts.t_rule == "rho":
            return markers["t_opt_rho"]
        if opts.t_rule == "min":
            return markers["t_opt_min"]
        if opts.t_rule == "gcvtsvd":
            return markers["t_opt_g"]
        return self.t_achieved if opts.t_fixed is None else min(opts.t_fixed, self.t_achieved)

    def t_star(self, opts, markers):
        if opts.t_star == "rho":
            return markers["t_opt_rho"]
        return max(markers["t_opt_rho"], markers["t_opt_g"])


def hybrid_solve(op, b, cov=None, x_apr=None, scale=None, mask=None, opts=None, x_ex=None):
    opts = (opts or HybridOptions()).validate(*op.shape)
    ps = ProjectedSystem(op, b, opts.t_max, cov, x_apr, scale, mask)
    flags = []
    if ps.fact.breakdown and ps.t_achieved <= opts.t_min:
        flags.append("breakdown_before_t_min")
    markers, mflags = ps.markers(opts.t_min)
    flags += mflags
    t = ps.choose_t(opts, markers)
    sol = ps.solve(t, opts, x_ex=x_ex, t_star=ps.t_star(opts, markers))
    sol.rho_trace = ps.rho(opts.t_min)
    sol.markers = markers
    sol.flags = flags + sol.flags
    return sol


def positivity_clamp(x):
    return np.maximum(np.asarray(x, dtype=float), 0.0)


def irr_weights(x_k, x_km1, rel_tol=0.0, beta=0.0):
    """Inverse IRR weights sqrt(dx^2 + beta^2) and the active-column mask.

    With beta = 0 coordinates whose change is at most rel_tol * max|dx| are
    frozen (mask False). An all-False mask signals convergence.
    """
    x_k = np.asarray(x_k, dtype=float)
    x_km1 = np.asarray(x_km1, dtype=float)
    if x_k.shape != x_km1.shape:
        raise ValueError("iterates must have equal length")
    dx = x_k - x_km1
    if beta > 0:
        return np.sqrt(dx**2 + beta**2), np.ones(dx.size, bool)
    mag = np.abs(dx)
    mask = mag > rel_tol * mag.max() if mag.max() > 0 else np.zeros(dx.size, bool)
    return mag, mask


@dataclass
class IrrStep:
    k: int
    x: np.ndarray
    mask: np.ndarray
    t_used: int
    zeta: float
    re: float | None
    rho_trace: subspace.RhoSequence
    t_min: int
    t_max: int
    markers: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)
    residual_proj: float | None = None
    residual_full: float | None = None


@dataclass
class IrrHistory:
    iterations: list
    k_max: int
    beta_focus: float = 0.0
    converged: bool = False

    @property
    def x(self):
        return self.iterations[-1].x

    def re(self):
        return [it.re for it in self.iterations]


def irr_iterate(op, b, cov=None, opts=None, k_max=4, positivity=False, x_ex=None, rel_tol=0.0):
    """Iteratively reweighted hybrid solves with beta = 0 column reduction.

    Step 0 is a plain hybrid solve. Step k >= 1 uses the previous solution as
    prior, weights |x^(k-1) - x^(k-2)| (x^(-1) = 0), drops unchanged
    columns, shrinks t_min by 2 (not below 2), caps t_max at the previous
    subspace size and places the zeta window at t_opt-rho.
    """
    if k_max < 1:
        raise ValueError("k_max must be at least 1")
    opts = (opts or HybridOptions()).validate(*op.shape)
    m, n = op.shape
    steps = []
    x_prev2 = np.zeros(n)
    x_prev = None
    cur = opts
    converged = False
    for k in range(k_max):
        if k == 0:
            scale, mask, x_apr = None, np.ones(n, bool), None
        else:
            scale, mask = irr_weights(x_prev, x_prev2, rel_tol)
            if not mask.any():
                converged = True
                break
            t_min = max(2, cur.t_min - 2)
            t_cap = min(m, int(mask.sum()))
            t_max = min(max(steps[-1].t_used, t_min + 3), t_cap)
            t_min = min(t_min, max(0, t_max - 3))
            cur = replace(cur, t_min=t_min, t_max=t_max, t_star="rho")
            x_apr = x_prev
        sol = hybrid_solve(op, b, cov, x_apr, scale, mask, cur, x_ex=x_ex)
        x = positivity_clamp(sol.x) if positivity else sol.x
        if k > 0:
            # frozen coordinates are carried over bit for bit
            x[~mask] = x_prev[~mask]
        re = relative_error(x, x_ex) if x_ex is not None else None
        steps.append(
            IrrStep(k, x, mask, sol.t_used, sol.zeta, re, sol.rho_trace, cur.t_min, cur.t_max,
                    sol.markers, sol.flags, sol.residual_proj, sol.residual_full)
        )
        x_prev2 = x_prev if x_prev is not None else np.zeros(n)
        x_prev = x
    return IrrHistory(steps, k_max, 0.0, converged)


__all__ = [
    "HybridOptions",
    "HybridSolution",
    "ProjectedSystem",
    "hybrid_solve",
    "irr_weights",
    "irr_iterate",
    "positivity_clamp",
    "IrrHistory",
    "IrrStep",
]
