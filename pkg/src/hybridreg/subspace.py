"""Subspace-size selection from the bidiagonal entries.

rho(t) = prod_{j<=t} theta_j / beta_{j+1} is kept in the log domain.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

OFFSET = 2  # steps added past the detected noise-entry index


@dataclass(frozen=True)
class RhoSequence:
    logrho: np.ndarray
    t_min: int = 0

    @property
    def t_achieved(self):
        return self.logrho.size

    @property
    def breakdown(self):
        return bool(np.isinf(self.logrho).any())

    @property
    def rho(self):
        with np.errstate(over="ignore"):
            return np.exp(self.logrho)

    def with_t_min(self, t_min):
        return RhoSequence(self.logrho, int(t_min))

    def _window(self, start):
        # logrho[start - 1:] covers t = start..t_achieved
        t_min = self.t_min
        if self.t_achieved <= t_min + OFFSET:
            raise ValueError(
                f"need more than t_min+2={t_min + OFFSET} steps, have {self.t_achieved}"
            )
        return self.logrho[max(start, 1) - 1 :]

    def is_flat(self):
        w = self._window(self.t_min + 1)
        return bool(np.all(w == w[0]))


def rho(theta, betasub, t_min=0):
    theta = np.asarray(theta, dtype=float)
    betasub = np.asarray(betasub, dtype=float)
    if theta.size < 1 or theta.shape != betasub.shape:
        raise ValueError("rho needs matching theta/beta sequences with t >= 1")
    with np.errstate(divide="ignore"):
        terms = np.log(theta) - np.log(betasub)
    return RhoSequence(np.cumsum(terms), int(t_min))


def rho_from(fact, t_min=0):
    return rho(fact.theta, fact.betasub, t_min)


def t_opt_rho(rs: RhoSequence) -> int:
    """Earliest argmax of rho over t >= t_min, plus 2, clamped to t_achieved.

    The search includes t = t_min itself: when rho peaks at or before t_min
    (noise already present) the rule returns t_min + 2.
    """
    start = max(rs.t_min, 1)
    w = rs._window(start)
    if rs.is_flat():
        return rs.t_min + OFFSET
    t = start + int(np.argmax(w))
    return min(t + OFFSET, rs.t_achieved)


def t_opt_min(rs: RhoSequence) -> int:
    """Earliest argmin of rho over t > t_min, plus 2, clamped to t_achieved."""
    w = rs._window(rs.t_min + 1)
    if rs.is_flat():
        return rs.t_min + OFFSET
    t = rs.t_min + 1 + int(np.argmin(w))
    return min(t + OFFSET, rs.t_achieved)


def gcv_tsvd(bhat, t_max):
    """TSVD-GCV values G(t), t = 1..t_max-1, and the minimizing t.

    G(t) = t_max / (t_max - t)^2 * sum_{i=t+1}^{t_max} bhat_i^2.
    """
    t_max = int(t_max)
    if t_max < 2:
        raise ValueError("gcv_tsvd needs t_max >= 2")
    bhat = np.asarray(bhat, dtype=float)
    if bhat.size < t_max:
        raise ValueError(f"need at least {t_max} coefficients, got {bhat.size}")
    sq = bhat[:t_max] ** 2
    # tail[t] = sum_{i>t} sq_i (1-based i)
    tail = np.cumsum(sq[::-1])[::-1]
    t = np.arange(1, t_max)
    G = t_max / (t_max - t) ** 2 * tail[t]
    return G, int(t[np.argmin(G)])


def zeta_window(gamma, t_star, tau=0.1):
    """(tau * gamma_{t*}, gamma_1); flags a degenerate window."""
    gamma = np.asarray(gamma, dtype=float)
    if not 1 <= t_star <= gamma.size:
        raise ValueError(f"t_star={t_star} outside 1..{gamma.size}")
    lo, hi = tau * gamma[t_star - 1], gamma[0]
    if not lo < hi:
        return (1e-14 * hi, hi), True
    return (lo, hi), False


def write_rho_csv(path, rs, markers=None, sample=0):
    markers = markers or {}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["c", "t", "logrho", "t_opt_rho", "t_opt_min", "t_opt_g"])
        for t, lr in enumerate(rs.logrho, start=1):
            w.writerow([sample, t, repr(float(lr)), markers.get("t_opt_rho", ""),
                        markers.get("t_opt_min", ""), markers.get("t_opt_g", "")])


def write_gcv_tsvd_csv(path, G):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "value"])
        for t, v in enumerate(G, start=1):
            w.writerow([t, repr(float(v))])
