"""Golub-Kahan bidiagonalization with full reorthogonalization.

After ``t`` steps the factorization satisfies ``A G_t = H_{t+1} B_t`` with
``B_t`` lower bidiagonal ((t+1) x t, diagonal ``theta``, subdiagonal
``betasub``) and ``beta1 H_{t+1} e_1 = b``.
"""

from __future__ import annotations

import struct

import numpy as np

from .operators import norm_estimate

BREAKDOWN_TOL = 1e-14
MEMORY_CAP = 200_000_000  # stored basis entries


class GKBError(ValueError):
    pass


class BidiagFactorization:
    """Growing GKB state. Single owner; ``step`` mutates in place."""

    def __init__(self, op, b, capacity, norm_est=None):
        m, n = op.shape
        b = np.asarray(b, dtype=float)
        if b.shape != (m,):
            raise GKBError(f"right-hand side must have length {m}")
        beta1 = float(np.linalg.norm(b))
        if not np.isfinite(beta1) or beta1 == 0.0:
            raise GKBError("zero right-hand side: Krylov space is empty")
        capacity = int(min(capacity, min(m, n)))
        if (m + n) * (capacity + 1) > MEMORY_CAP:
            raise GKBError(f"basis storage for t_max={capacity} exceeds the memory cap")
        self.op = op
        self.shape = (m, n)
        self.capacity = capacity
        self.beta1 = beta1
        self.norm_est = norm_estimate(op) if norm_est is None else float(norm_est)
        self._G = np.zeros((n, capacity))
        self._H = np.zeros((m, capacity + 1))
        self._H[:, 0] = b / beta1
        self._theta = np.zeros(capacity)
        self._beta = np.zeros(capacity)
        self.t = 0
        self.breakdown = False
        self.h_degenerate = False

    # views over the filled part
    @property
    def theta(self):
        return self._theta[: self.t]

    @property
    def betasub(self):
        return self._beta[: self.t]

    @property
    def G(self):
        return self._G[:, : self.t]

    @property
    def H(self):
        return self._H[:, : self.t + 1]

    def B(self, t=None):
        """Lower bidiagonal (t+1) x t matrix, truncated to the first t steps."""
        t = self.t if t is None else int(t)
        if not 1 <= t <= self.t:
            raise ValueError(f"t={t} outside the computed range 1..{self.t}")
        B = np.zeros((t + 1, t))
        i = np.arange(t)
        B[i, i] = self._theta[:t]
        B[i + 1, i] = self._beta[:t]
        return B

    def projected_rhs(self, t=None):
        t = self.t if t is None else int(t)
        if t < 1:
            raise ValueError("projected_rhs needs t >= 1")
        e = np.zeros(t + 1)
        e[0] = self.beta1
        return e

    def step(self):
        if self.breakdown:
            raise GKBError("factorization has terminated (Krylov space exhausted)")
        if self.t >= self.capacity:
            raise GKBError(f"capacity {self.capacity} reached")
        j = self.t
        op = self.op
        h = self._H[:, j]
        g = op._rmatvec(h)
        if j > 0:
            g -= self._beta[j - 1] * self._G[:, j - 1]
        g = _reorth(g, self._G[:, :j])
        theta = float(np.linalg.norm(g))
        if theta == 0.0:
            # A^T h_j has no new direction at all; B_t cannot be extended
            self.breakdown = True
            return self
        g /= theta
        self._G[:, j] = g
        self._theta[j] = theta
        hn = op._matvec(g) - theta * h
        hn = _reorth(hn, self._H[:, : j + 1])
        beta = float(np.linalg.norm(hn))
        self.t = j + 1
        if beta <= BREAKDOWN_TOL * self.norm_est:
            self._beta[j] = beta
            self.breakdown = True
            self._H[:, j + 1] = self._completion_vector(j + 1)
            return self
        self._beta[j] = beta
        self._H[:, j + 1] = hn / beta
        return self

    def _completion_vector(self, k):
        # any unit vector orthogonal to h_1..h_k keeps A G = H B valid when beta = 0
        m = self.shape[0]
        if k >= m:
            self.h_degenerate = True
            return np.zeros(m)
        Hk = self._H[:, :k]
        for i in range(m):
            e = np.zeros(m)
            e[i] = 1.0
            v = _reorth(e, Hk)
            nv = np.linalg.norm(v)
            if nv > 0.5:
                return v / nv
        self.h_degenerate = True
        return np.zeros(m)

    def run(self, t_max):
        t_max = min(int(t_max), self.capacity)
        while self.t < t_max and not self.breakdown:
            self.step()
        return self

    def dump(self, path):
        write_gkb(path, self.beta1, self.theta, self.betasub)

    def __repr__(self):
        return f"BidiagFactorization(shape={self.shape}, t={self.t}, breakdown={self.breakdown})"


def _reorth(v, Q):
    # two-pass classical Gram-Schmidt
    if Q.shape[1] == 0:
        return v
    v = v - Q @ (Q.T @ v)
    return v - Q @ (Q.T @ v)


def gkb_init(op, b, capacity=None, norm_est=None):
    if capacity is None:
        capacity = min(op.shape)
    return BidiagFactorization(op, b, capacity, norm_est=norm_est)


def gkb_step(state, op=None):
    if op is not None and op is not state.op:
        raise GKBError("gkb_step must use the operator the factorization was started with")
    return state.step()


def gkb_run(op, b, t_max, norm_est=None):
    m, n = op.shape
    if t_max > min(m, n):
        raise GKBError(f"t_max={t_max} exceeds min(m, n)={min(m, n)}")
    return gkb_init(op, b, capacity=t_max, norm_est=norm_est).run(t_max)


def projected_rhs(state, t=None):
    return state.projected_rhs(t)


def write_gkb(path, beta1, theta, betasub):
    """Binary dump: b'GKB1', int64 counts (t, t), float64 beta1, theta, betas (little-endian)."""
    theta = np.asarray(theta, dtype="<f8")
    betasub = np.asarray(betasub, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(b"GKB1")
        fh.write(struct.pack("<qq", theta.size, betasub.size))
        fh.write(struct.pack("<d", beta1))
        fh.write(theta.tobytes())
        fh.write(betasub.tobytes())


def read_gkb(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != b"GKB1":
        raise ValueError(f"{path}: not a GKB1 file")
    nt, nb = struct.unpack_from("<qq", data, 4)
    (beta1,) = struct.unpack_from("<d", data, 20)
    vals = np.frombuffer(data, dtype="<f8", offset=28)
    if vals.size != nt + nb:
        raise ValueError(f"{path}: truncated GKB1 payload")
    return beta1, vals[:nt].copy(), vals[nt:].copy()
