"""Synthetic test problems, noise model and error metrics.

The 1-D problems use independent row-sample and column-quadrature counts
(midpoint rules), so ``m != n`` is allowed. The 2-D problems are desk-scale
analogs: a separable Gaussian blur of a piecewise-constant image and a
parallel-beam projector for a disk phantom.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .operators import BlurOperator, DenseOperator, SparseOperator


@dataclass(frozen=True)
class ProblemInstance:
    op: object
    x_ex: np.ndarray
    b_ex: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def shape(self):
        return self.op.shape


@dataclass(frozen=True)
class NoisySample:
    b: np.ndarray
    eta: float
    seed: tuple
    c: int
    cov: np.ndarray


# ----------------------------------------------------------------- 1-D problems


def phillips_kernel(d):
    d = np.asarray(d, dtype=float)
    return np.where(np.abs(d) < 3.0, 1.0 + np.cos(np.pi * d / 3.0), 0.0)


def phillips_rhs(s):
    s = np.asarray(s, dtype=float)
    a = np.abs(s)
    val = (6.0 - a) * (1.0 + 0.5 * np.cos(np.pi * s / 3.0)) + 9.0 / (2.0 * np.pi) * np.sin(
        np.pi * a / 3.0
    )
    return np.where(a < 6.0, val, 0.0)


def _midpoints(a, b, k):
    return a + (b - a) * (np.arange(k) + 0.5) / k


def phillips(m, n):
    if m < 8 or n < 8:
        raise ValueError("phillips needs m, n >= 8")
    s = _midpoints(-6.0, 6.0, m)
    t = _midpoints(-6.0, 6.0, n)
    A = (12.0 / n) * phillips_kernel(s[:, None] - t[None, :])
    return ProblemInstance(
        DenseOperator(A),
        phillips_kernel(t),
        phillips_rhs(s),
        {"name": "phillips", "m": m, "n": n},
    )


def gravity_kernel(s, t, d):
    return d * (d**2 + (s - t) ** 2) ** -1.5


def gravity(m, n, d=0.75):
    if d <= 0:
        raise ValueError("gravity depth d must be positive")
    s = _midpoints(0.0, 1.0, m)
    t = _midpoints(0.0, 1.0, n)
    A = gravity_kernel(s[:, None], t[None, :], d) / n
    x = np.sin(np.pi * t) + 0.5 * np.sin(2.0 * np.pi * t)
    return ProblemInstance(DenseOperator(A), x, A @ x, {"name": "gravity", "m": m, "n": n, "d": d})


# ----------------------------------------------------------------- 2-D problems


def blocks_phantom(N):
    """Piecewise-constant image on a zero background with sharp edges."""
    img = np.zeros((N, N))
    r = (np.arange(N) + 0.5) / N
    R, C = np.meshgrid(r, r, indexing="ij")
    img[(R > 0.12) & (R < 0.40) & (C > 0.10) & (C < 0.48)] = 1.0
    img[(R > 0.20) & (R < 0.32) & (C > 0.20) & (C < 0.38)] = 0.4
    img[(R - 0.68) ** 2 + (C - 0.30) ** 2 < 0.15**2] = 0.7
    img[(R > 0.55) & (R < 0.88) & (C > 0.62) & (C < 0.72)] = 0.9
    img[(R > 0.15) & (R < 0.22) & (C > 0.60) & (C < 0.90)] = 0.6
    return img


def blur2d(N=64, psf_sigma=1.5, psf_halfwidth=5):
    if N < 16:
        raise ValueError("blur2d needs N >= 16")
    op = BlurOperator(N, psf_sigma, psf_halfwidth)
    x = blocks_phantom(N).ravel()
    return ProblemInstance(
        op,
        x,
        op.apply(x),
        {"name": "blur2d", "N": N, "psf_sigma": psf_sigma, "psf_halfwidth": psf_halfwidth},
    )


def disks_phantom(N):
    c = (np.arange(N) + 0.5) - N / 2.0
    Y, X = np.meshgrid(c, c, indexing="ij")
    rr = np.hypot(X, Y)
    img = np.zeros((N, N))
    img[rr < 0.45 * N] = 0.5
    img[rr < 0.30 * N] = 1.0
    img[rr < 0.12 * N] = 0.25
    return img


def _ray_pixels(N, theta, s):
    """Pixel indices and intersection lengths of one ray (Siddon's method).

    Image occupies [-N/2, N/2]^2 with unit pixels; row index follows y and
    column index follows x. The ray is {s e_s + lam e_d} with
    e_s = (cos theta, sin theta) and e_d = (-sin theta, cos theta).
    """
    ct, st = math.cos(theta), math.sin(theta)
    px, py = s * ct, s * st
    dx, dy = -st, ct
    half = N / 2.0
    lo, hi = -np.inf, np.inf
    crossings = []
    for p, dcomp in ((px, dx), (py, dy)):
        if abs(dcomp) < 1e-12:
            if not -half < p < half:
                return np.empty(0, int), np.empty(0)
            continue
        l1, l2 = (-half - p) / dcomp, (half - p) / dcomp
        lo, hi = max(lo, min(l1, l2)), min(hi, max(l1, l2))
        crossings.append((np.arange(N + 1) - half - p) / dcomp)
    if not lo < hi:
        return np.empty(0, int), np.empty(0)
    lam = np.concatenate([np.array([lo, hi])] + crossings)
    lam = np.unique(lam[(lam >= lo) & (lam <= hi)])
    seg = np.diff(lam)
    mid = 0.5 * (lam[1:] + lam[:-1])
    col = np.floor(px + mid * dx + half).astype(int)
    row = np.floor(py + mid * dy + half).astype(int)
    ok = (seg > 1e-13) & (col >= 0) & (col < N) & (row >= 0) & (row < N)
    return row[ok] * N + col[ok], seg[ok]


def radon_matrix(N, angles, n_detectors, spacing=1.0):
    offsets = (np.arange(n_detectors) - (n_detectors - 1) / 2.0) * spacing
    rows, cols, vals = [], [], []
    r = 0
    for th in angles:
        for s in offsets:
            idx, seg = _ray_pixels(N, th, s)
            rows.append(np.full(idx.size, r))
            cols.append(idx)
            vals.append(seg)
            r += 1
    A = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(len(angles) * n_detectors, N * N),
    )
    return A


def tomo(N=32, n_angles=15, n_detectors=None):
    if n_angles < 1:
        raise ValueError("tomo needs at least one angle")
    if n_detectors is None:
        n_detectors = int(math.ceil(N * math.sqrt(2.0)))
        n_detectors += (n_detectors - N) % 2
    angles = np.pi * np.arange(n_angles) / n_angles
    op = SparseOperator(radon_matrix(N, angles, n_detectors))
    x = disks_phantom(N).ravel()
    return ProblemInstance(
        op,
        x,
        op.apply(x),
        {"name": "tomo", "N": N, "n_angles": n_angles, "n_detectors": n_detectors},
    )


# ------------------------------------------------------------------- noise, metrics


def sample_rng(base_seed, c):
    return np.random.default_rng(np.random.SeedSequence(int(base_seed), spawn_key=(int(c),)))


def noisy_sample(pi, eta, base_seed, c, profile=None):
    """Sample c of b^c = b_ex + eta ||b_ex|| eps^c from its own RNG substream.

    ``profile`` optionally scales the per-component standard deviation
    (colored noise); the covariance stored with the sample matches.
    """
    if eta < 0:
        raise ValueError("noise level must be nonnegative")
    b_ex = pi.b_ex
    m = b_ex.size
    scale = eta * np.linalg.norm(b_ex)
    std = np.full(m, scale) if profile is None else scale * np.asarray(profile, dtype=float)
    cov = std**2 if eta > 0 else np.ones(m)
    eps = sample_rng(base_seed, c).standard_normal(m)
    b = b_ex + std * eps if eta > 0 else b_ex.copy()
    return NoisySample(b, float(eta), (int(base_seed), int(c)), int(c), cov)


def add_noise(pi, eta, base_seed, count, profile=None):
    """Samples c = 0..count-1; see ``noisy_sample``."""
    return [noisy_sample(pi, eta, base_seed, c, profile) for c in range(int(count))]


def eta_from_nu(nu, m):
    """Noise level eta for a relative noise norm nu = eta sqrt(m)."""
    return nu / math.sqrt(m)


def bsnr(b_ex, b):
    noise = np.linalg.norm(np.asarray(b) - np.asarray(b_ex))
    if noise == 0:
        return math.inf
    return 20.0 * math.log10(np.linalg.norm(b_ex) / noise)


def relative_error(x, x_ex):
    nx = np.linalg.norm(x_ex)
    if nx == 0:
        raise ValueError("relative error undefined for a zero exact solution")
    return float(np.linalg.norm(np.asarray(x) - np.asarray(x_ex)) / nx)


# ------------------------------------------------------------------------- export


def write_dense(path, M):
    """b'DNS1', int64 rows, int64 cols, row-major little-endian float64."""
    M = np.asarray(M, dtype="<f8")
    if M.ndim != 2:
        raise ValueError("write_dense expects a 2-D array")
    with open(path, "wb") as fh:
        fh.write(b"DNS1")
        fh.write(struct.pack("<qq", *M.shape))
        fh.write(np.ascontiguousarray(M).tobytes())


def read_dense(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != b"DNS1":
        raise ValueError(f"{path}: not a DNS1 file")
    m, n = struct.unpack_from("<qq", data, 4)
    M = np.frombuffer(data, dtype="<f8", offset=20)
    if M.size != m * n:
        raise ValueError(f"{path}: payload does not match header {m}x{n}")
    return M.reshape(m, n).copy()


def write_pgm(path, img):
    img = np.asarray(img, dtype=float)
    lo, hi = float(img.min()), float(img.max())
    scaled = np.zeros_like(img) if hi == lo else (img - lo) / (hi - lo)
    pix = np.round(255 * scaled).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (img.shape[1], img.shape[0]))
        fh.write(pix.tobytes())


def export_problem(pi, outdir, cap=10_000_000):
    from .operators import to_dense

    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    write_dense(outdir / "A.dns", to_dense(pi.op, cap))
    write_dense(outdir / "x_ex.dns", pi.x_ex[:, None])
    write_dense(outdir / "b_ex.dns", pi.b_ex[:, None])
    if "N" in pi.meta:
        N = pi.meta["N"]
        write_pgm(outdir / "phantom.pgm", pi.x_ex.reshape(N, N))
    (outdir / "meta.json").write_text(json.dumps(pi.meta, indent=2, sort_keys=True) + "\n")


PROBLEMS = {"phillips": phillips, "gravity": gravity, "blur2d": blur2d, "tomo": tomo}


def make_problem(name, **params):
    try:
        factory = PROBLEMS[name]
    except KeyError:
        raise ValueError(f"unknown problem {name!r}; choose from {sorted(PROBLEMS)}") from None
    return factory(**params)
