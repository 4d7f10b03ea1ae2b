"""Matrix-free linear operators.

Every operator exposes ``shape``, ``apply`` (forward) and ``apply_transpose``.
Operators never mutate after construction; wrappers (whitening, column
scaling, column subsets) build new objects around an existing operator.
Both products also accept 2-D inputs whose columns are treated as separate
vectors, which keeps densification and batched back-projection cheap.
"""

from __future__ import annotations

import numpy as np

DENSE_CAP = 10_000_000


class LinearOperator:
    """Base class; subclasses implement ``_matvec`` and ``_rmatvec``."""

    def __init__(self, shape):
        m, n = int(shape[0]), int(shape[1])
        if m < 1 or n < 1:
            raise ValueError(f"operator dimensions must be positive, got {shape}")
        self._shape = (m, n)

    @property
    def shape(self):
        return self._shape

    @property
    def rows(self):
        return self._shape[0]

    @property
    def cols(self):
        return self._shape[1]

    def apply(self, v):
        v = _check_input(v, self.cols, "apply")
        return self._matvec(v)

    def apply_transpose(self, u):
        u = _check_input(u, self.rows, "apply_transpose")
        return self._rmatvec(u)

    def __matmul__(self, v):
        return self.apply(v)

    @property
    def T(self):
        return _Transposed(self)

    def _matvec(self, v):
        raise NotImplementedError

    def _rmatvec(self, u):
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}(shape={self.shape})"


def _check_input(v, size, where):
    v = np.asarray(v, dtype=float)
    if v.ndim not in (1, 2) or v.shape[0] != size:
        raise ValueError(f"{where}: expected leading dimension {size}, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{where}: input contains non-finite values")
    return v


class _Transposed(LinearOperator):
    def __init__(self, op):
        super().__init__((op.cols, op.rows))
        self.op = op

    def _matvec(self, v):
        return self.op._rmatvec(v)

    def _rmatvec(self, u):
        return self.op._matvec(u)


class IdentityOperator(LinearOperator):
    def __init__(self, n):
        super().__init__((n, n))

    def _matvec(self, v):
        return v.copy()

    def _rmatvec(self, u):
        return u.copy()


class DenseOperator(LinearOperator):
    def __init__(self, matrix):
        matrix = np.array(matrix, dtype=float)
        if matrix.ndim != 2:
            raise ValueError("DenseOperator needs a 2-D array")
        if not np.all(np.isfinite(matrix)):
            raise ValueError("DenseOperator matrix contains non-finite values")
        matrix.setflags(write=False)
        super().__init__(matrix.shape)
        self.matrix = matrix

    def _matvec(self, v):
        return self.matrix @ v

    def _rmatvec(self, u):
        return self.matrix.T @ u


class SparseOperator(LinearOperator):
    """Wraps a scipy.sparse matrix (used internally by the tomography projector)."""

    def __init__(self, matrix):
        matrix = matrix.tocsr()
        super().__init__(matrix.shape)
        self.matrix = matrix
        self._mt = matrix.T.tocsr()

    def _matvec(self, v):
        return self.matrix @ v

    def _rmatvec(self, u):
        return self._mt @ u


class RowScaledOperator(LinearOperator):
    """v -> w * (A v), the row weighting used for noise whitening."""

    def __init__(self, op, weights):
        weights = np.array(weights, dtype=float)
        if weights.shape != (op.rows,):
            raise ValueError(f"row weights must have length {op.rows}")
        weights.setflags(write=False)
        super().__init__(op.shape)
        self.op = op
        self.weights = weights

    def _matvec(self, v):
        return _scale_rows(self.weights, self.op._matvec(v))

    def _rmatvec(self, u):
        return self.op._rmatvec(_scale_rows(self.weights, u))


class ColumnScaledOperator(LinearOperator):
    """v -> A (d * v); transpose u -> d * (A^T u)."""

    def __init__(self, op, d):
        d = np.array(d, dtype=float)
        if d.shape != (op.cols,):
            raise ValueError(f"column scaling must have length {op.cols}, got {d.shape}")
        if not np.all(np.isfinite(d)):
            raise ValueError("column scaling contains non-finite values")
        d.setflags(write=False)
        super().__init__(op.shape)
        self.op = op
        self.d = d

    def _matvec(self, v):
        return self.op._matvec(_scale_rows(self.d, v))

    def _rmatvec(self, u):
        return _scale_rows(self.d, self.op._rmatvec(u))


class ColumnSubsetOperator(LinearOperator):
    """Keeps only the active columns; acts on the compressed coordinate vector."""

    def __init__(self, op, mask):
        mask = np.array(mask, dtype=bool)
        if mask.shape != (op.cols,):
            raise ValueError(f"column mask must have length {op.cols}")
        idx = np.flatnonzero(mask)
        if idx.size == 0:
            raise ValueError("column mask has no active columns")
        idx.setflags(write=False)
        mask.setflags(write=False)
        super().__init__((op.rows, idx.size))
        self.op = op
        self.mask = mask
        self.index = idx

    def scatter(self, z):
        """Compressed coordinates -> full-length vector with zeros at frozen entries."""
        z = np.asarray(z, dtype=float)
        out = np.zeros((self.op.cols,) + z.shape[1:])
        out[self.index] = z
        return out

    def gather(self, v):
        return np.asarray(v, dtype=float)[self.index]

    def _matvec(self, v):
        return self.op._matvec(self.scatter(v))

    def _rmatvec(self, u):
        return self.op._rmatvec(u)[self.index]


def _scale_rows(w, v):
    return w * v if v.ndim == 1 else w[:, None] * v


def apply(op, v):
    return op.apply(v)


def apply_transpose(op, u):
    return op.apply_transpose(u)


def whiten(op, b, cov):
    """Scale row i of the operator and b_i by 1/s_i, where cov holds s_i**2."""
    cov = np.asarray(cov, dtype=float)
    b = np.asarray(b, dtype=float)
    if cov.shape != (op.rows,) or b.shape != (op.rows,):
        raise ValueError("covariance and data must match the operator row count")
    if not np.all(np.isfinite(cov)) or np.any(cov <= 0):
        raise ValueError("covariance entries must be finite and strictly positive")
    if np.all(cov == 1.0):
        return op, b.copy()
    w = 1.0 / np.sqrt(cov)
    return RowScaledOperator(op, w), w * b


def column_scaled(op, d):
    d = np.asarray(d, dtype=float)
    if d.shape == (op.cols,) and np.all(d == 1.0):
        return op
    return ColumnScaledOperator(op, d)


def column_subset(op, mask):
    mask = np.asarray(mask, dtype=bool)
    if mask.shape == (op.cols,) and mask.all():
        return op
    return ColumnSubsetOperator(op, mask)


def to_dense(op, cap=DENSE_CAP):
    m, n = op.shape
    if m * n > cap:
        raise ValueError(f"densifying a {m}x{n} operator exceeds the cap of {cap} entries")
    if isinstance(op, DenseOperator):
        return np.array(op.matrix)
    return op._matvec(np.eye(n))


def norm_estimate(op, iters=10, seed=0):
    """Power-method estimate of the spectral norm (lower bound, usually tight)."""
    v = np.random.default_rng(seed).standard_normal(op.cols)
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(iters):
        u = op._matvec(v)
        w = op._rmatvec(u)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return float(np.linalg.norm(u))
        est = np.sqrt(nw)
        v = w / nw
    return float(est)


def gaussian_stencil(sigma, halfwidth):
    """Sampled 1-D Gaussian on [-halfwidth, halfwidth], normalized to unit sum."""
    k = np.arange(-halfwidth, halfwidth + 1, dtype=float)
    if sigma <= 0:
        return (k == 0).astype(float)
    g = np.exp(-0.5 * (k / sigma) ** 2)
    return g / g.sum()


def banded_convolution(stencil, n):
    """n x n Toeplitz matrix of a centred stencil with zero boundary conditions."""
    h = (len(stencil) - 1) // 2
    K = np.zeros((n, n))
    for off, g in zip(range(-h, h + 1), stencil):
        K += g * np.eye(n, k=-off)
    return K


class BlurOperator(LinearOperator):
    """Separable 2-D convolution X -> K_r X K_c^T on row-major flattened N x N images."""

    def __init__(self, N, sigma, halfwidth):
        if halfwidth >= N:
            raise ValueError(f"PSF halfwidth {halfwidth} must be smaller than N={N}")
        super().__init__((N * N, N * N))
        self.N = N
        self.stencil = gaussian_stencil(sigma, halfwidth)
        K = banded_convolution(self.stencil, N)
        K.setflags(write=False)
        self.K = K

    def _blur(self, v, K):
        N = self.N
        X = v.reshape(N, N, -1)
        Y = np.einsum("ij,jkb,lk->ilb", K, X, K)
        return Y.reshape(v.shape)

    def _matvec(self, v):
        return self._blur(v, self.K)

    def _rmatvec(self, u):
        return self._blur(u, self.K.T)
