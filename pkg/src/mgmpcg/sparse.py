"""Sparse and small dense linear algebra kernels.

Everything in the solver stack goes through :class:`CsrMatrix`. Matrix-vector
and matrix-block products run in numba-compiled row loops; sparse-sparse
products (only needed while building hierarchies) are delegated to scipy.

A *direction block* is a plain ``(n, k)`` float array whose columns are search
directions; no wrapper type is used for it.
"""

from __future__ import annotations

import numba as nb
import numpy as np
import scipy.io
import scipy.sparse as sp

__all__ = [
    "CsrMatrix",
    "GramFactor",
    "IndefiniteOperatorError",
    "dot",
    "axpy",
    "norm2",
    "spmv",
    "transpose",
    "gram_solve",
    "galerkin_triple_product",
    "read_matrix_market",
    "write_matrix_market",
]

_numba_setting = {"nogil": True, "cache": True}

SYMMETRY_RTOL = 1e-12


class IndefiniteOperatorError(ArithmeticError):
    """A curvature ``p^T A p`` (or a Gram eigenvalue) came out non-positive."""


@nb.njit(**_numba_setting)
def _csr_matvec(indptr, indices, data, x, y):
    for i in range(indptr.size - 1):
        acc = 0.0
        for k in range(indptr[i], indptr[i + 1]):
            acc += data[k] * x[indices[k]]
        y[i] = acc


@nb.njit(**_numba_setting)
def _csr_matblock(indptr, indices, data, X, Y):
    ncol = X.shape[1]
    for i in range(indptr.size - 1):
        for c in range(ncol):
            Y[i, c] = 0.0
        for k in range(indptr[i], indptr[i + 1]):
            a = data[k]
            j = indices[k]
            for c in range(ncol):
                Y[i, c] += a * X[j, c]


class CsrMatrix:
    """Immutable compressed-sparse-row matrix.

    Parameters
    ----------
    nrows, ncols : int
        Shape of the matrix.
    row_offsets : array_like of int
        Row pointer array of length ``nrows + 1``.
    col_indices : array_like of int
        Column index of each stored entry; strictly increasing within a row.
    values : array_like of float
        Stored entries.
    symmetric : bool
        Set when the matrix is known to be symmetric. Checked on construction.
    """

    __slots__ = ("nrows", "ncols", "row_offsets", "col_indices", "values", "symmetric")

    def __init__(self, nrows, ncols, row_offsets, col_indices, values, symmetric=False):
        row_offsets = np.ascontiguousarray(row_offsets, dtype=np.int64)
        col_indices = np.ascontiguousarray(col_indices, dtype=np.int64)
        values = np.ascontiguousarray(values, dtype=np.float64)
        nrows, ncols = int(nrows), int(ncols)

        if row_offsets.shape != (nrows + 1,):
            raise ValueError(f"row_offsets must have length {nrows + 1}, got {row_offsets.size}")
        if row_offsets[0] != 0 or np.any(np.diff(row_offsets) < 0):
            raise ValueError("row_offsets must start at 0 and be non-decreasing")
        if not (row_offsets[-1] == col_indices.size == values.size):
            raise ValueError("row_offsets[-1], len(col_indices) and len(values) disagree")
        if col_indices.size:
            if col_indices.min() < 0 or col_indices.max() >= ncols:
                raise ValueError("column index out of range")
            # Strictly increasing within rows: every non-row-start step must go up.
            step = np.diff(col_indices)
            row_start = np.zeros(col_indices.size, dtype=bool)
            row_start[row_offsets[:-1][row_offsets[:-1] < col_indices.size]] = True
            if np.any(step[~row_start[1:]] <= 0):
                raise ValueError("column indices must be strictly increasing within each row")

        for arr in (row_offsets, col_indices, values):
            arr.flags.writeable = False
        self.nrows = nrows
        self.ncols = ncols
        self.row_offsets = row_offsets
        self.col_indices = col_indices
        self.values = values
        self.symmetric = bool(symmetric)
        if self.symmetric and not self.is_symmetric():
            raise ValueError("matrix flagged symmetric is not symmetric")

    # -- construction -----------------------------------------------------

    @classmethod
    def from_coo(cls, rows, cols, vals, shape, symmetric=False):
        """Build from triplets; duplicate entries are summed."""
        coo = sp.coo_matrix(
            (np.asarray(vals, dtype=float), (np.asarray(rows), np.asarray(cols))), shape=shape
        )
        return cls.from_scipy(coo, symmetric=symmetric)

    @classmethod
    def from_scipy(cls, mat, symmetric=False):
        csr = sp.csr_matrix(mat, dtype=np.float64, copy=True)
        csr.sum_duplicates()
        csr.sort_indices()
        return cls(csr.shape[0], csr.shape[1], csr.indptr, csr.indices, csr.data, symmetric)

    @classmethod
    def from_dense(cls, dense, symmetric=False):
        dense = np.asarray(dense, dtype=float)
        return cls.from_scipy(sp.csr_matrix(dense), symmetric=symmetric)

    @classmethod
    def identity(cls, n):
        idx = np.arange(n)
        return cls(n, n, np.arange(n + 1), idx, np.ones(n), symmetric=True)

    # -- views --------------------------------------------------------------

    @property
    def shape(self):
        return (self.nrows, self.ncols)

    @property
    def nnz(self):
        return int(self.values.size)

    def row_indices(self):
        """Row index of every stored entry."""
        return np.repeat(np.arange(self.nrows), np.diff(self.row_offsets))

    def diagonal(self):
        diag = np.zeros(min(self.nrows, self.ncols))
        rows = self.row_indices()
        on = rows == self.col_indices
        diag[rows[on]] = self.values[on]
        return diag

    def to_scipy(self):
        return sp.csr_matrix(
            (self.values.copy(), self.col_indices.copy(), self.row_offsets.copy()),
            shape=self.shape,
        )

    def to_dense(self):
        out = np.zeros(self.shape)
        out[self.row_indices(), self.col_indices] = self.values
        return out

    def max_abs(self):
        return float(np.abs(self.values).max()) if self.nnz else 0.0

    def is_symmetric(self, rtol=SYMMETRY_RTOL):
        if self.nrows != self.ncols:
            return False
        a = self.to_scipy()
        d = (a - a.T).tocoo()
        d.eliminate_zeros()
        if d.nnz == 0:
            return True
        mag = np.abs(np.asarray(a[d.row, d.col]).ravel())
        return bool(np.all(np.abs(d.data) <= rtol * np.maximum(1.0, mag)))

    def scaled(self, factor):
        """Return ``factor * self`` sharing the sparsity pattern."""
        return CsrMatrix(
            self.nrows, self.ncols, self.row_offsets, self.col_indices,
            factor * self.values, self.symmetric,
        )

    def __matmul__(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            return spmv(self, x)
        if x.ndim == 2:
            if x.shape[0] != self.ncols:
                raise ValueError(f"dimension mismatch: {self.shape} @ {x.shape}")
            X = np.ascontiguousarray(x)
            Y = np.empty((self.nrows, X.shape[1]))
            _csr_matblock(self.row_offsets, self.col_indices, self.values, X, Y)
            return Y
        raise ValueError("operand must be a vector or a 2-D block")

    def __repr__(self):
        sym = ", symmetric" if self.symmetric else ""
        return f"CsrMatrix({self.nrows}x{self.ncols}, nnz={self.nnz}{sym})"


# -- vector plumbing ----------------------------------------------------------

def dot(x, y):
    return float(np.dot(x, y))


def axpy(a, x, y):
    """Return ``a * x + y``."""
    return a * np.asarray(x) + np.asarray(y)


def norm2(x):
    return float(np.linalg.norm(x))


# -- operations ---------------------------------------------------------------

def spmv(A, x):
    """Compute ``A @ x`` row by row."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size != A.ncols:
        raise ValueError(f"dimension mismatch: matrix has {A.ncols} columns, vector has {x.size}")
    y = np.empty(A.nrows)
    _csr_matvec(A.row_offsets, A.col_indices, A.values, x, y)
    return y


def transpose(A):
    """Transpose by a stable counting sort on column indices."""
    rows = A.row_indices()
    # Stable: rows stay increasing inside each output row.
    order = np.argsort(A.col_indices, kind="stable")
    counts = np.bincount(A.col_indices, minlength=A.ncols)
    offsets = np.concatenate(([0], np.cumsum(counts)))
    out = CsrMatrix(A.ncols, A.nrows, offsets, rows[order], A.values[order])
    out.symmetric = A.symmetric
    return out


def galerkin_triple_product(R, A, P):
    """Coarse operator ``R @ A @ P`` with ``R`` the transpose of ``P``.

    The product is symmetrized exactly so downstream smoothers see a
    bitwise-symmetric operator.
    """
    if R.ncols != A.nrows or A.ncols != P.nrows or R.nrows != P.ncols:
        raise ValueError(
            f"dimension mismatch in R·A·P: {R.shape}, {A.shape}, {P.shape}"
        )
    Rs, Ps = R.to_scipy(), transpose(P).to_scipy()
    if (Rs - Ps).nnz and abs(Rs - Ps).max() > 1e-12 * max(1.0, P.max_abs()):
        raise ValueError("R must equal the transpose of P")
    C = (Rs @ A.to_scipy() @ P.to_scipy()).tocsr()
    C = 0.5 * (C + C.T)
    return CsrMatrix.from_scipy(C, symmetric=True)


class GramFactor:
    """Pseudoinverse of a small symmetric positive semi-definite matrix.

    The matrix is eigendecomposed once; eigenvalues at or below
    ``drop_tol * lambda_max`` are treated as zero. Clearly negative eigenvalues
    (below ``-neg_tol * lambda_max``) mean the operator behind the Gram matrix
    is not positive definite and raise.

    Attributes
    ----------
    rank : int
        Number of retained eigenpairs.
    rank_deficient : bool
        True when at least one eigenvalue was dropped.
    """

    def __init__(self, G, drop_tol=1e-12, neg_tol=1e-8):
        G = np.atleast_2d(np.asarray(G, dtype=float))
        if G.shape[0] != G.shape[1] or G.shape[0] < 1:
            raise ValueError(f"Gram matrix must be square and non-empty, got {G.shape}")
        if drop_tol < 0:
            raise ValueError("drop_tol must be non-negative")
        scale = max(np.abs(G).max(), np.finfo(float).tiny)
        if np.abs(G - G.T).max() > 1e-10 * scale:
            raise ValueError("Gram matrix is not symmetric")
        lam, vec = np.linalg.eigh(0.5 * (G + G.T))
        lam_max = lam[-1] if lam.size else 0.0
        if lam_max > 0 and lam[0] < -neg_tol * lam_max:
            raise IndefiniteOperatorError(
                f"Gram matrix has eigenvalue {lam[0]:.3e} (largest {lam_max:.3e})"
            )
        keep = lam > drop_tol * lam_max if lam_max > 0 else np.zeros(lam.size, dtype=bool)
        self.dim = G.shape[0]
        self.eigenvalues = lam
        self.rank = int(keep.sum())
        self.rank_deficient = self.rank < self.dim
        self._vec = vec[:, keep]
        self._inv = 1.0 / lam[keep]

    @property
    def basis(self):
        """Orthonormal eigenvectors of the retained eigenvalues, as columns."""
        return self._vec

    def solve(self, rhs):
        rhs = np.asarray(rhs, dtype=float)
        if rhs.shape[0] != self.dim:
            raise ValueError(f"rhs has {rhs.shape[0]} rows, Gram matrix is {self.dim}x{self.dim}")
        coef = self._vec.T @ rhs
        if rhs.ndim == 1:
            return self._vec @ (self._inv * coef)
        return self._vec @ (self._inv[:, None] * coef)


def gram_solve(G, rhs, drop_tol=1e-12):
    """Minimum-norm solution of ``G @ alpha = rhs``.

    Returns
    -------
    alpha : ndarray
    rank_deficient : bool
    """
    factor = GramFactor(G, drop_tol=drop_tol)
    return factor.solve(rhs), factor.rank_deficient


# -- MatrixMarket ---------------------------------------------------------------

def write_matrix_market(path, A):
    """Write ``A`` in coordinate format (symmetric header when flagged)."""
    mat = A.to_scipy().tocoo()
    scipy.io.mmwrite(str(path), mat, field="real", symmetry="symmetric" if A.symmetric else "general")


def read_matrix_market(path):
    mat = scipy.io.mmread(str(path))
    with open(path) as fh:
        symmetric = "symmetric" in fh.readline().lower()
    return CsrMatrix.from_scipy(sp.csr_matrix(mat), symmetric=symmetric)
