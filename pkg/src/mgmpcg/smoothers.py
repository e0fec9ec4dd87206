"""Level smoothers and the coarsest-level solve.

``SsorSmoother`` performs ``nu`` symmetric Gauss-Seidel/SOR sweeps, each a
forward sweep followed by a backward sweep. Started from a zero guess the
result is a fixed symmetric linear operator applied to the right-hand side,
which is what makes it usable inside CG-type methods.
"""

from __future__ import annotations

import numba as nb
import numpy as np
import scipy.linalg
import scipy.sparse.linalg as spla

__all__ = [
    "SsorSmoother",
    "CoarseSolver",
    "ssor_apply",
    "smoother_as_operator_symmetry_check",
    "coarse_solve",
]

# Above this size the coarse solve switches from dense Cholesky to sparse LU.
DENSE_COARSE_LIMIT = 4000


@nb.njit(nogil=True, cache=True)
def _ssor_sweeps(indptr, indices, data, diag, rhs, x, omega, nu):
    n = rhs.size
    for _ in range(nu):
        for i in range(n):
            s = rhs[i]
            for k in range(indptr[i], indptr[i + 1]):
                j = indices[k]
                if j != i:
                    s -= data[k] * x[j]
            x[i] = (1.0 - omega) * x[i] + omega * s / diag[i]
        for i in range(n - 1, -1, -1):
            s = rhs[i]
            for k in range(indptr[i], indptr[i + 1]):
                j = indices[k]
                if j != i:
                    s -= data[k] * x[j]
            x[i] = (1.0 - omega) * x[i] + omega * s / diag[i]


class SsorSmoother:
    """``nu`` SSOR sweeps with relaxation ``omega`` on the operator ``A``.

    Parameters
    ----------
    A : CsrMatrix
        Square level operator with a nonzero diagonal.
    omega : float
        Relaxation factor in (0, 2).
    nu : int
        Number of symmetric (forward + backward) sweeps.
    """

    def __init__(self, A, omega=1.0, nu=1):
        if not 0.0 < omega < 2.0:
            raise ValueError(f"SSOR needs 0 < omega < 2, got {omega}")
        if int(nu) < 1:
            raise ValueError(f"need at least one sweep, got nu={nu}")
        if A.nrows != A.ncols:
            raise ValueError("smoother needs a square operator")
        diag = A.diagonal()
        if np.any(diag == 0.0):
            raise ValueError(f"zero diagonal entry at row {int(np.flatnonzero(diag == 0.0)[0])}")
        self.A = A
        self.omega = float(omega)
        self.nu = int(nu)
        self._diag = diag

    @property
    def n(self):
        return self.A.nrows

    def smooth(self, rhs, x0=None, nu=None):
        """Run sweeps on ``A c = rhs`` from ``x0`` (zero when omitted)."""
        rhs = np.ascontiguousarray(rhs, dtype=np.float64)
        if rhs.shape != (self.n,):
            raise ValueError(f"rhs has shape {rhs.shape}, level has {self.n} unknowns")
        x = np.zeros(self.n) if x0 is None else np.array(x0, dtype=np.float64)
        A = self.A
        _ssor_sweeps(
            A.row_offsets, A.col_indices, A.values, self._diag, rhs, x,
            self.omega, self.nu if nu is None else int(nu),
        )
        return x

    def __call__(self, rhs):
        return self.smooth(rhs)


class CoarseSolver:
    """Exact solve with the coarsest operator.

    Small operators are factored densely by Cholesky, which doubles as the
    positive-definiteness check; large ones fall back to sparse LU.
    """

    def __init__(self, A):
        if A.nrows != A.ncols:
            raise ValueError("coarse solver needs a square operator")
        self.n = A.nrows
        if self.n <= DENSE_COARSE_LIMIT:
            try:
                self._chol = scipy.linalg.cho_factor(A.to_dense(), lower=True)
            except np.linalg.LinAlgError as err:
                raise ValueError(f"coarse operator is not SPD: {err}") from None
            self._lu = None
        else:
            self._chol = None
            self._lu = spla.splu(A.to_scipy().tocsc())

    def solve(self, rhs):
        rhs = np.asarray(rhs, dtype=float)
        if rhs.shape[0] != self.n:
            raise ValueError(f"rhs has {rhs.shape[0]} rows, coarse operator has {self.n}")
        if self._chol is not None:
            return scipy.linalg.cho_solve(self._chol, rhs)
        return self._lu.solve(rhs)

    def __call__(self, rhs):
        return self.solve(rhs)


def ssor_apply(s, rhs):
    """``nu`` SSOR sweeps from a zero initial guess."""
    return s.smooth(rhs)


def smoother_as_operator_symmetry_check(s, u, v):
    """Both sides of ``u^T S v = v^T S u`` for the zero-guess smoother ``S``."""
    return float(np.dot(u, s.smooth(v))), float(np.dot(v, s.smooth(u)))


def coarse_solve(c, rhs):
    return c.solve(rhs)
