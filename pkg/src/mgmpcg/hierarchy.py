"""Multilevel hierarchies: operators, transfers and their composites.

Levels are indexed ``0`` (coarsest) to ``L`` (finest, the system matrix).
Every level stores the composite prolongation to the finest level
``P_to_fine`` (``n_L x n_l``) and its transpose, plus the two-grid
prolongation ``P_to_next`` from level ``l`` to ``l + 1`` used by the
V-cycle. Coarse operators are Galerkin products with the composite
transfers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numba as nb
import numpy as np
import scipy.sparse as sp

from .fem import StructuredGrid
from .sparse import CsrMatrix, galerkin_triple_product, transpose

__all__ = [
    "Level",
    "LevelHierarchy",
    "bilinear_prolongation",
    "build_geometric_hierarchy",
    "build_aggregation_hierarchy",
    "decoupled_rows",
    "strength_graph",
    "aggregate",
    "tentative_prolongation",
]


@dataclass(frozen=True)
class Level:
    index: int
    A: CsrMatrix
    P_to_fine: CsrMatrix
    R_from_fine: CsrMatrix
    P_to_next: Optional[CsrMatrix] = None
    grid: Optional[StructuredGrid] = None

    @property
    def n(self):
        return self.A.nrows


@dataclass(frozen=True)
class LevelHierarchy:
    levels: tuple
    kind: str = "geometric"
    no_coarsening: bool = False

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(self.levels))
        sizes = [lvl.n for lvl in self.levels]
        if any(a >= b for a, b in zip(sizes, sizes[1:])):
            raise ValueError(f"level sizes must strictly increase towards the finest level: {sizes}")

    def __len__(self):
        return len(self.levels)

    def __getitem__(self, i):
        return self.levels[i]

    def __iter__(self):
        return iter(self.levels)

    @property
    def L(self):
        """Index of the finest level."""
        return len(self.levels) - 1

    @property
    def finest(self):
        return self.levels[-1]

    def summary(self):
        nnz_fine = self.finest.A.nnz
        return {
            "kind": self.kind,
            "no_coarsening": self.no_coarsening,
            "levels": [
                {"level": lvl.index, "n": lvl.n, "nnz": lvl.A.nnz} for lvl in self.levels
            ],
            "operator_complexity": sum(lvl.A.nnz for lvl in self.levels) / nnz_fine,
        }

    def write_summary(self, path):
        Path(path).write_text(json.dumps(self.summary(), indent=2))


def _interp_1d(n_coarse):
    """1D linear interpolation from ``n_coarse`` to ``2 n_coarse`` intervals."""
    nf = 2 * n_coarse + 1
    rows, cols, vals = [], [], []
    for I in range(nf):
        if I % 2 == 0:
            rows.append(I), cols.append(I // 2), vals.append(1.0)
        else:
            rows += [I, I]
            cols += [(I - 1) // 2, (I + 1) // 2]
            vals += [0.5, 0.5]
    return sp.csr_matrix((vals, (rows, cols)), shape=(nf, n_coarse + 1))


def bilinear_prolongation(coarse, fine):
    """Nodal bilinear interpolation from ``coarse`` to its uniform refinement."""
    if fine.nx != 2 * coarse.nx or fine.ny != 2 * coarse.ny:
        raise ValueError(
            f"grids are not nested: coarse {coarse.nx}x{coarse.ny}, fine {fine.nx}x{fine.ny}"
        )
    # x-fastest numbering -> kron(y-part, x-part)
    P = sp.kron(_interp_1d(coarse.ny), _interp_1d(coarse.nx), format="csr")
    return CsrMatrix.from_scipy(P)


def decoupled_rows(A):
    """Rows holding only a diagonal entry (eliminated Dirichlet unknowns)."""
    counts = np.diff(A.row_offsets)
    rows = A.row_indices()
    off = np.bincount(rows[rows != A.col_indices], minlength=A.nrows)
    return (counts == 1) & (off == 0)


def _restrict_pattern(P, keep_rows, keep_cols):
    """Zero the rows not in ``keep_rows``, drop the columns not in ``keep_cols``."""
    S = P.to_scipy()
    S = sp.diags(keep_rows.astype(float)) @ S
    S = S[:, np.flatnonzero(keep_cols)]
    S.eliminate_zeros()
    return S


def _levels_from_transfers(A_L, two_grid, grids=None):
    """Compose two-grid transfers (coarsest first) into a hierarchy."""
    n_levels = len(two_grid) + 1
    composite = [None] * n_levels
    composite[-1] = sp.identity(A_L.nrows, format="csr")
    for l in range(n_levels - 2, -1, -1):
        composite[l] = (composite[l + 1] @ two_grid[l]).tocsr()

    levels = []
    for l in range(n_levels):
        P = CsrMatrix.from_scipy(composite[l])
        R = transpose(P)
        if l == n_levels - 1:
            A = A_L
        else:
            A = galerkin_triple_product(R, A_L, P)
        nxt = CsrMatrix.from_scipy(two_grid[l]) if l < n_levels - 1 else None
        g = grids[l] if grids is not None else None
        levels.append(Level(l, A, P, R, nxt, g))
    return levels


def build_geometric_hierarchy(fine, A_L, levels, dirichlet=None):
    """Nested-grid hierarchy by repeated halving of ``fine``.

    Parameters
    ----------
    fine : StructuredGrid
        Grid on which ``A_L`` was assembled.
    A_L : CsrMatrix
        Fine-level operator.
    levels : int
        Total number of levels ``L + 1``.
    dirichlet : array_like of bool, optional
        Eliminated fine unknowns. Detected from decoupled rows when omitted.
        Coarse nodes sitting on eliminated fine nodes are dropped and the
        prolongation rows of eliminated fine nodes are zero.
    """
    levels = int(levels)
    if levels < 1:
        raise ValueError("need at least one level")
    factor = 2 ** (levels - 1)
    if fine.nx % factor or fine.ny % factor:
        raise ValueError(
            f"{fine.nx}x{fine.ny} grid cannot be halved {levels - 1} times"
        )
    if A_L.nrows != fine.n_nodes:
        raise ValueError(f"operator has {A_L.nrows} rows but grid has {fine.n_nodes} nodes")
    if dirichlet is None:
        dirichlet = decoupled_rows(A_L)
    dirichlet = np.asarray(dirichlet, dtype=bool)

    grids = [fine]
    for _ in range(levels - 1):
        grids.insert(0, grids[0].coarsen())

    # Free nodes per level; level L keeps every node.
    free = []
    for l, g in enumerate(grids):
        if l == levels - 1:
            free.append(np.ones(g.n_nodes, dtype=bool))
            continue
        s = 2 ** (levels - 1 - l)
        ci, cj = np.meshgrid(np.arange(g.nx + 1), np.arange(g.ny + 1))
        fine_idx = fine.node_index(s * ci.ravel(), s * cj.ravel())
        mask = ~dirichlet[fine_idx]
        if not mask.any():
            raise ValueError(f"level {l} ({g.nx}x{g.ny}) has no free unknowns")
        free.append(mask)

    two_grid = []
    for l in range(levels - 1):
        P = bilinear_prolongation(grids[l], grids[l + 1])
        rows = ~dirichlet if l + 1 == levels - 1 else np.ones(grids[l + 1].n_nodes, dtype=bool)
        S = _restrict_pattern(P, rows, free[l])
        if l + 1 < levels - 1:
            S = S[np.flatnonzero(free[l + 1]), :]
        two_grid.append(S.tocsr())

    return LevelHierarchy(_levels_from_transfers(A_L, two_grid, grids), kind="geometric")


# -- aggregation ----------------------------------------------------------------

def strength_graph(A, tol):
    """Symmetric strength-of-connection pattern without the diagonal.

    ``j`` is strong for ``i`` when ``|a_ij| >= tol * max_{k != i} |a_ik|``;
    the pattern is symmetrized by union.
    """
    S = A.to_scipy().tocoo()
    off = (S.row != S.col) & (S.data != 0.0)
    r, c, v = S.row[off], S.col[off], np.abs(S.data[off])
    row_max = np.zeros(A.nrows)
    np.maximum.at(row_max, r, v)
    strong = v >= tol * row_max[r]
    G = sp.csr_matrix((np.ones(strong.sum()), (r[strong], c[strong])), shape=A.shape)
    G = ((G + G.T) > 0).astype(float).tocsr()
    G.sort_indices()
    return G


@nb.njit(cache=True)
def _greedy_aggregate(indptr, indices, weights, n):
    agg = -np.ones(n, dtype=np.int64)
    n_agg = 0
    # Pass 1: seed aggregates from nodes whose whole neighborhood is free.
    for i in range(n):
        if agg[i] >= 0:
            continue
        free = True
        for k in range(indptr[i], indptr[i + 1]):
            if agg[indices[k]] >= 0:
                free = False
                break
        if free:
            agg[i] = n_agg
            for k in range(indptr[i], indptr[i + 1]):
                agg[indices[k]] = n_agg
            n_agg += 1
    # Pass 2: attach leftovers to the strongest neighboring pass-1 aggregate.
    first = agg.copy()
    for i in range(n):
        if agg[i] >= 0:
            continue
        best = -1.0
        for k in range(indptr[i], indptr[i + 1]):
            j = indices[k]
            if first[j] >= 0 and weights[k] > best:
                best = weights[k]
                agg[i] = first[j]
    # Pass 3: whatever is left forms aggregates with its free neighbors.
    for i in range(n):
        if agg[i] >= 0:
            continue
        agg[i] = n_agg
        for k in range(indptr[i], indptr[i + 1]):
            if agg[indices[k]] < 0:
                agg[indices[k]] = n_agg
        n_agg += 1
    return agg, n_agg


def aggregate(A, tol):
    """Greedy aggregation over the strength graph.

    Returns
    -------
    agg : ndarray of int
        Aggregate id of every node.
    n_agg : int
    """
    G = strength_graph(A, tol)
    # Pass-2 weights |a_ij|, in the storage order of the strength pattern.
    rows, cols = G.nonzero()
    weights = np.abs(np.asarray(A.to_scipy()[rows, cols]).ravel()) if G.nnz else np.zeros(0)
    agg, n_agg = _greedy_aggregate(
        G.indptr.astype(np.int64), G.indices.astype(np.int64), weights, A.nrows
    )
    return agg, int(n_agg)


def tentative_prolongation(agg, n_agg):
    """Piecewise-constant prolongation: one unit entry per row."""
    n = agg.size
    return sp.csr_matrix((np.ones(n), (np.arange(n), agg)), shape=(n, n_agg))


def build_aggregation_hierarchy(A_L, levels, strength_tol=0.25, omega=2.0 / 3.0, min_reduction=0.1):
    """Smoothed-aggregation hierarchy with Galerkin coarse operators.

    The tentative prolongation is smoothed by one weighted-Jacobi step,
    ``P = (I - omega D^-1 A) T``. Coarsening stops as soon as a pass shrinks
    the level by less than ``min_reduction``; the hierarchy is then flagged
    ``no_coarsening`` and has fewer levels than requested.
    """
    levels = int(levels)
    if levels < 1:
        raise ValueError("need at least one level")
    if not 0.0 < strength_tol < 1.0:
        raise ValueError("strength_tol must lie in (0, 1)")
    if not A_L.symmetric:
        raise ValueError("aggregation needs a symmetric operator")

    two_grid = []
    A = A_L
    stalled = False
    while len(two_grid) < levels - 1:
        agg, n_agg = aggregate(A, strength_tol)
        if n_agg == 0 or n_agg > (1.0 - min_reduction) * A.nrows:
            stalled = True
            break
        T = tentative_prolongation(agg, n_agg)
        As = A.to_scipy()
        Dinv = sp.diags(1.0 / As.diagonal())
        P = (T - omega * (Dinv @ (As @ T))).tocsr()
        P.eliminate_zeros()
        Pc = CsrMatrix.from_scipy(P)
        A = galerkin_triple_product(transpose(Pc), A, Pc)
        two_grid.append(P)

    # two_grid was built finest-first.
    two_grid = two_grid[::-1]
    return LevelHierarchy(
        _levels_from_transfers(A_L, two_grid), kind="aggregation", no_coarsening=stalled
    )
