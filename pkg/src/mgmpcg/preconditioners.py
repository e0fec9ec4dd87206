"""Multigrid preconditioning actions over a :class:`LevelHierarchy`.

All actions start their smoothers from zero, so each one is a fixed linear
map of the residual.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .sparse import transpose
from .smoothers import CoarseSolver, SsorSmoother

__all__ = [
    "AdditiveMg",
    "VCycle",
    "additive_block",
    "additive_apply",
    "vcycle_apply",
]


class AdditiveMg:
    """Additive multigrid: independent level corrections of one residual.

    Parameters
    ----------
    hierarchy : LevelHierarchy
    nu : int
        SSOR sweeps on every level above the coarsest.
    omega : float
        SSOR relaxation factor.
    coarse : callable, optional
        Replacement for the exact coarsest-level solve.
    workers : int, optional
        Compute level corrections in a thread pool. Results do not depend on
        the worker count.
    """

    def __init__(self, hierarchy, nu=6, omega=1.0, coarse=None, workers=None):
        self.hierarchy = hierarchy
        self.nu = int(nu)
        self.omega = float(omega)
        self.smoothers = [None] + [
            SsorSmoother(lvl.A, omega=omega, nu=nu) for lvl in hierarchy.levels[1:]
        ]
        self.coarse = coarse if coarse is not None else CoarseSolver(hierarchy[0].A)
        self.workers = workers

    @property
    def n_columns(self):
        return len(self.hierarchy)

    @property
    def n(self):
        return self.hierarchy.finest.n

    def correction(self, level, r):
        """Fine-level correction from one level: ``P_l S_l(R_l r)``."""
        lvl = self.hierarchy[level]
        is_finest = level == self.hierarchy.L
        rc = r if is_finest else lvl.R_from_fine @ r
        c = self.coarse(rc) if level == 0 else self.smoothers[level].smooth(rc)
        return c if is_finest else lvl.P_to_fine @ c

    def block(self, r):
        """Direction block with one column per level, coarsest first."""
        r = np.asarray(r, dtype=float)
        if r.shape != (self.n,):
            raise ValueError(f"residual has shape {r.shape}, finest level has {self.n} unknowns")
        out = np.empty((self.n, self.n_columns))
        if self.workers and self.workers > 1:
            with ThreadPoolExecutor(self.workers) as pool:
                cols = list(pool.map(lambda l: self.correction(l, r), range(self.n_columns)))
            for l, c in enumerate(cols):
                out[:, l] = c
        else:
            for l in range(self.n_columns):
                out[:, l] = self.correction(l, r)
        return out

    def apply(self, r):
        """Equally weighted sum of all level corrections."""
        return self.block(r).sum(axis=1)

    __call__ = apply


class VCycle:
    """One V(nu_pre, nu_post) cycle from a zero initial guess.

    Transfers between consecutive levels are the stored two-grid
    prolongations. With ``nu_pre == nu_post`` the cycle is a symmetric
    operator.
    """

    def __init__(self, hierarchy, nu_pre=3, nu_post=3, omega=1.0):
        self.hierarchy = hierarchy
        self.nu_pre = int(nu_pre)
        self.nu_post = int(nu_post)
        self.omega = float(omega)
        self.smoothers = [None] + [
            SsorSmoother(lvl.A, omega=omega, nu=max(self.nu_pre, 1))
            for lvl in hierarchy.levels[1:]
        ]
        self.coarse = CoarseSolver(hierarchy[0].A)
        self._restrict = [
            transpose(lvl.P_to_next) if lvl.P_to_next is not None else None
            for lvl in hierarchy.levels
        ]

    @property
    def n(self):
        return self.hierarchy.finest.n

    def _cycle(self, level, rhs):
        if level == 0:
            return self.coarse(rhs)
        smoother = self.smoothers[level]
        A = self.hierarchy[level].A
        x = smoother.smooth(rhs, nu=self.nu_pre) if self.nu_pre else np.zeros_like(rhs)
        coarse_rhs = self._restrict[level - 1] @ (rhs - A @ x)
        x += self.hierarchy[level - 1].P_to_next @ self._cycle(level - 1, coarse_rhs)
        if self.nu_post:
            x = smoother.smooth(rhs, x0=x, nu=self.nu_post)
        return x

    def apply(self, r):
        r = np.asarray(r, dtype=float)
        if r.shape != (self.n,):
            raise ValueError(f"residual has shape {r.shape}, finest level has {self.n} unknowns")
        return self._cycle(self.hierarchy.L, r)

    __call__ = apply


def additive_block(p, r):
    return p.block(r)


def additive_apply(p, r):
    return p.apply(r)


def vcycle_apply(p, r):
    return p.apply(r)
