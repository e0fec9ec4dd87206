"""Preconditioned CG and the multipreconditioned CG driven by additive MG.

``mpcg`` takes one search direction per multigrid level in every iteration
and combines them with the energy-minimizing weights ``alpha`` obtained from
the small Gram system ``P^T A P alpha = P^T r``. Because the combination is no
longer a single preconditioned residual, the three-term recurrence is lost
and new blocks are A-orthogonalized explicitly against the last ``m`` blocks.
"""

from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .sparse import GramFactor, IndefiniteOperatorError

__all__ = [
    "IndefiniteOperatorError",
    "SolverConfig",
    "SolveReport",
    "MpcgHistory",
    "pcg",
    "mpcg",
    "conjugacy_audit",
]


@dataclass(frozen=True)
class SolverConfig:
    tol_rel: float = 1e-8
    max_iters: int = 1000
    m: int = 5
    gram_drop_tol: float = 1e-12

    def __post_init__(self):
        if self.tol_rel <= 0:
            raise ValueError("tol_rel must be positive")
        if self.max_iters < 0:
            raise ValueError("max_iters must be non-negative")
        if self.m < 1:
            raise ValueError("history length m must be at least 1")
        if self.gram_drop_tol < 0:
            raise ValueError("gram_drop_tol must be non-negative")


@dataclass
class SolveReport:
    """Outcome of one solve.

    ``residual_history[k]`` is the 2-norm of the k-th residual, including the
    initial one. ``alpha_history`` holds one row of level weights per MPCG
    iteration, coarsest level first, and is ``None`` for plain PCG.
    """

    solver: str
    converged: bool
    iterations: int
    residual_history: np.ndarray
    alpha_history: Optional[np.ndarray] = None
    rank_deficiency_events: int = 0
    wall_time: float = 0.0
    rhs_norm: float = 1.0

    @property
    def final_relative_residual(self):
        return float(self.residual_history[-1] / self.rhs_norm)


class MpcgHistory:
    """The last ``m`` direction blocks with their A-images and Gram factors."""

    def __init__(self, m):
        if m < 1:
            raise ValueError("history needs capacity m >= 1")
        self.m = int(m)
        self._entries = deque(maxlen=self.m)

    def __len__(self):
        return len(self._entries)

    def __iter__(self):
        return iter(self._entries)

    def push(self, P, AP, factor):
        self._entries.append((P, AP, factor))

    def project(self, Z):
        """A-orthogonalize ``Z`` against every stored block."""
        out = Z.copy()
        for P, AP, factor in self._entries:
            out -= P @ factor.solve(AP.T @ Z)
        return out


def _reference_norm(b, r0):
    bnorm = float(np.linalg.norm(b))
    return bnorm if bnorm > 0 else float(np.linalg.norm(r0))


def pcg(A, b, precond=None, cfg=None, x0=None, callback=None):
    """Preconditioned conjugate gradients.

    Parameters
    ----------
    A : CsrMatrix or object supporting ``A @ x``
    b : ndarray
    precond : callable, optional
        Symmetric positive (semi-)definite action ``r -> M^-1 r``; identity
        when omitted.
    cfg : SolverConfig, optional
    x0 : ndarray, optional
        Initial guess, zero by default.
    callback : callable, optional
        Called as ``callback(k, x)`` after every iteration.

    Returns
    -------
    x : ndarray
    report : SolveReport
    """
    cfg = cfg or SolverConfig()
    apply_m = precond if precond is not None else (lambda v: v.copy())
    t0 = time.perf_counter()
    b = np.asarray(b, dtype=float)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)

    r = b - A @ x
    ref = _reference_norm(b, r)
    res = [float(np.linalg.norm(r))]
    converged = res[0] <= cfg.tol_rel * ref
    k = 0
    if not converged:
        z = apply_m(r)
        p = z.copy()
        rz = float(r @ z)
        while k < cfg.max_iters:
            Ap = A @ p
            curv = float(p @ Ap)
            if curv <= 0.0:
                raise IndefiniteOperatorError(f"p^T A p = {curv:.3e} at iteration {k}")
            alpha = rz / curv
            x += alpha * p
            r -= alpha * Ap
            k += 1
            res.append(float(np.linalg.norm(r)))
            if callback is not None:
                callback(k, x)
            if res[-1] <= cfg.tol_rel * ref:
                converged = True
                break
            z = apply_m(r)
            rz_new = float(r @ z)
            p = z + (rz_new / rz) * p
            rz = rz_new

    report = SolveReport(
        solver="pcg",
        converged=converged,
        iterations=k,
        residual_history=np.array(res),
        wall_time=time.perf_counter() - t0,
        rhs_norm=ref,
    )
    return x, report


def mpcg(A, b, addmg, cfg=None, x0=None, callback=None, history=None):
    """Multipreconditioned CG with one direction per multigrid level.

    Parameters
    ----------
    A : CsrMatrix
    b : ndarray
    addmg : AdditiveMg or callable
        Anything with a ``block(r)`` method, or a callable, returning the
        ``(n, k)`` block of preconditioned residuals.
    cfg : SolverConfig, optional
    x0 : ndarray, optional
    callback : callable, optional
        Called as ``callback(k, x, history, P_next)`` after every iteration;
        ``P_next`` is ``None`` once the solve has converged.
    history : MpcgHistory, optional
        Supply to inspect the stored blocks afterwards.

    Returns
    -------
    x : ndarray
    report : SolveReport
    """
    cfg = cfg or SolverConfig()
    block = addmg.block if hasattr(addmg, "block") else addmg
    history = history if history is not None else MpcgHistory(cfg.m)
    t0 = time.perf_counter()
    b = np.asarray(b, dtype=float)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)

    r = b - A @ x
    ref = _reference_norm(b, r)
    res = [float(np.linalg.norm(r))]
    alphas = []
    events = 0
    converged = res[0] <= cfg.tol_rel * ref
    k = 0
    if not converged:
        P = np.atleast_2d(block(r).T).T
        AP = A @ P
        while k < cfg.max_iters:
            G = P.T @ AP
            factor = GramFactor(0.5 * (G + G.T), drop_tol=cfg.gram_drop_tol)
            events += factor.rank_deficient
            alpha = factor.solve(P.T @ r)
            x += P @ alpha
            r -= AP @ alpha
            k += 1
            alphas.append(alpha)
            res.append(float(np.linalg.norm(r)))
            history.push(P, AP, factor)
            if res[-1] <= cfg.tol_rel * ref:
                converged = True
                if callback is not None:
                    callback(k, x, history, None)
                break
            Z = np.atleast_2d(block(r).T).T
            P = history.project(Z)
            AP = A @ P
            if callback is not None:
                callback(k, x, history, P)

    n_cols = len(alphas[0]) if alphas else 0
    report = SolveReport(
        solver="mpcg",
        converged=converged,
        iterations=k,
        residual_history=np.array(res),
        alpha_history=np.array(alphas).reshape(k, n_cols),
        rank_deficiency_events=int(events),
        wall_time=time.perf_counter() - t0,
        rhs_norm=ref,
    )
    return x, report


def _max_col_energy(block, A_block):
    return float(np.sqrt(np.max(np.abs(np.einsum("ij,ij->j", block, A_block)), initial=0.0)))


def conjugacy_audit(history, P_new, A):
    """Largest normalized A-inner product between ``P_new`` and stored blocks.

    Stored blocks are reduced to the directions their Gram factor retained,
    which are the directions actually used to update the iterate. Each cross
    block is scaled by the largest column energy norm of both blocks, so the
    result is independent of their magnitudes.
    """
    if len(history) == 0:
        raise ValueError("conjugacy audit needs a non-empty history")
    AP_new = A @ P_new
    e_new = _max_col_energy(P_new, AP_new)
    worst = 0.0
    for P, AP, factor in history:
        V = factor.basis
        if V.shape[1] == 0:
            continue
        Pk, APk = P @ V, AP @ V
        scale = _max_col_energy(Pk, APk) * e_new
        if scale == 0.0:
            continue
        worst = max(worst, float(np.abs(APk.T @ P_new).max()) / scale)
    return worst
