"""Restarted GMRES(m) with modified Gram-Schmidt Arnoldi and Givens least squares.

Left preconditioning throughout: the iteration runs on op = M^{-1} A and
convergence is monitored on the preconditioned residual relative to
``||M^{-1} b||``. The true residual ``||b - A x|| / ||b||`` is recomputed
once at exit. ``iterations`` counts applications of the preconditioned
operator (Arnoldi steps), the unit shared with the recycling solver.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg as sla

from .precond import IdentityPreconditioner, Preconditioner
from .sparse import CsrMatrix

_BREAKDOWN_RTOL = 1e-14
_REORTH_RTOL = 1e-8


@dataclass(frozen=True)
class SolverConfig:
    """Shared solver knobs: restart length m, tolerance, matvec cap, recycle size k."""

    m: int = 50
    tol: float = 1e-8
    max_iter: int = 10000
    k: int = 10

    def __post_init__(self):
        if self.m < 2:
            raise ValueError("m must be >= 2")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not 0 <= self.k < self.m:
            raise ValueError("k must satisfy 0 <= k < m")


@dataclass
class SolveReport:
    """Outcome of one linear solve; the unit of benchmark measurement."""

    x: np.ndarray
    iterations: int
    residual_history: np.ndarray
    true_relative_residual: float
    converged: bool
    wall_time: float
    diagnostics: dict = field(default_factory=dict)


@dataclass
class ArnoldiFactorization:
    """Arnoldi relation data: op @ V[:, :j] = V[:, :j+1] @ H."""

    V: np.ndarray  # n x (j+1), orthonormal columns
    H: np.ndarray  # (j+1) x j, upper Hessenberg
    j: int
    breakdown: bool = False


def _mgs_step(V: np.ndarray, ncols: int, w: np.ndarray, h: np.ndarray) -> float:
    """Orthogonalize w against V[:, :ncols] in place, accumulating into h.

    One modified Gram-Schmidt sweep plus a second sweep when the remaining
    component along the basis exceeds 1e-8 of the entry norm. Returns the
    entry norm of w.
    """
    wnorm0 = float(np.linalg.norm(w))
    for i in range(ncols):
        hi = float(np.dot(V[:, i], w))
        w -= hi * V[:, i]
        h[i] += hi
    if ncols and wnorm0 > 0.0:
        drift = float(np.linalg.norm(V[:, :ncols].T @ w))
        if drift > _REORTH_RTOL * wnorm0:
            for i in range(ncols):
                ci = float(np.dot(V[:, i], w))
                w -= ci * V[:, i]
                h[i] += ci
    return wnorm0


def arnoldi_expand(
    op: Callable[[np.ndarray], np.ndarray], fact: ArnoldiFactorization
) -> ArnoldiFactorization:
    """Append one Arnoldi step to the factorization.

    A lucky breakdown (new vector numerically in the current span) is
    signalled via the ``breakdown`` flag; the stalled basis column is zero.
    """
    n, width = fact.V.shape
    j = fact.j
    if width != j + 1 or fact.H.shape != (j + 1, j):
        raise ValueError("inconsistent factorization shapes")

    w = np.asarray(op(fact.V[:, j]), dtype=np.float64)
    if w.shape != (n,):
        raise ValueError("operator dimension mismatch")

    H = np.zeros((j + 2, j + 1))
    H[: j + 1, :j] = fact.H
    V = np.zeros((n, j + 2))
    V[:, : j + 1] = fact.V

    hcol = H[:, j]
    wnorm0 = _mgs_step(V, j + 1, w, hcol)
    hnew = float(np.linalg.norm(w))
    breakdown = hnew < _BREAKDOWN_RTOL * max(wnorm0, np.finfo(float).tiny)
    if breakdown:
        hcol[j + 1] = hnew
    else:
        hcol[j + 1] = hnew
        V[:, j + 1] = w / hnew
    return ArnoldiFactorization(V=V, H=H, j=j + 1, breakdown=breakdown)


def _gmres_cycle(op, r0, beta, m, abs_tol, max_steps):
    """One GMRES cycle of at most min(m, max_steps) Arnoldi steps.

    Returns (V, H, j, step_residuals, y, breakdown): the orthonormal basis
    V (n x (j+1)), the raw Hessenberg H ((j+1) x j), the per-step Givens
    residual norms, and the least-squares solution y minimizing
    ``|| beta e1 - H y ||``.
    """
    n = len(r0)
    steps = min(m, max_steps)
    V = np.zeros((n, steps + 1))
    H = np.zeros((steps + 1, steps))
    R = np.zeros((steps + 1, steps))  # Givens-rotated copy of H
    cs = np.zeros(steps)
    sn = np.zeros(steps)
    g = np.zeros(steps + 1)
    g[0] = beta
    V[:, 0] = r0 / beta

    residuals = []
    breakdown = False
    j = 0
    while j < steps:
        w = np.asarray(op(V[:, j]), dtype=np.float64)
        hcol = H[:, j]
        wnorm0 = _mgs_step(V, j + 1, w, hcol)
        hnew = float(np.linalg.norm(w))
        hcol[j + 1] = hnew
        if hnew < _BREAKDOWN_RTOL * max(wnorm0, np.finfo(float).tiny):
            breakdown = True
        else:
            V[:, j + 1] = w / hnew

        # Givens update of column j
        rcol = R[:, j]
        rcol[: j + 2] = hcol[: j + 2]
        for i in range(j):
            t = cs[i] * rcol[i] + sn[i] * rcol[i + 1]
            rcol[i + 1] = -sn[i] * rcol[i] + cs[i] * rcol[i + 1]
            rcol[i] = t
        denom = float(np.hypot(rcol[j], rcol[j + 1]))
        if denom == 0.0:
            cs[j], sn[j] = 1.0, 0.0
        else:
            cs[j], sn[j] = rcol[j] / denom, rcol[j + 1] / denom
        rcol[j] = denom
        rcol[j + 1] = 0.0
        g[j + 1] = -sn[j] * g[j]
        g[j] = cs[j] * g[j]

        residuals.append(abs(g[j + 1]))
        j += 1
        if breakdown or residuals[-1] <= abs_tol:
            break

    y = sla.solve_triangular(R[:j, :j], g[:j], check_finite=False)
    return V[:, : j + 1], H[: j + 1, :j], j, residuals, y, breakdown


def make_operator(A: CsrMatrix, M: Optional[Preconditioner]):
    """Return (op, Mp): op(v) = M^{-1} (A v) and the preconditioner used."""
    Mp = M if M is not None else IdentityPreconditioner(A.n_rows)
    S = A.to_scipy()
    if isinstance(Mp, IdentityPreconditioner):
        return (lambda v: S @ v), Mp
    return (lambda v: Mp.apply(S @ v)), Mp


def gmres_solve(
    A: CsrMatrix,
    b: np.ndarray,
    x0: Optional[np.ndarray] = None,
    M: Optional[Preconditioner] = None,
    cfg: Optional[SolverConfig] = None,
    collect_diagnostics: bool = False,
) -> SolveReport:
    """Solve A x = b with restarted GMRES(m) under left preconditioning."""
    cfg = cfg or SolverConfig()
    t_start = time.perf_counter()
    n = A.n_rows
    if A.n_cols != n:
        raise ValueError("gmres needs a square matrix")
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (n,):
        raise ValueError("right-hand side length mismatch")
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=np.float64)

    op, Mp = make_operator(A, M)
    S = A.to_scipy()

    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return SolveReport(
            x=np.zeros(n),
            iterations=0,
            residual_history=np.zeros(1),
            true_relative_residual=0.0,
            converged=True,
            wall_time=time.perf_counter() - t_start,
        )
    bprec_norm = float(np.linalg.norm(Mp.apply(b)))
    abs_tol = cfg.tol * bprec_norm

    r = Mp.apply(b - S @ x) if np.any(x) else Mp.apply(b)
    rnorm = float(np.linalg.norm(r))
    history = [rnorm]
    restart_checks = []
    relation_residuals = []
    iters = 0
    converged = rnorm <= abs_tol

    while not converged and iters < cfg.max_iter:
        V, H, j, step_res, y, breakdown = _gmres_cycle(
            op, r, rnorm, cfg.m, abs_tol, cfg.max_iter - iters
        )
        iters += j
        history.extend(step_res)
        x += V[:, :j] @ y
        r = Mp.apply(b - S @ x)
        rnorm = float(np.linalg.norm(r))
        restart_checks.append((step_res[-1], rnorm))
        converged = rnorm <= abs_tol
        if collect_diagnostics:
            AV = np.column_stack([op(V[:, i]) for i in range(j)])
            num = float(np.linalg.norm(AV - V @ H, "fro"))
            relation_residuals.append(num / max(np.linalg.norm(H, "fro"), 1e-300))
        if breakdown and not converged:
            # exact solution already in the space; nothing further to gain
            break

    true_rel = float(np.linalg.norm(b - S @ x)) / bnorm
    diag = {"restart_checks": restart_checks}
    if collect_diagnostics:
        diag["arnoldi_relation_residuals"] = relation_residuals
    return SolveReport(
        x=x,
        iterations=iters,
        residual_history=np.asarray(history),
        true_relative_residual=true_rel,
        converged=converged,
        wall_time=time.perf_counter() - t_start,
        diagnostics=diag,
    )
