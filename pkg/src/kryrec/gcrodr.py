"""GCRO-DR: deflated Arnoldi cycles with a recycled subspace carried across systems.

The solver maintains a pair (U, C) with op @ U = C and C^T C = I for the
current preconditioned operator op = M^{-1} A. Within a system, cycles of
m - k deflated Arnoldi steps alternate with a harmonic-Ritz recompute of the
recycle pair; between systems the pair is refreshed against the new operator
by a reduced QR. With k = 0 (or a recycle space that collapses to rank 0)
the solver degrades to plain restarted GMRES.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.linalg as sla

from .gmres import (
    SolveReport,
    SolverConfig,
    _BREAKDOWN_RTOL,
    _gmres_cycle,
    _mgs_step,
    gmres_solve,
    make_operator,
)
from .precond import Preconditioner
from .sparse import CsrMatrix

_RANK_RTOL = 1e-12
_PAIR_IMAG_RTOL = 1e-12


@dataclass(frozen=True)
class RecycleSpace:
    """Recycle pair: op @ U = C with orthonormal C, for the refreshing system."""

    U: np.ndarray
    C: np.ndarray
    k: int
    source_id: Optional[object] = None


@dataclass
class DeflatedArnoldi:
    """Deflated Arnoldi data: (I - C C^T) op V[:, :j] = V[:, :j+1] H, B = C^T op V."""

    V: np.ndarray  # n x (j+1)
    H: np.ndarray  # (j+1) x j
    B: np.ndarray  # k x j


def _rank_revealing_qr(W: np.ndarray, rtol: float = _RANK_RTOL):
    """Column-pivoted reduced QR with rank detection.

    Returns (Q_r, R_r, kept) where W[:, kept] = Q_r @ R_r and R_r is the
    leading rank-by-rank block of the pivoted R.
    """
    Q, R, piv = sla.qr(W, mode="economic", pivoting=True, check_finite=False)
    diag = np.abs(np.diag(R))
    if len(diag) == 0 or diag[0] == 0.0:
        return Q[:, :0], R[:0, :0], piv[:0]
    rank = int(np.sum(diag >= rtol * diag[0]))
    return Q[:, :rank], R[:rank, :rank], piv[:rank]


def _orthonormal_columns(Y: np.ndarray, rtol: float = _RANK_RTOL) -> np.ndarray:
    Q, _, kept = _rank_revealing_qr(np.asarray(Y, dtype=np.float64), rtol)
    if Q.shape[1] < Y.shape[1]:
        warnings.warn(
            f"dropped {Y.shape[1] - Q.shape[1]} rank-deficient recycle columns",
            stacklevel=3,
        )
    return Q


def refresh_recycle(
    Y: np.ndarray,
    A_new: CsrMatrix,
    M: Optional[Preconditioner] = None,
    source_id: Optional[object] = None,
) -> RecycleSpace:
    """Re-anchor a candidate recycle basis Y against op = M^{-1} A_new.

    Y's columns are orthonormalized first (rank-deficient directions are
    dropped with a warning), then [Q, R] = qr(op @ Y) gives C = Q and
    U = Y R^{-1}. A fully collapsed basis yields an empty recycle space and
    the solver falls back to plain GMRES.
    """
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim != 2 or Y.shape[0] != A_new.n_rows:
        raise ValueError("recycle basis shape does not match the matrix")
    n = A_new.n_rows
    empty = RecycleSpace(U=np.zeros((n, 0)), C=np.zeros((n, 0)), k=0, source_id=source_id)
    Yo = _orthonormal_columns(Y)
    if Yo.shape[1] == 0:
        return empty

    op, _ = make_operator(A_new, M)
    W = np.asarray(op(Yo), dtype=np.float64)  # op acts columnwise on blocks
    Q, R, kept = _rank_revealing_qr(W)
    if Q.shape[1] == 0:
        return empty
    if Q.shape[1] < Yo.shape[1]:
        warnings.warn(
            f"recycle refresh dropped {Yo.shape[1] - Q.shape[1]} columns (rank loss)",
            stacklevel=2,
        )
    U = Yo[:, kept] @ sla.solve_triangular(R, np.eye(R.shape[0]), check_finite=False)
    return RecycleSpace(U=U, C=Q, k=Q.shape[1], source_id=source_id)


def recycle_residuals(space: RecycleSpace, op: Callable[[np.ndarray], np.ndarray]):
    """Diagnostics: (||op U - C||_F, ||C^T C - I||_F)."""
    if space.k == 0:
        return 0.0, 0.0
    opU = np.asarray(op(space.U), dtype=np.float64)
    rel = float(np.linalg.norm(opU - space.C, "fro"))
    orth = float(np.linalg.norm(space.C.T @ space.C - np.eye(space.k), "fro"))
    return rel, orth


def _select_smallest_real_basis(eigvals, eigvecs, k, max_cols=None):
    """Real basis for the invariant subspace of the k smallest-|lambda| eigenvalues.

    Complex-conjugate pairs are never split: a pair straddling the cutoff
    widens the selection by one. Columns are orthonormalized; the selected
    eigenvalue magnitudes are returned alongside.
    """
    eigvals = np.asarray(eigvals, dtype=complex)
    finite = np.isfinite(eigvals.real) & np.isfinite(eigvals.imag)
    mags = np.where(finite, np.abs(eigvals), np.inf)
    order = np.argsort(mags, kind="stable")

    cols = []
    picked = []
    used = np.zeros(len(eigvals), dtype=bool)
    for idx in order:
        if used[idx] or not finite[idx]:
            continue
        if len(cols) >= k:
            break
        lam = eigvals[idx]
        vec = eigvecs[:, idx]
        used[idx] = True
        if abs(lam.imag) > _PAIR_IMAG_RTOL * max(abs(lam), 1.0):
            partner_gap = np.abs(eigvals - np.conj(lam))
            partner_gap[used] = np.inf
            partner_gap[~finite] = np.inf
            partner = int(np.argmin(partner_gap))
            if np.isfinite(partner_gap[partner]):
                used[partner] = True
            cols.append(np.real(vec))
            cols.append(np.imag(vec))
            picked.extend([abs(lam), abs(lam)])
        else:
            cols.append(np.real(vec))
            picked.append(abs(lam))

    if not cols:
        raise np.linalg.LinAlgError("no finite eigenvalues to deflate with")
    P = np.column_stack(cols)
    if max_cols is not None and P.shape[1] > max_cols:
        P = P[:, :max_cols]
        picked = picked[:max_cols]
    Q, _, _ = _rank_revealing_qr(P)
    return Q, np.asarray(picked[: Q.shape[1]])


def harmonic_ritz_first_cycle(H_m: np.ndarray, h_sub: float, k: int):
    """Harmonic Ritz basis from a fresh Arnoldi factorization.

    Solves (H + h^2 H^{-T} e_m e_m^T) z = theta z for the k smallest-|theta|
    eigenpairs. When H is numerically singular the equivalent generalized
    problem (H^T H + h^2 e_m e_m^T) z = theta H^T z is solved instead and
    the fallback is recorded via a warning.
    """
    H = np.asarray(H_m, dtype=np.float64)
    m = H.shape[0]
    if H.shape != (m, m) or m == 0:
        raise ValueError("H_m must be square and nonempty")
    k = min(k, m)

    e_m = np.zeros(m)
    e_m[m - 1] = 1.0
    svals = sla.svdvals(H)
    use_fallback = svals[0] == 0.0 or svals[-1] < 1e-14 * svals[0]

    if not use_fallback:
        f = sla.solve(H.T, e_m, check_finite=False)
        modified = H.copy()
        modified[:, m - 1] += (h_sub * h_sub) * f
        vals, vecs = np.linalg.eig(modified)
    else:
        warnings.warn(
            "singular Hessenberg: harmonic Ritz via generalized eigenproblem",
            stacklevel=2,
        )
        lhs = H.T @ H + (h_sub * h_sub) * np.outer(e_m, e_m)
        vals, vecs = sla.eig(lhs, H.T, check_finite=False)

    P, _ = _select_smallest_real_basis(vals, vecs, k, max_cols=m)
    return P


def harmonic_ritz_subsequent(G: np.ndarray, W_r_V: np.ndarray, k: int):
    """Harmonic Ritz basis from a deflated cycle's block factorization.

    Solves G^T G z = theta (G^T W V) z where ``W_r_V`` is the leading
    square block of the cross-Gram matrix between the residual-side and
    solution-side bases. A singular right-hand matrix triggers an ordinary
    eigenproblem on pinv(rhs) @ lhs with a warning.
    """
    G = np.asarray(G, dtype=np.float64)
    mm = G.shape[1]
    if G.shape[0] != mm + 1:
        raise ValueError("G must have shape (m+1) x m")
    W_r_V = np.asarray(W_r_V, dtype=np.float64)
    if W_r_V.shape != (mm, mm):
        raise ValueError("cross-Gram block must be m x m")
    k = min(k, mm)

    lhs = G.T @ G
    rhs = G[:mm, :].T @ W_r_V

    svals = sla.svdvals(rhs)
    if svals[0] == 0.0 or svals[-1] < 1e-14 * svals[0]:
        warnings.warn(
            "singular cross-Gram matrix: harmonic Ritz via pseudoinverse",
            stacklevel=2,
        )
        vals, vecs = np.linalg.eig(np.linalg.pinv(rhs) @ lhs)
    else:
        vals, vecs = sla.eig(lhs, rhs, check_finite=False)

    P, _ = _select_smallest_real_basis(vals, vecs, k, max_cols=mm)
    return P


def _deflated_step(op, C, V, H, B, j):
    """One Arnoldi step with the operator (I - C C^T) op; returns breakdown flag."""
    w = np.asarray(op(V[:, j]), dtype=np.float64)
    if C.shape[1]:
        coeffs = C.T @ w
        B[:, j] = coeffs
        w -= C @ coeffs
    hcol = H[:, j]
    wnorm0 = _mgs_step(V, j + 1, w, hcol)
    hnew = float(np.linalg.norm(w))
    hcol[j + 1] = hnew
    if hnew < _BREAKDOWN_RTOL * max(wnorm0, np.finfo(float).tiny):
        return True
    V[:, j + 1] = w / hnew
    return False


def deflated_arnoldi(op, C: np.ndarray, r0: np.ndarray, steps: int) -> DeflatedArnoldi:
    """Run ``steps`` Arnoldi steps with the deflated operator (I - C C^T) op."""
    n = len(r0)
    kdim = C.shape[1]
    V = np.zeros((n, steps + 1))
    H = np.zeros((steps + 1, steps))
    B = np.zeros((kdim, steps))
    beta = float(np.linalg.norm(r0))
    if beta == 0.0:
        raise ValueError("zero starting residual")
    V[:, 0] = r0 / beta
    j = 0
    while j < steps:
        stop = _deflated_step(op, C, V, H, B, j)
        j += 1
        if stop:
            break
    return DeflatedArnoldi(V=V[:, : j + 1], H=H[: j + 1, :j], B=B[:, :j])


def _first_cycle_recycle(V, H, j, k_req):
    """Build (U, C) from a fresh GMRES factorization (V: n x (j+1), H: (j+1) x j)."""
    try:
        P = harmonic_ritz_first_cycle(H[:j, :j], float(H[j, j - 1]), min(k_req, j))
    except (np.linalg.LinAlgError, ValueError):
        return None, None
    Y = V[:, :j] @ P
    Q, R, kept = _rank_revealing_qr(H @ P)
    if Q.shape[1] == 0:
        return None, None
    C = V @ Q
    U = Y[:, kept] @ sla.solve_triangular(R, np.eye(R.shape[0]), check_finite=False)
    return U, C


def gcrodr_solve(
    A: CsrMatrix,
    b: np.ndarray,
    x0: Optional[np.ndarray] = None,
    M: Optional[Preconditioner] = None,
    cfg: Optional[SolverConfig] = None,
    recycle_in: Optional[RecycleSpace] = None,
    system_id: Optional[object] = None,
    collect_diagnostics: bool = False,
):
    """Solve A x = b with GCRO-DR, threading the recycle space between systems.

    Returns (report, recycle_out). With ``cfg.k == 0`` the solve is plain
    restarted GMRES (flagged in the report diagnostics) and the recycle
    space passes through empty. ``iterations`` counts preconditioned
    operator applications: k for the between-system refresh plus one per
    Arnoldi step, so iteration ratios against GMRES share one unit.
    """
    cfg = cfg or SolverConfig()
    t_start = time.perf_counter()
    n = A.n_rows
    if A.n_cols != n:
        raise ValueError("gcrodr needs a square matrix")
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (n,):
        raise ValueError("right-hand side length mismatch")

    empty_space = RecycleSpace(
        U=np.zeros((n, 0)), C=np.zeros((n, 0)), k=0, source_id=system_id
    )

    if cfg.k == 0:
        report = gmres_solve(A, b, x0=x0, M=M, cfg=cfg)
        report.diagnostics["gmres_fallback"] = True
        report.diagnostics["deflated_steps"] = 0
        return report, empty_space

    x = np.zeros(n) if x0 is None else np.array(x0, dtype=np.float64)
    op, Mp = make_operator(A, M)
    S = A.to_scipy()

    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        report = SolveReport(
            x=np.zeros(n),
            iterations=0,
            residual_history=np.zeros(1),
            true_relative_residual=0.0,
            converged=True,
            wall_time=time.perf_counter() - t_start,
        )
        return report, (recycle_in or empty_space)

    bprec_norm = float(np.linalg.norm(Mp.apply(b)))
    abs_tol = cfg.tol * bprec_norm

    r = Mp.apply(b - S @ x) if np.any(x) else Mp.apply(b)
    rnorm = float(np.linalg.norm(r))
    history = [rnorm]
    restart_checks = []
    cycle_diags = []
    iters = 0
    U = C = None
    deflated_steps = 0

    refreshed_space = None
    if recycle_in is not None and recycle_in.k > 0:
        space = refresh_recycle(recycle_in.U, A, M, source_id=system_id)
        iters += recycle_in.k  # operator applications spent on the refresh QR
        refreshed_space = space
        if space.k > 0:
            U, C = space.U, space.C
            alpha = C.T @ r
            x = x + U @ alpha
            r = r - C @ alpha
            rnorm = float(np.linalg.norm(r))
            history.append(rnorm)
        if collect_diagnostics:
            rel, orth = recycle_residuals(space, op)
            cycle_diags.append(
                {"stage": "refresh", "k": space.k, "au_c": rel, "orth": orth}
            )

    converged = rnorm <= abs_tol

    while not converged and iters < cfg.max_iter:
        if U is None:
            # no usable recycle pair yet: plain GMRES(m) cycle seeds one
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
            U, C = _first_cycle_recycle(V, H, j, cfg.k)
            if breakdown and not converged:
                break
            continue

        k_cur = U.shape[1]
        msteps = max(1, cfg.m - k_cur)
        max_here = min(msteps, cfg.max_iter - iters)

        unorms = np.linalg.norm(U, axis=0)
        unorms[unorms == 0.0] = 1.0
        dk = 1.0 / unorms
        Utilde = U * dk
        c_r = C.T @ r
        beta = rnorm

        V = np.zeros((n, max_here + 1))
        H = np.zeros((max_here + 1, max_here))
        B = np.zeros((k_cur, max_here))
        V[:, 0] = r / beta

        step_res = []
        y = None
        G = None
        j = 0
        breakdown = False
        while j < max_here:
            breakdown = _deflated_step(op, C, V, H, B, j)
            iters += 1
            j += 1
            G = np.zeros((k_cur + j + 1, k_cur + j))
            G[:k_cur, :k_cur] = np.diag(dk)
            G[:k_cur, k_cur:] = B[:, :j]
            G[k_cur:, k_cur:] = H[: j + 1, :j]
            rhs = np.zeros(k_cur + j + 1)
            rhs[:k_cur] = c_r
            rhs[k_cur] = beta
            y, *_ = np.linalg.lstsq(G, rhs, rcond=None)
            res = float(np.linalg.norm(rhs - G @ y))
            step_res.append(res)
            if breakdown or res <= abs_tol:
                break
        deflated_steps += j

        x += Utilde @ y[:k_cur] + V[:, :j] @ y[k_cur:]
        r = Mp.apply(b - S @ x)
        rnorm = float(np.linalg.norm(r))
        history.extend(step_res)
        restart_checks.append((step_res[-1], rnorm))
        converged = rnorm <= abs_tol

        # recompute the recycle pair from the bordered factorization
        mm = k_cur + j
        Vhat = np.hstack([Utilde, V[:, :j]])
        What = np.hstack([C, V[:, : j + 1]])
        cross = What[:, :mm].T @ Vhat
        try:
            P = harmonic_ritz_subsequent(G, cross, cfg.k)
        except (np.linalg.LinAlgError, ValueError):
            P = None
        if P is not None:
            Y = Vhat @ P
            Q, R, kept = _rank_revealing_qr(G @ P)
            if Q.shape[1] > 0:
                C = What @ Q
                U = Y[:, kept] @ sla.solve_triangular(
                    R, np.eye(R.shape[0]), check_finite=False
                )
        if collect_diagnostics:
            rel, orth = recycle_residuals(
                RecycleSpace(U=U, C=C, k=U.shape[1]), op
            )
            cycle_diags.append(
                {"stage": "cycle", "k": U.shape[1], "au_c": rel, "orth": orth}
            )

        if breakdown and not converged:
            break

    true_rel = float(np.linalg.norm(b - S @ x)) / bnorm
    diag = {
        "restart_checks": restart_checks,
        "deflated_steps": deflated_steps,
        "recycle_k": 0 if U is None else U.shape[1],
    }
    if collect_diagnostics:
        diag["cycles"] = cycle_diags
        diag["refreshed_space"] = refreshed_space
    if U is None:
        out = empty_space
        diag["gmres_fallback"] = True
    else:
        out = RecycleSpace(U=U, C=C, k=U.shape[1], source_id=system_id)

    report = SolveReport(
        x=x,
        iterations=iters,
        residual_history=np.asarray(history),
        true_relative_residual=true_rel,
        converged=converged,
        wall_time=time.perf_counter() - t_start,
        diagnostics=diag,
    )
    return report, out
