"""Left preconditioners: none, Jacobi, block Jacobi, SOR, ILU(0), IC(0).

Both solvers iterate on M^{-1} A x = M^{-1} b, so ``apply`` always means
"solve M z = v with the stored factorization". Triangular factors are kept
as SuperLU handles (natural ordering, no pivoting), which makes a sweep an
exact triangular solve at C speed.

All preconditioners are immutable after construction and their ``apply`` is
pure, so instances may be shared across threads.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .sparse import CsrMatrix

KINDS = ("none", "jacobi", "bjacobi", "sor", "ilu0", "icc0")


class ZeroPivotError(ValueError):
    """Factorization hit a zero (or, for IC, nonpositive) pivot."""

    def __init__(self, kind: str, row: int, value: float = 0.0):
        self.kind = kind
        self.row = int(row)
        self.value = float(value)
        super().__init__(f"{kind}: zero pivot at row {self.row} (value {value:g})")


def _triangular_solver(T: sp.spmatrix):
    """Exact solver for a triangular matrix via non-pivoting SuperLU."""
    return spla.splu(
        sp.csc_matrix(T),
        permc_spec="NATURAL",
        options={"DiagPivotThresh": 0.0, "SymmetricMode": True},
    )


class Preconditioner:
    """Base class; subclasses fill in ``kind`` and ``apply``."""

    kind = "none"

    def __init__(self, n: int):
        self.n = int(n)

    def apply(self, v: np.ndarray) -> np.ndarray:
        """Solve M z = v. Accepts a vector (n,) or a block of columns (n, m)."""
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}(n={self.n})"


class IdentityPreconditioner(Preconditioner):
    kind = "none"

    def apply(self, v):
        return np.array(v, dtype=np.float64, copy=True)


class JacobiPreconditioner(Preconditioner):
    kind = "jacobi"

    def __init__(self, diag: np.ndarray):
        super().__init__(len(diag))
        self.diag = np.asarray(diag, dtype=np.float64)

    def apply(self, v):
        v = np.asarray(v, dtype=np.float64)
        if v.ndim == 1:
            return v / self.diag
        return v / self.diag[:, None]


class BlockJacobiPreconditioner(Preconditioner):
    kind = "bjacobi"

    def __init__(self, n: int, block_size: int, factors):
        super().__init__(n)
        self.block_size = int(block_size)
        self._factors = factors  # list of (start, end, lu, piv)

    def apply(self, v):
        v = np.asarray(v, dtype=np.float64)
        z = np.empty_like(v)
        for start, end, lu, piv in self._factors:
            z[start:end] = sla.lu_solve((lu, piv), v[start:end])
        return z


class SorPreconditioner(Preconditioner):
    """Forward SOR sweep: M = D/omega + L with L the strict lower part of A."""

    kind = "sor"

    def __init__(self, n: int, omega: float, solver):
        super().__init__(n)
        self.omega = float(omega)
        self._solver = solver

    def apply(self, v):
        return self._solver.solve(np.asarray(v, dtype=np.float64))


class Ilu0Preconditioner(Preconditioner):
    """No-fill incomplete LU; factor pattern is a subset of A's pattern."""

    kind = "ilu0"

    def __init__(self, n: int, lower: CsrMatrix, upper: CsrMatrix):
        super().__init__(n)
        self.lower = lower  # unit lower triangular (diagonal stored as 1)
        self.upper = upper
        self._lsolve = _triangular_solver(lower.to_scipy())
        self._usolve = _triangular_solver(upper.to_scipy())

    def apply(self, v):
        return self._usolve.solve(self._lsolve.solve(np.asarray(v, dtype=np.float64)))


class Icc0Preconditioner(Preconditioner):
    """No-fill incomplete Cholesky, M = sign * L L^T.

    ``sign`` is -1 when A had an all-negative diagonal (the Laplacian-style
    systems assembled here are negative definite); the factorization then
    runs on -A so the pivots stay positive.
    """

    kind = "icc0"

    def __init__(self, n: int, lower: CsrMatrix, sign: float):
        super().__init__(n)
        self.lower = lower
        self.sign = float(sign)
        self._lsolve = _triangular_solver(lower.to_scipy())
        self._ltsolve = _triangular_solver(lower.to_scipy().T.tocsc())

    def apply(self, v):
        z = self._ltsolve.solve(self._lsolve.solve(np.asarray(v, dtype=np.float64)))
        return self.sign * z


def _require_square(A: CsrMatrix):
    if A.n_rows != A.n_cols:
        raise ValueError(f"preconditioner needs a square matrix, got {A.shape}")


def _require_nonzero_diag(A: CsrMatrix, kind: str) -> np.ndarray:
    diag = A.diagonal()
    zero = np.flatnonzero(diag == 0.0)
    if len(zero):
        raise ZeroPivotError(kind, zero[0])
    return diag


def _row_maps(A: CsrMatrix):
    """Per-row {col: position-in-values} dicts for pattern lookups."""
    maps = []
    for i in range(A.n_rows):
        lo, hi = A.row_ptr[i], A.row_ptr[i + 1]
        maps.append({int(c): p for p, c in enumerate(A.col_idx[lo:hi], start=lo)})
    return maps


def _ilu0_factor(A: CsrMatrix):
    """IKJ ILU(0) restricted to A's pattern; returns (unit L, U) in CSR."""
    n = A.n_rows
    val = np.array(A.values, dtype=np.float64)
    col = A.col_idx
    ptr = A.row_ptr
    pos = _row_maps(A)
    diag_pos = np.full(n, -1, dtype=np.int64)
    for i in range(n):
        p = pos[i].get(i, -1)
        if p < 0 or A.values[p] == 0.0:
            raise ZeroPivotError("ilu0", i)
        diag_pos[i] = p

    for i in range(n):
        lo, hi = ptr[i], ptr[i + 1]
        for p in range(lo, hi):
            k = int(col[p])
            if k >= i:
                break
            pivot = val[diag_pos[k]]
            if pivot == 0.0:
                raise ZeroPivotError("ilu0", k)
            lik = val[p] / pivot
            val[p] = lik
            row_k = pos[k]
            for q in range(p + 1, hi):
                j = int(col[q])
                pk = row_k.get(j)
                if pk is not None:
                    val[q] -= lik * val[pk]

    l_trip, u_trip = [], []
    for i in range(n):
        l_trip.append((i, i, 1.0))
        for p in range(ptr[i], ptr[i + 1]):
            j = int(col[p])
            if j < i:
                l_trip.append((i, j, val[p]))
            else:
                u_trip.append((i, j, val[p]))
        if val[diag_pos[i]] == 0.0:
            raise ZeroPivotError("ilu0", i)

    from .sparse import assemble_csr

    return assemble_csr(l_trip, n, n), assemble_csr(u_trip, n, n)


def _icc0_factor(A: CsrMatrix, sign: float):
    """IC(0) on sign*A restricted to the lower triangle of A's pattern."""
    n = A.n_rows
    rows: list[dict[int, float]] = [dict() for _ in range(n)]
    ptr, col, aval = A.row_ptr, A.col_idx, A.values
    for i in range(n):
        li = rows[i]
        for p in range(ptr[i], ptr[i + 1]):
            j = int(col[p])
            if j > i:
                break
            a_ij = sign * aval[p]
            if j < i:
                lj = rows[j]
                s = a_ij
                for k, lik in li.items():
                    ljk = lj.get(k)
                    if ljk is not None:
                        s -= lik * ljk
                li[j] = s / lj[j]
            else:
                d = a_ij - sum(x * x for k, x in li.items() if k < i)
                if d <= 0.0:
                    raise ZeroPivotError("icc0", i, d)
                li[i] = float(np.sqrt(d))

    from .sparse import assemble_csr

    trip = [(i, j, v) for i, li in enumerate(rows) for j, v in li.items()]
    return assemble_csr(trip, n, n)


def build_preconditioner(
    A: CsrMatrix,
    kind: str,
    *,
    sor_omega: float = 1.0,
    bjacobi_block: int = 64,
) -> Preconditioner:
    """Factor A for the requested preconditioner kind.

    ``kind`` is one of ``none | jacobi | bjacobi | sor | ilu0 | icc0``.
    SOR uses ``sor_omega`` (default 1.0 = Gauss-Seidel); block Jacobi uses
    contiguous diagonal blocks of ``bjacobi_block`` rows.
    """
    _require_square(A)
    kind = kind.lower()
    n = A.n_rows

    if kind == "none":
        return IdentityPreconditioner(n)

    if kind == "jacobi":
        return JacobiPreconditioner(_require_nonzero_diag(A, "jacobi"))

    if kind == "bjacobi":
        bs = int(bjacobi_block)
        if bs < 1:
            raise ValueError("bjacobi block size must be >= 1")
        S = A.to_scipy()
        factors = []
        for start in range(0, n, bs):
            end = min(n, start + bs)
            block = S[start:end, start:end].toarray()
            lu, piv = sla.lu_factor(block, check_finite=False)
            bad = np.flatnonzero(np.diag(lu) == 0.0)
            if len(bad):
                raise ZeroPivotError("bjacobi", start + bad[0])
            factors.append((start, end, lu, piv))
        return BlockJacobiPreconditioner(n, bs, factors)

    if kind == "sor":
        omega = float(sor_omega)
        if not 0.0 < omega < 2.0:
            raise ValueError(f"SOR omega must lie in (0, 2), got {omega}")
        diag = _require_nonzero_diag(A, "sor")
        S = A.to_scipy()
        M = sp.tril(S, k=-1, format="csr") + sp.diags(diag / omega, format="csr")
        return SorPreconditioner(n, omega, _triangular_solver(M))

    if kind == "ilu0":
        _require_nonzero_diag(A, "ilu0")
        lower, upper = _ilu0_factor(A)
        return Ilu0Preconditioner(n, lower, upper)

    if kind == "icc0":
        if not A.is_symmetric():
            raise ValueError("icc0 requires a symmetric matrix (pattern and values)")
        diag = _require_nonzero_diag(A, "icc0")
        sign = -1.0 if np.all(diag < 0.0) else 1.0
        lower = _icc0_factor(A, sign)
        return Icc0Preconditioner(n, lower, sign)

    raise ValueError(f"unknown preconditioner kind {kind!r}; expected one of {KINDS}")
