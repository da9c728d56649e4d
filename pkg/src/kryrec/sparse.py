"""Double-precision CSR matrix and dense vector kernels shared by all solvers.

The CSR container is immutable after construction: the index/value arrays are
frozen and a cached scipy view is used for the performance-critical products.
Vectors are plain 1-D float64 ``numpy`` arrays throughout the package.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as _sp


class CsrMatrix:
    """Sparse real matrix in compressed-sparse-row form.

    Invariants enforced at construction:

    * ``row_ptr`` is nondecreasing with ``row_ptr[0] == 0`` and
      ``row_ptr[-1] == len(values)``,
    * column indices are strictly increasing within each row and in range,
    * all stored values are finite.

    Explicitly stored zeros are kept; they are part of the sparsity pattern.
    """

    __slots__ = ("n_rows", "n_cols", "row_ptr", "col_idx", "values", "_scipy")

    def __init__(self, n_rows, n_cols, row_ptr, col_idx, values):
        n_rows = int(n_rows)
        n_cols = int(n_cols)
        row_ptr = np.ascontiguousarray(row_ptr, dtype=np.int64)
        col_idx = np.ascontiguousarray(col_idx, dtype=np.int64)
        values = np.ascontiguousarray(values, dtype=np.float64)

        if n_rows < 0 or n_cols < 0:
            raise ValueError("matrix dimensions must be nonnegative")
        if row_ptr.shape != (n_rows + 1,):
            raise ValueError(
                f"row_ptr has length {row_ptr.shape[0]}, expected {n_rows + 1}"
            )
        if row_ptr[0] != 0 or row_ptr[-1] != len(values):
            raise ValueError("row_ptr must start at 0 and end at nnz")
        if np.any(np.diff(row_ptr) < 0):
            raise ValueError("row_ptr must be nondecreasing")
        if col_idx.shape != values.shape:
            raise ValueError("col_idx and values must have equal length")
        if len(col_idx) and (col_idx.min() < 0 or col_idx.max() >= n_cols):
            raise ValueError("column index out of range")
        for i in range(n_rows):
            cols = col_idx[row_ptr[i] : row_ptr[i + 1]]
            if len(cols) > 1 and np.any(np.diff(cols) <= 0):
                raise ValueError(f"row {i}: column indices not strictly increasing")
        if not np.all(np.isfinite(values)):
            raise ValueError("matrix values must be finite")

        for arr in (row_ptr, col_idx, values):
            arr.flags.writeable = False
        self.n_rows = n_rows
        self.n_cols = n_cols
        self.row_ptr = row_ptr
        self.col_idx = col_idx
        self.values = values
        self._scipy = None

    @property
    def shape(self):
        return (self.n_rows, self.n_cols)

    @property
    def nnz(self):
        return len(self.values)

    def to_scipy(self) -> _sp.csr_matrix:
        """Zero-copy scipy CSR view (cached)."""
        if self._scipy is None:
            self._scipy = _sp.csr_matrix(
                (self.values, self.col_idx, self.row_ptr),
                shape=(self.n_rows, self.n_cols),
            )
        return self._scipy

    @classmethod
    def from_scipy(cls, mat) -> "CsrMatrix":
        csr = _sp.csr_matrix(mat)
        csr.sort_indices()
        return cls(csr.shape[0], csr.shape[1], csr.indptr, csr.indices, csr.data)

    def to_dense(self) -> np.ndarray:
        return self.to_scipy().toarray()

    def to_triplets(self):
        """Canonical (row, col, value) list in row-major order."""
        rows = np.repeat(np.arange(self.n_rows), np.diff(self.row_ptr))
        return list(zip(rows.tolist(), self.col_idx.tolist(), self.values.tolist()))

    def diagonal(self) -> np.ndarray:
        return self.to_scipy().diagonal()

    def transpose(self) -> "CsrMatrix":
        return CsrMatrix.from_scipy(self.to_scipy().T)

    def is_symmetric(self, tol: float = 0.0) -> bool:
        diff = self.to_scipy() - self.to_scipy().T
        if diff.nnz == 0:
            return True
        return float(np.max(np.abs(diff.data))) <= tol

    def __repr__(self):
        return f"CsrMatrix(shape={self.shape}, nnz={self.nnz})"


def assemble_csr(
    triplets: Iterable[tuple[int, int, float]], n_rows: int, n_cols: int
) -> CsrMatrix:
    """Build a CSR matrix from COO triplets; duplicate entries are summed.

    Entries that cancel to zero stay in the pattern (they came from explicit
    triplets). Raises ``ValueError`` naming the first offending triplet when
    an index is out of range.
    """
    trip = list(triplets)
    if not trip:
        return CsrMatrix(n_rows, n_cols, np.zeros(n_rows + 1, dtype=np.int64), [], [])

    rows = np.asarray([t[0] for t in trip], dtype=np.int64)
    cols = np.asarray([t[1] for t in trip], dtype=np.int64)
    vals = np.asarray([t[2] for t in trip], dtype=np.float64)

    bad = (rows < 0) | (rows >= n_rows) | (cols < 0) | (cols >= n_cols)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise ValueError(
            f"triplet ({trip[i][0]}, {trip[i][1]}, {trip[i][2]}) is out of range "
            f"for a {n_rows}x{n_cols} matrix"
        )

    order = np.lexsort((cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    # collapse duplicates: boundaries where (row, col) changes
    new_entry = np.ones(len(rows), dtype=bool)
    new_entry[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
    starts = np.flatnonzero(new_entry)
    summed = np.add.reduceat(vals, starts)
    rows, cols = rows[starts], cols[starts]

    row_ptr = np.zeros(n_rows + 1, dtype=np.int64)
    np.add.at(row_ptr, rows + 1, 1)
    row_ptr = np.cumsum(row_ptr)
    return CsrMatrix(n_rows, n_cols, row_ptr, cols, summed)


def spmv(A: CsrMatrix, x: np.ndarray) -> np.ndarray:
    """Matrix-vector product y = A x."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (A.n_cols,):
        raise ValueError(f"vector length {x.shape} does not match {A.n_cols} columns")
    return A.to_scipy() @ x


def dot(x: np.ndarray, y: np.ndarray) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"length mismatch: {x.shape} vs {y.shape}")
    return float(np.dot(x, y))


def norm2(x: np.ndarray) -> float:
    return float(np.linalg.norm(np.asarray(x, dtype=np.float64)))


def axpy(alpha: float, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Return y + alpha * x."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"length mismatch: {x.shape} vs {y.shape}")
    return y + alpha * x


def as_vector(values: Sequence[float]) -> np.ndarray:
    """Validate and convert to a finite 1-D float64 vector."""
    v = np.ascontiguousarray(values, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError("expected a 1-D vector")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector entries must be finite")
    return v


def eye(n: int) -> CsrMatrix:
    """n-by-n identity in CSR form."""
    idx = np.arange(n, dtype=np.int64)
    return CsrMatrix(n, n, np.arange(n + 1, dtype=np.int64), idx, np.ones(n))
