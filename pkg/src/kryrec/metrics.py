"""Subspace-geometry diagnostics for recycling quality.

The one-sided distance delta(Q, C) = ||(I - C C^T) Q Q^T||_2 is the sine of
the largest principal angle from span(Q) into span(C); small delta between a
system's small-eigenvalue invariant subspace and the incoming recycle space
predicts fast recycled convergence.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .gcrodr import _rank_revealing_qr, _select_smallest_real_basis
from .precond import IdentityPreconditioner, Preconditioner
from .sparse import CsrMatrix

DENSE_EIG_CAP = 4000


@dataclass(frozen=True)
class SubspaceBasis:
    """Orthonormal basis Q (n x d) of a subspace."""

    Q: np.ndarray

    @property
    def dim(self) -> int:
        return self.Q.shape[1]

    @property
    def ambient(self) -> int:
        return self.Q.shape[0]


def orthonormalize(M: np.ndarray, rtol: float = 1e-12) -> SubspaceBasis:
    """Orthonormal basis of the column span of M.

    Rank-deficient columns are dropped with a warning; an all-zero input
    yields an empty basis.
    """
    M = np.atleast_2d(np.asarray(M, dtype=np.float64))
    if M.shape[1] > 0 and not np.any(M):
        return SubspaceBasis(Q=np.zeros((M.shape[0], 0)))
    Q, _, _ = _rank_revealing_qr(M, rtol)
    if Q.shape[1] < M.shape[1]:
        warnings.warn(
            f"orthonormalize dropped {M.shape[1] - Q.shape[1]} deficient columns",
            stacklevel=2,
        )
    return SubspaceBasis(Q=Q)


def one_sided_distance(Q: SubspaceBasis, C: SubspaceBasis) -> float:
    """delta(Q, C) = largest singular value of (I - C C^T) Q, in [0, 1].

    Conventions for empty bases: delta = 0 when Q is empty (nothing to
    miss), delta = 1 when C is empty but Q is not.
    """
    if Q.dim == 0:
        return 0.0
    if C.dim == 0:
        return 1.0
    if Q.ambient != C.ambient:
        raise ValueError("bases live in different ambient dimensions")
    T = Q.Q - C.Q @ (C.Q.T @ Q.Q)
    smax = float(np.linalg.svd(T, compute_uv=False)[0])
    return float(min(max(smax, 0.0), 1.0))


def smallest_eig_subspace(
    A: CsrMatrix,
    M: Optional[Preconditioner],
    k: int,
    dense_cap: int = DENSE_EIG_CAP,
) -> SubspaceBasis:
    """Invariant subspace of M^{-1} A for its k smallest-magnitude eigenvalues.

    Dense eigendecomposition; refuses matrices above ``dense_cap`` rows
    since this is a diagnostic oracle, not a production path. Conjugate
    pairs are kept whole, so the basis may have k + 1 columns.
    """
    n = A.n_rows
    if n > dense_cap:
        raise ValueError(
            f"smallest_eig_subspace is a dense diagnostic; n = {n} exceeds the "
            f"cap of {dense_cap}"
        )
    dense = A.to_dense()
    if M is not None and not isinstance(M, IdentityPreconditioner):
        dense = M.apply(dense)
    vals, vecs = np.linalg.eig(dense)
    basis, _ = _select_smallest_real_basis(vals, vecs, k)
    return SubspaceBasis(Q=basis)
