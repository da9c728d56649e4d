"""Matrix Market and plain-text vector exchange.

Matrices are written in ``coordinate real general`` format, vectors as one
value per line. Floats are rendered with %.17g so a write/read round trip is
bit-exact for float64.
"""

from __future__ import annotations

import os

import numpy as np

from .sparse import CsrMatrix, assemble_csr


def write_matrix_market(A: CsrMatrix, path: str | os.PathLike) -> None:
    with open(path, "w") as fh:
        fh.write("%%MatrixMarket matrix coordinate real general\n")
        fh.write(f"{A.n_rows} {A.n_cols} {A.nnz}\n")
        for i, j, v in A.to_triplets():
            fh.write("%d %d %.17g\n" % (i + 1, j + 1, v))


def read_matrix_market(path: str | os.PathLike) -> CsrMatrix:
    with open(path) as fh:
        header = fh.readline().strip().lower().split()
        if len(header) < 5 or header[0] != "%%matrixmarket":
            raise ValueError(f"{path}: not a Matrix Market file")
        if header[1:5] != ["matrix", "coordinate", "real", "general"]:
            raise ValueError(
                f"{path}: unsupported Matrix Market flavor {' '.join(header[1:5])}"
            )
        line = fh.readline()
        while line.startswith("%"):
            line = fh.readline()
        n_rows, n_cols, nnz = (int(t) for t in line.split())
        triplets = []
        for line in fh:
            line = line.strip()
            if not line:
                continue
            i, j, v = line.split()
            triplets.append((int(i) - 1, int(j) - 1, float(v)))
    if len(triplets) != nnz:
        raise ValueError(f"{path}: expected {nnz} entries, found {len(triplets)}")
    return assemble_csr(triplets, n_rows, n_cols)


def write_vector(x: np.ndarray, path: str | os.PathLike) -> None:
    with open(path, "w") as fh:
        for v in np.asarray(x, dtype=np.float64):
            fh.write("%.17g\n" % v)


def read_vector(path: str | os.PathLike) -> np.ndarray:
    with open(path) as fh:
        vals = [float(line) for line in fh if line.strip()]
    return np.asarray(vals, dtype=np.float64)
