"""Krylov subspace recycling for sequences of related sparse linear systems.

Batches of parameterized PDE discretizations are ordered by parameter
similarity and solved sequentially with GCRO-DR, carrying a deflation
subspace from one system to the next; restarted GMRES provides the
independent-solve baseline and the benchmark harness measures the ratios.
"""

from .gcrodr import (
    DeflatedArnoldi,
    RecycleSpace,
    deflated_arnoldi,
    gcrodr_solve,
    harmonic_ritz_first_cycle,
    harmonic_ritz_subsequent,
    refresh_recycle,
)
from .gmres import (
    ArnoldiFactorization,
    SolveReport,
    SolverConfig,
    arnoldi_expand,
    gmres_solve,
)
from .harness import (
    AblationReport,
    BenchmarkConfig,
    BenchmarkTable,
    export_dataset,
    run_ablation,
    run_benchmark,
)
from .io import read_matrix_market, read_vector, write_matrix_market, write_vector
from .metrics import (
    SubspaceBasis,
    one_sided_distance,
    orthonormalize,
    smallest_eig_subspace,
)
from .precond import Preconditioner, ZeroPivotError, build_preconditioner
from .problems import (
    GrfSpec,
    LinearSystem,
    assemble_darcy,
    assemble_helmholtz,
    assemble_poisson,
    assemble_thermal,
    generate_batch,
    sample_chebyshev,
    sample_grf,
)
from .sorting import ParameterMatrix, frobenius_distance, greedy_sort, grouped_sort
from .sparse import CsrMatrix, assemble_csr, axpy, dot, eye, norm2, spmv

__version__ = "0.1.0"

__all__ = [
    "ArnoldiFactorization",
    "AblationReport",
    "BenchmarkConfig",
    "BenchmarkTable",
    "CsrMatrix",
    "DeflatedArnoldi",
    "GrfSpec",
    "LinearSystem",
    "ParameterMatrix",
    "Preconditioner",
    "RecycleSpace",
    "SolveReport",
    "SolverConfig",
    "SubspaceBasis",
    "ZeroPivotError",
    "arnoldi_expand",
    "assemble_csr",
    "assemble_darcy",
    "assemble_helmholtz",
    "assemble_poisson",
    "assemble_thermal",
    "axpy",
    "build_preconditioner",
    "deflated_arnoldi",
    "dot",
    "export_dataset",
    "eye",
    "frobenius_distance",
    "gcrodr_solve",
    "generate_batch",
    "gmres_solve",
    "greedy_sort",
    "grouped_sort",
    "harmonic_ritz_first_cycle",
    "harmonic_ritz_subsequent",
    "norm2",
    "one_sided_distance",
    "orthonormalize",
    "read_matrix_market",
    "read_vector",
    "refresh_recycle",
    "run_ablation",
    "run_benchmark",
    "sample_chebyshev",
    "sample_grf",
    "smallest_eig_subspace",
    "spmv",
    "write_matrix_market",
    "write_vector",
]
