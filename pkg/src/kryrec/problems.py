"""Parameterized PDE instances discretized to sparse systems on the unit square.

Four generators produce batches of related systems:

* Poisson: 5-point Laplacian, Chebyshev-polynomial boundary data and source.
* Darcy: flux-form finite volumes with a log-normal permeability field.
* Helmholtz: Laplacian plus a squared-wavenumber mass term, wavenumber from
  a Gaussian random field, random Dirichlet boundary data.
* Thermal: Laplace with random hot/cold Dirichlet sides and insulated
  (one-sided Neumann) top and bottom rows.

Sign convention: every assembled matrix reduces to the negative-diagonal
five-point stencil (diag -4, neighbors +1 on a uniform grid) in its
constant-coefficient limit; right-hand sides carry the matching h^2 scaling.
Each system also carries the parameter vector that generated it, which is
what the batch sorting operates on.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np
import scipy.linalg as sla
from numpy.polynomial import chebyshev as _cheb
from scipy.interpolate import RegularGridInterpolator
from scipy.spatial.distance import cdist

from .sorting import ParameterMatrix
from .sparse import CsrMatrix, assemble_csr

KINDS = ("poisson", "darcy", "helmholtz", "thermal")

DENSE_KL_CAP = 4096
COARSE_KL_GRID = 64
DEFAULT_HELMHOLTZ_K0 = 16.0

Seed = Union[int, tuple]
BoundaryFn = Union[float, Callable[[float, float], float]]


@dataclass(frozen=True)
class GrfSpec:
    """Squared-exponential Gaussian random field, truncated Karhunen-Loeve."""

    length_scale: float = 0.2
    variance: float = 1.0
    seed: Seed = 0
    kl_rank: int = 64

    def __post_init__(self):
        if not self.length_scale > 0:
            raise ValueError("length_scale must be positive")
        if not self.variance > 0:
            raise ValueError("variance must be positive")
        if self.kl_rank < 1:
            raise ValueError("kl_rank must be >= 1")


@dataclass(frozen=True)
class LinearSystem:
    """One assembled system of the batch: A x = b plus its generative parameters."""

    A: CsrMatrix
    b: np.ndarray
    params: ParameterMatrix
    grid: tuple[int, int]
    problem_kind: str
    id: int = 0

    @property
    def n(self) -> int:
        return self.A.n_rows


def _as_grid(grid) -> tuple[int, int]:
    if np.isscalar(grid):
        nx = ny = int(grid)
    else:
        nx, ny = (int(g) for g in grid)
    if nx < 2 or ny < 2:
        raise ValueError("grid must be at least 2 x 2")
    return nx, ny


def _interior_coords(nx: int, ny: int):
    """Interior node coordinates of the unit square, row-major (x fastest)."""
    hx = 1.0 / (nx + 1)
    hy = 1.0 / (ny + 1)
    xs = np.arange(1, nx + 1) * hx
    ys = np.arange(1, ny + 1) * hy
    xx, yy = np.meshgrid(xs, ys)  # shape (ny, nx)
    return xs, ys, np.column_stack([xx.ravel(), yy.ravel()])


class _KlSampler:
    """Cached KL factorization of the SE covariance on a node set.

    Above ``DENSE_KL_CAP`` nodes the expansion lives on a coarse grid and
    realizations are interpolated bilinearly onto the fine nodes.
    """

    def __init__(self, nx, ny, length_scale, variance, kl_rank):
        self.fine_grid = (nx, ny)
        if nx * ny <= DENSE_KL_CAP:
            cx, cy = nx, ny
        else:
            cx, cy = min(nx, COARSE_KL_GRID), min(ny, COARSE_KL_GRID)
        xs, ys, pts = _interior_coords(cx, cy)
        N = len(pts)
        rank = min(kl_rank, N)
        d2 = cdist(pts, pts, "sqeuclidean")
        cov = variance * np.exp(-d2 / (2.0 * length_scale**2))
        w, V = sla.eigh(cov, subset_by_index=[N - rank, N - 1])
        w = np.clip(w, 0.0, None)[::-1]
        V = V[:, ::-1]
        self.rank = rank
        self.basis = V * np.sqrt(w)
        self.coarse = (cx, cy)
        self._coarse_axes = (ys, xs)

    def sample(self, xi: np.ndarray) -> np.ndarray:
        field = self.basis @ xi
        cx, cy = self.coarse
        nx, ny = self.fine_grid
        if (cx, cy) == (nx, ny):
            return field
        interp = RegularGridInterpolator(
            self._coarse_axes,
            field.reshape(cy, cx),
            method="linear",
            bounds_error=False,
            fill_value=None,
        )
        _, _, pts = _interior_coords(nx, ny)
        return interp(pts[:, ::-1])  # interpolator axes are (y, x)


_KL_CACHE: dict = {}


def _kl_sampler(nx, ny, length_scale, variance, kl_rank) -> _KlSampler:
    key = (nx, ny, float(length_scale), float(variance), int(kl_rank))
    sampler = _KL_CACHE.get(key)
    if sampler is None:
        sampler = _KlSampler(nx, ny, length_scale, variance, kl_rank)
        _KL_CACHE[key] = sampler
    return sampler


def sample_grf(grid, spec: GrfSpec):
    """Draw one GRF realization on the interior nodes.

    Returns (field, xi): the field values row-major over the grid and the
    KL coefficient vector that generated them (the sorting parameters).
    """
    nx, ny = _as_grid(grid)
    sampler = _kl_sampler(nx, ny, spec.length_scale, spec.variance, spec.kl_rank)
    rng = np.random.default_rng(spec.seed)
    xi = rng.standard_normal(sampler.rank)
    return sampler.sample(xi), xi


def sample_chebyshev(degree: int, seed: Seed):
    """Random truncated Chebyshev series on [-1, 1].

    Coefficients are iid uniform(-1, 1); the evaluator is the standard
    Clenshaw recurrence. Returns (coefficients, evaluator).
    """
    if degree < 0:
        raise ValueError("degree must be >= 0")
    rng = np.random.default_rng(seed)
    coeffs = rng.uniform(-1.0, 1.0, size=degree + 1)

    def evaluate(t):
        return _cheb.chebval(t, coeffs)

    return coeffs, evaluate


def sample_boundary_grf(
    nx: int,
    ny: int,
    seed: Seed,
    length_scale: float = 0.5,
    variance: float = 1.0,
    rank: int = 8,
):
    """1-D GRF on the unit-square perimeter (periodic arc-length metric).

    Returns (g, xi) where g(x, y) evaluates the field at a boundary point.
    """
    hx = 1.0 / (nx + 1)
    hy = 1.0 / (ny + 1)
    s_vals = np.concatenate(
        [
            np.arange(0, nx + 2) * hx,  # bottom, s = x in [0, 1]
            1.0 + np.arange(1, ny + 2) * hy,  # right, s = 1 + y
            2.0 + np.arange(1, nx + 2) * hx,  # top, s = 2 + (1 - x) reversed below
            3.0 + np.arange(1, ny + 1) * hy,  # left, s = 3 + (1 - y) reversed below
        ]
    )
    s_vals = np.sort(np.unique(s_vals))
    gap = np.abs(s_vals[:, None] - s_vals[None, :])
    gap = np.minimum(gap, 4.0 - gap)  # perimeter is a closed loop
    cov = variance * np.exp(-(gap**2) / (2.0 * length_scale**2))
    N = len(s_vals)
    r = min(rank, N)
    w, V = sla.eigh(cov, subset_by_index=[N - r, N - 1])
    w = np.clip(w, 0.0, None)[::-1]
    V = V[:, ::-1]
    rng = np.random.default_rng(seed)
    xi = rng.standard_normal(r)
    values = (V * np.sqrt(w)) @ xi

    def arc(x, y):
        if y <= 0.0:
            return x
        if x >= 1.0:
            return 1.0 + y
        if y >= 1.0:
            return 3.0 - x
        return 4.0 - y

    def g(x, y):
        return float(np.interp(arc(x, y), s_vals, values, period=4.0))

    return g, xi


def _bc_callable(bc: BoundaryFn) -> Callable[[float, float], float]:
    if callable(bc):
        return bc
    val = float(bc)
    return lambda x, y: val


def _coord(i: int, n: int, h: float, endpoint: float) -> float:
    # endpoints exact so boundary functions can match on x/y in {0, 1}
    if i == 0:
        return 0.0
    if i == n + 1:
        return endpoint
    return i * h


def _five_point_system(nx, ny, hx, hy, bc, diag_shift=None, endpoints=(1.0, 1.0)):
    """h_x^2-scaled five-point Laplacian with Dirichlet data moved to b.

    Returns (triplets, b). ``diag_shift`` adds to the diagonal (already in
    scaled units); the stencil is diag -2(1 + r), x-neighbors 1 and
    y-neighbors r with r = (hx/hy)^2.
    """
    ratio = (hx / hy) ** 2
    center = -2.0 * (1.0 + ratio)
    bc = _bc_callable(bc)
    ex, ey = endpoints
    trip = []
    b = np.zeros(nx * ny)
    for iy in range(1, ny + 1):
        for ix in range(1, nx + 1):
            p = (iy - 1) * nx + (ix - 1)
            d = center if diag_shift is None else center + diag_shift[p]
            trip.append((p, p, d))
            for jx, jy, coeff in (
                (ix - 1, iy, 1.0),
                (ix + 1, iy, 1.0),
                (ix, iy - 1, ratio),
                (ix, iy + 1, ratio),
            ):
                if 1 <= jx <= nx and 1 <= jy <= ny:
                    q = (jy - 1) * nx + (jx - 1)
                    trip.append((p, q, coeff))
                else:
                    b[p] -= coeff * bc(_coord(jx, nx, hx, ex), _coord(jy, ny, hy, ey))
    return trip, b


def assemble_poisson(
    nx: int,
    ny: int,
    f_eval: BoundaryFn = 0.0,
    bc_eval: BoundaryFn = 0.0,
    spacing: Optional[float] = None,
    params: Optional[ParameterMatrix] = None,
    system_id: int = 0,
) -> LinearSystem:
    """Five-point Poisson system: h^2-scaled Laplacian, b = h^2 f + boundary terms.

    Default spacing is 1/(n+1) on the unit square; pass ``spacing`` to use a
    fixed mesh width instead (spacing 1 makes b carry raw f samples).
    """
    nx, ny = _as_grid((nx, ny))
    if spacing is not None:
        hx = hy = float(spacing)
        endpoints = ((nx + 1) * hx, (ny + 1) * hy)
    else:
        hx, hy = 1.0 / (nx + 1), 1.0 / (ny + 1)
        endpoints = (1.0, 1.0)
    trip, b = _five_point_system(nx, ny, hx, hy, bc_eval, endpoints=endpoints)
    f = _bc_callable(f_eval)
    for iy in range(1, ny + 1):
        for ix in range(1, nx + 1):
            p = (iy - 1) * nx + (ix - 1)
            b[p] += hx * hx * f(ix * hx, iy * hy)
    A = assemble_csr(trip, nx * ny, nx * ny)
    params = params or ParameterMatrix(np.zeros((1, 1)), problem_id=system_id)
    return LinearSystem(A, b, params, (nx, ny), "poisson", system_id)


def assemble_darcy(
    nx: int,
    ny: int,
    grf: GrfSpec,
    f_const: float = 1.0,
    system_id: int = 0,
) -> LinearSystem:
    """Darcy flow -div(K grad h) = f with K = exp(GRF), zero Dirichlet walls.

    Flux-form finite volumes with harmonic-mean face permeabilities; the
    matrix is symmetric and reduces to the Poisson stencil for K = 1. The
    h^2 row scaling flips the continuous sign, so b = -h^2 f.
    """
    nx, ny = _as_grid((nx, ny))
    hx = 1.0 / (nx + 1)
    hy = 1.0 / (ny + 1)
    ratio = (hx / hy) ** 2
    field, xi = sample_grf((nx, ny), grf)
    K = np.exp(field)

    def face(p, q):
        return 2.0 * K[p] * K[q] / (K[p] + K[q])

    trip = []
    b = np.full(nx * ny, -hx * hx * f_const)
    for iy in range(1, ny + 1):
        for ix in range(1, nx + 1):
            p = (iy - 1) * nx + (ix - 1)
            diag = 0.0
            for jx, jy, scale in (
                (ix - 1, iy, 1.0),
                (ix + 1, iy, 1.0),
                (ix, iy - 1, ratio),
                (ix, iy + 1, ratio),
            ):
                if 1 <= jx <= nx and 1 <= jy <= ny:
                    q = (jy - 1) * nx + (jx - 1)
                    kf = face(p, q)
                    trip.append((p, q, scale * kf))
                    diag -= scale * kf
                else:
                    diag -= scale * K[p]  # boundary face, wall value is zero
            trip.append((p, p, diag))
    A = assemble_csr(trip, nx * ny, nx * ny)
    params = ParameterMatrix(xi, problem_id=system_id)
    return LinearSystem(A, b, params, (nx, ny), "darcy", system_id)


def assemble_helmholtz(
    nx: int,
    ny: int,
    grf: GrfSpec,
    k0: float = DEFAULT_HELMHOLTZ_K0,
    bc_seed: Seed = 0,
    system_id: int = 0,
) -> LinearSystem:
    """Helmholtz system: scaled Laplacian plus (k(x) hx)^2 on the diagonal.

    The wavenumber field is k0 + GRF; Dirichlet boundary data comes from a
    seeded 1-D GRF on the perimeter so b is nonzero. Parameters are the
    field KL coefficients concatenated with the boundary draws.
    """
    nx, ny = _as_grid((nx, ny))
    if k0 < 0:
        raise ValueError("k0 must be >= 0")
    hx = 1.0 / (nx + 1)
    hy = 1.0 / (ny + 1)
    field, xi = sample_grf((nx, ny), grf)
    k_vals = k0 + field
    shift = (k_vals * hx) ** 2
    g, bc_xi = sample_boundary_grf(nx, ny, bc_seed)
    trip, b = _five_point_system(nx, ny, hx, hy, g, diag_shift=shift)
    A = assemble_csr(trip, nx * ny, nx * ny)
    params = ParameterMatrix(np.concatenate([xi, bc_xi]), problem_id=system_id)
    return LinearSystem(A, b, params, (nx, ny), "helmholtz", system_id)


def assemble_thermal(nx: int, ny: int, seed: Seed = 0, system_id: int = 0) -> LinearSystem:
    """Steady heat equation with random hot/cold walls and insulated lids.

    Left wall value ~ uniform(-100, 0), right wall ~ uniform(0, 100); the
    top and bottom unknown rows impose dT/dy = 0 through one-sided
    second-order stencils (the only nonsymmetric rows). Needs ny >= 3; a
    two-row grid has no interior rows and the insulated problem degenerates.
    """
    nx, ny = _as_grid((nx, ny))
    if ny < 3:
        raise ValueError("thermal problem needs ny >= 3 (insulated rows + interior)")
    rng = np.random.default_rng(seed)
    t_left = float(rng.uniform(-100.0, 0.0))
    t_right = float(rng.uniform(0.0, 100.0))

    hx = 1.0 / (nx + 1)
    hy = 1.0 / max(ny - 1, 1)
    ratio = (hx / hy) ** 2
    center = -2.0 * (1.0 + ratio)

    trip = []
    b = np.zeros(nx * ny)
    for iy in range(ny):  # iy = 0 is the bottom lid, iy = ny-1 the top lid
        for ix in range(1, nx + 1):
            p = iy * nx + (ix - 1)
            if iy == 0 or iy == ny - 1:
                step = nx if iy == 0 else -nx
                trip.append((p, p, 3.0))
                trip.append((p, p + step, -4.0))
                trip.append((p, p + 2 * step, 1.0))
                continue
            trip.append((p, p, center))
            for jx, q, coeff in (
                (ix - 1, p - 1, 1.0),
                (ix + 1, p + 1, 1.0),
                (ix, p - nx, ratio),
                (ix, p + nx, ratio),
            ):
                if jx < 1:
                    b[p] -= coeff * t_left
                elif jx > nx:
                    b[p] -= coeff * t_right
                else:
                    trip.append((p, q, coeff))
    A = assemble_csr(trip, nx * ny, nx * ny)
    params = ParameterMatrix(np.array([t_left, t_right]), problem_id=system_id)
    return LinearSystem(A, b, params, (nx, ny), "thermal", system_id)


def _poisson_instance(nx, ny, base_seed, idx, degree):
    edges = [sample_chebyshev(degree, (base_seed, idx, t)) for t in range(5)]
    (cb, fb), (ct, ft), (cl, fl), (cr, fr), (cf, ff) = edges

    def bc(x, y):
        if y == 0.0:
            return float(fb(2.0 * x - 1.0))
        if y == 1.0:
            return float(ft(2.0 * x - 1.0))
        if x == 0.0:
            return float(fl(2.0 * y - 1.0))
        return float(fr(2.0 * y - 1.0))

    def f(x, y):
        return 0.5 * float(ff(2.0 * x - 1.0) + ff(2.0 * y - 1.0))

    params = ParameterMatrix(np.concatenate([cb, ct, cl, cr, cf]), problem_id=idx)
    return assemble_poisson(nx, ny, f, bc, params=params, system_id=idx)


def generate_batch(
    kind: str,
    n_systems: int,
    grid,
    base_seed: int = 0,
    *,
    grf_length_scale: float = 0.2,
    grf_variance: float = 1.0,
    kl_rank: int = 64,
    helmholtz_k0: float = DEFAULT_HELMHOLTZ_K0,
    cheb_degree: int = 8,
    f_const: float = 1.0,
) -> list[LinearSystem]:
    """Deterministic batch of systems; system i derives from (base_seed, i).

    Randomness never depends on generation order, so batches are safe to
    produce in parallel and identical seeds give identical batches.
    """
    kind = kind.lower()
    if kind not in KINDS:
        raise ValueError(f"unknown problem kind {kind!r}; expected one of {KINDS}")
    if n_systems < 1:
        raise ValueError("n_systems must be >= 1")
    nx, ny = _as_grid(grid)

    systems = []
    for idx in range(n_systems):
        if kind == "poisson":
            sys_i = _poisson_instance(nx, ny, base_seed, idx, cheb_degree)
        elif kind == "darcy":
            spec = GrfSpec(grf_length_scale, grf_variance, (base_seed, idx), kl_rank)
            sys_i = assemble_darcy(nx, ny, spec, f_const=f_const, system_id=idx)
        elif kind == "helmholtz":
            spec = GrfSpec(
                grf_length_scale, grf_variance, (base_seed, idx, 0), kl_rank
            )
            sys_i = assemble_helmholtz(
                nx, ny, spec, k0=helmholtz_k0, bc_seed=(base_seed, idx, 1), system_id=idx
            )
        else:
            sys_i = assemble_thermal(nx, ny, (base_seed, idx), system_id=idx)
        systems.append(sys_i)
    return systems
