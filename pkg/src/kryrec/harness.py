"""Benchmark harness: batches, sorting, GMRES vs recycled solves, CSV reports.

A benchmark cell is one (grid size, tolerance, preconditioner) combination.
Within a cell both solvers consume identical assembled systems (verified by
matrix hashes in the raw output): GMRES solves them independently in the
original order, the recycled solver (SKR) runs sequentially in the sorted
order, threading its recycle space through the sequence. Ratios are
GMRES/SKR, so values above 1 favor recycling.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .gcrodr import gcrodr_solve
from .gmres import SolveReport, SolverConfig, gmres_solve
from .io import write_matrix_market, write_vector
from .metrics import SubspaceBasis, one_sided_distance, smallest_eig_subspace
from .precond import KINDS as PRECOND_KINDS
from .precond import build_preconditioner
from .problems import KINDS as PROBLEM_KINDS
from .problems import LinearSystem, generate_batch
from .sorting import greedy_sort, grouped_sort

SORT_MODES = ("sorted", "unsorted", "grouped")


@dataclass
class BenchmarkConfig:
    """Grid of benchmark cells plus generation and solver settings."""

    problem_kind: str
    grid_sizes: list = field(default_factory=lambda: [50])
    tolerances: list = field(default_factory=lambda: [1e-8])
    preconditioners: list = field(default_factory=lambda: ["sor"])
    n_systems: int = 50
    m: int = 50
    k: int = 10
    max_iter: int = 10000
    base_seed: int = 0
    sort_mode: str = "sorted"
    group_size: int = 1000
    output_dir: Optional[str] = None
    n_workers: int = 1
    sor_omega: float = 1.0
    bjacobi_block: int = 64
    grf_length_scale: float = 0.2
    grf_variance: float = 1.0
    kl_rank: int = 64
    helmholtz_k0: float = 16.0
    cheb_degree: int = 8
    f_const: float = 1.0

    def __post_init__(self):
        if self.problem_kind not in PROBLEM_KINDS:
            raise ValueError(f"unknown problem kind {self.problem_kind!r}")
        if not self.grid_sizes or not self.tolerances or not self.preconditioners:
            raise ValueError("grid_sizes, tolerances and preconditioners must be nonempty")
        for p in self.preconditioners:
            if p not in PRECOND_KINDS:
                raise ValueError(f"unknown preconditioner {p!r}")
        if self.sort_mode not in SORT_MODES:
            raise ValueError(f"sort_mode must be one of {SORT_MODES}")
        if self.n_systems < 1:
            raise ValueError("n_systems must be >= 1")
        if self.max_iter < self.m:
            raise ValueError("max_iter must be >= m")
        SolverConfig(m=self.m, tol=min(self.tolerances), max_iter=self.max_iter, k=self.k)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "BenchmarkConfig":
        return cls(**data)

    @classmethod
    def from_json(cls, path) -> "BenchmarkConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def config_hash(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()[:16]


@dataclass
class BenchmarkTable:
    """Aggregated cell rows; one row per (size, tolerance, preconditioner)."""

    rows: list
    raw: list
    config: BenchmarkConfig

    TABLE_FIELDS = [
        "problem_kind", "grid_side", "n", "tol", "precond", "n_systems",
        "gmres_iter_mean", "skr_iter_mean", "iter_ratio",
        "gmres_time_mean", "skr_time_mean", "time_ratio",
        "gmres_timeouts", "skr_timeouts",
        "assembly_time", "sort_time", "precond_build_time_mean",
    ]
    RAW_FIELDS = [
        "problem_kind", "grid_side", "n", "tol", "precond", "solver",
        "system_id", "solve_order_pos", "iterations", "converged", "timeout",
        "wall_time", "true_rel_residual", "matrix_hash",
        "precond_build_time", "assembly_time", "sort_time",
    ]

    def cell(self, grid_side, tol, precond) -> dict:
        for row in self.rows:
            if (
                row["grid_side"] == grid_side
                and row["tol"] == tol
                and row["precond"] == precond
            ):
                return row
        raise KeyError((grid_side, tol, precond))

    def write_csv(self, out_dir):
        os.makedirs(out_dir, exist_ok=True)
        table_path = os.path.join(out_dir, "table.csv")
        with open(table_path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=self.TABLE_FIELDS)
            writer.writeheader()
            writer.writerows(
                {k: row[k] for k in self.TABLE_FIELDS} for row in self.rows
            )
        raw_path = os.path.join(out_dir, "raw_solves.csv")
        with open(raw_path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=self.RAW_FIELDS)
            writer.writeheader()
            writer.writerows({k: row[k] for k in self.RAW_FIELDS} for row in self.raw)
        with open(os.path.join(out_dir, "config.json"), "w") as fh:
            json.dump(self.config.to_dict(), fh, indent=2, sort_keys=True)
        return table_path


def system_hash(system: LinearSystem) -> str:
    h = hashlib.sha256()
    for arr in (system.A.row_ptr, system.A.col_idx, system.A.values, system.b):
        h.update(np.ascontiguousarray(arr).tobytes())
    return h.hexdigest()[:16]


def _make_batch(cfg: BenchmarkConfig, side: int):
    return generate_batch(
        cfg.problem_kind,
        cfg.n_systems,
        side,
        base_seed=cfg.base_seed,
        grf_length_scale=cfg.grf_length_scale,
        grf_variance=cfg.grf_variance,
        kl_rank=cfg.kl_rank,
        helmholtz_k0=cfg.helmholtz_k0,
        cheb_degree=cfg.cheb_degree,
        f_const=cfg.f_const,
    )


def _solve_order(cfg: BenchmarkConfig, batch) -> tuple[list, float]:
    params = [s.params for s in batch]
    t0 = time.perf_counter()
    if cfg.sort_mode == "sorted":
        order = greedy_sort(params)
    elif cfg.sort_mode == "grouped":
        order = grouped_sort(params, cfg.group_size)
    else:
        order = list(range(len(batch)))
    return order, time.perf_counter() - t0


def _run_cell(cfg: BenchmarkConfig, side: int, tol: float, precond: str, batch=None):
    t_asm = time.perf_counter()
    if batch is None:
        batch = _make_batch(cfg, side)
    assembly_time = time.perf_counter() - t_asm
    hashes = [system_hash(s) for s in batch]

    solver_cfg = SolverConfig(m=cfg.m, tol=tol, max_iter=cfg.max_iter, k=cfg.k)
    preconds = []
    build_times = []
    for s in batch:
        t0 = time.perf_counter()
        preconds.append(
            build_preconditioner(
                s.A, precond, sor_omega=cfg.sor_omega, bjacobi_block=cfg.bjacobi_block
            )
        )
        build_times.append(time.perf_counter() - t0)

    order, sort_time = _solve_order(cfg, batch)

    common = {
        "problem_kind": cfg.problem_kind,
        "grid_side": side,
        "n": batch[0].n,
        "tol": tol,
        "precond": precond,
        "assembly_time": assembly_time,
        "sort_time": sort_time,
    }
    raw = []

    gmres_reports = []
    for i, s in enumerate(batch):
        rep = gmres_solve(s.A, s.b, M=preconds[i], cfg=solver_cfg)
        gmres_reports.append(rep)
        raw.append(
            dict(
                common,
                solver="gmres",
                system_id=s.id,
                solve_order_pos=i,
                iterations=rep.iterations,
                converged=rep.converged,
                timeout=not rep.converged,
                wall_time=rep.wall_time,
                true_rel_residual=rep.true_relative_residual,
                matrix_hash=hashes[i],
                precond_build_time=build_times[i],
            )
        )

    skr_reports = [None] * len(batch)
    recycle = None
    for pos, idx in enumerate(order):
        s = batch[idx]
        rep, recycle = gcrodr_solve(
            s.A,
            s.b,
            M=preconds[idx],
            cfg=solver_cfg,
            recycle_in=recycle,
            system_id=s.id,
        )
        skr_reports[idx] = rep
        raw.append(
            dict(
                common,
                solver="skr",
                system_id=s.id,
                solve_order_pos=pos,
                iterations=rep.iterations,
                converged=rep.converged,
                timeout=not rep.converged,
                wall_time=rep.wall_time,
                true_rel_residual=rep.true_relative_residual,
                matrix_hash=hashes[idx],
                precond_build_time=build_times[idx],
            )
        )

    def _mean(vals):
        return float(np.mean(vals))

    g_iters = _mean([r.iterations for r in gmres_reports])
    s_iters = _mean([r.iterations for r in skr_reports])
    g_time = _mean([r.wall_time for r in gmres_reports])
    s_time = _mean([r.wall_time for r in skr_reports])
    row = dict(
        common,
        n_systems=len(batch),
        gmres_iter_mean=g_iters,
        skr_iter_mean=s_iters,
        iter_ratio=g_iters / s_iters if s_iters else float("inf"),
        gmres_time_mean=g_time,
        skr_time_mean=s_time,
        time_ratio=g_time / s_time if s_time else float("inf"),
        gmres_timeouts=sum(not r.converged for r in gmres_reports),
        skr_timeouts=sum(not r.converged for r in skr_reports),
        precond_build_time_mean=_mean(build_times),
    )
    return row, raw, gmres_reports, skr_reports


def _cell_task(cfg_dict, side, tol, precond):
    cfg = BenchmarkConfig.from_dict(cfg_dict)
    row, raw, _, _ = _run_cell(cfg, side, tol, precond)
    return row, raw


def run_benchmark(cfg: BenchmarkConfig, keep_reports: bool = False):
    """Run every cell of the tolerance x preconditioner x size grid.

    Returns a BenchmarkTable (cells may run in a process pool when
    ``cfg.n_workers`` > 1). Per-solve failures surface as timeouts, never as
    grid aborts. When ``keep_reports`` is set the per-cell SolveReports are
    attached for downstream checks (serial mode only).
    """
    cells = [
        (side, tol, precond)
        for side in cfg.grid_sizes
        for tol in cfg.tolerances
        for precond in cfg.preconditioners
    ]
    rows, raw, reports = [], [], {}
    if cfg.n_workers > 1 and not keep_reports:
        with ProcessPoolExecutor(max_workers=cfg.n_workers) as pool:
            futures = [
                pool.submit(_cell_task, cfg.to_dict(), side, tol, precond)
                for side, tol, precond in cells
            ]
            for fut in futures:
                row, cell_raw = fut.result()
                rows.append(row)
                raw.extend(cell_raw)
    else:
        for side, tol, precond in cells:
            row, cell_raw, g_reps, s_reps = _run_cell(cfg, side, tol, precond)
            rows.append(row)
            raw.extend(cell_raw)
            if keep_reports:
                reports[(side, tol, precond)] = (g_reps, s_reps)

    table = BenchmarkTable(rows=rows, raw=raw, config=cfg)
    if keep_reports:
        table.reports = reports
    if cfg.output_dir:
        table.write_csv(cfg.output_dir)
    return table


@dataclass
class AblationReport:
    """Per-system recycle-quality series under sorted vs unsorted orderings."""

    rows: list  # ordering, pos, system_id, delta, iterations, wall_time, converged
    summary: dict
    config: BenchmarkConfig

    FIELDS = [
        "ordering", "solve_order_pos", "system_id", "delta",
        "iterations", "wall_time", "converged",
    ]

    def deltas(self, ordering: str) -> np.ndarray:
        return np.asarray(
            [r["delta"] for r in self.rows if r["ordering"] == ordering and r["delta"] is not None]
        )

    def write_csv(self, out_dir):
        os.makedirs(out_dir, exist_ok=True)
        path = os.path.join(out_dir, "ablation.csv")
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=self.FIELDS)
            writer.writeheader()
            writer.writerows({k: row[k] for k in self.FIELDS} for row in self.rows)
        with open(os.path.join(out_dir, "ablation_summary.json"), "w") as fh:
            json.dump(self.summary, fh, indent=2, sort_keys=True)
        return path


def run_ablation(cfg: BenchmarkConfig, batch=None) -> AblationReport:
    """Compare recycled solves with and without the similarity sort.

    Uses the first grid size / tolerance / preconditioner of the config.
    For each ordering the recycle space is threaded through the sequence and
    the one-sided distance between each system's small-eigenvalue subspace
    (of the preconditioned operator) and the incoming recycle space is
    recorded; the subspace oracle is computed once per system and shared by
    both orderings.
    """
    side = cfg.grid_sizes[0]
    tol = cfg.tolerances[0]
    precond = cfg.preconditioners[0]
    if batch is None:
        batch = _make_batch(cfg, side)
    solver_cfg = SolverConfig(m=cfg.m, tol=tol, max_iter=cfg.max_iter, k=cfg.k)

    preconds = [
        build_preconditioner(
            s.A, precond, sor_omega=cfg.sor_omega, bjacobi_block=cfg.bjacobi_block
        )
        for s in batch
    ]
    eig_subspaces = {}

    def subspace(i):
        if i not in eig_subspaces:
            eig_subspaces[i] = smallest_eig_subspace(batch[i].A, preconds[i], cfg.k)
        return eig_subspaces[i]

    params = [s.params for s in batch]
    orderings = {
        "sorted": greedy_sort(params),
        "unsorted": list(range(len(batch))),
    }

    rows = []
    summary = {}
    for name, order in orderings.items():
        recycle = None
        iters, times, deltas = [], [], []
        for pos, idx in enumerate(order):
            s = batch[idx]
            rep, recycle = gcrodr_solve(
                s.A,
                s.b,
                M=preconds[idx],
                cfg=solver_cfg,
                recycle_in=recycle,
                system_id=s.id,
                collect_diagnostics=True,
            )
            delta = None
            incoming = rep.diagnostics.get("refreshed_space")
            if pos > 0 and incoming is not None and incoming.k > 0:
                delta = one_sided_distance(subspace(idx), SubspaceBasis(incoming.C))
                deltas.append(delta)
            iters.append(rep.iterations)
            times.append(rep.wall_time)
            rows.append(
                {
                    "ordering": name,
                    "solve_order_pos": pos,
                    "system_id": s.id,
                    "delta": delta,
                    "iterations": rep.iterations,
                    "wall_time": rep.wall_time,
                    "converged": rep.converged,
                }
            )
        summary[name] = {
            "mean_delta": float(np.mean(deltas)) if deltas else 0.0,
            "mean_iterations": float(np.mean(iters)),
            "mean_wall_time": float(np.mean(times)),
            "timeouts": int(sum(1 for r in rows if r["ordering"] == name and not r["converged"])),
        }

    report = AblationReport(rows=rows, summary=summary, config=cfg)
    if cfg.output_dir:
        report.write_csv(cfg.output_dir)
    return report


def export_dataset(
    batch: Sequence[LinearSystem],
    reports: Optional[Sequence[Optional[SolveReport]]],
    out_dir,
    order: Optional[Sequence[int]] = None,
    config: Optional[BenchmarkConfig] = None,
) -> str:
    """Write matrices, right-hand sides, solutions and a JSON manifest.

    ``reports`` may be None (dataset without solutions, e.g. the ``gen``
    command) or contain None entries; non-converged solves are flagged in
    the manifest but still exported. Returns the manifest path.
    """
    os.makedirs(out_dir, exist_ok=True)
    entries = []
    for i, system in enumerate(batch):
        stem = f"system_{system.id:04d}"
        mtx = f"{stem}.mtx"
        rhs = f"{stem}_rhs.txt"
        write_matrix_market(system.A, os.path.join(out_dir, mtx))
        write_vector(system.b, os.path.join(out_dir, rhs))
        entry = {
            "id": system.id,
            "problem_kind": system.problem_kind,
            "grid": list(system.grid),
            "matrix_file": mtx,
            "rhs_file": rhs,
            "matrix_hash": system_hash(system),
        }
        rep = reports[i] if reports is not None else None
        if rep is not None:
            sol = f"{stem}_x.txt"
            write_vector(rep.x, os.path.join(out_dir, sol))
            entry.update(
                solution_file=sol,
                iterations=rep.iterations,
                converged=bool(rep.converged),
                true_relative_residual=rep.true_relative_residual,
                wall_time=rep.wall_time,
            )
        entries.append(entry)

    params_path = os.path.join(out_dir, "params.csv")
    with open(params_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["system_id", "params"])
        for system in batch:
            writer.writerow(
                [system.id, " ".join("%.17g" % v for v in system.params.flat)]
            )

    manifest = {
        "n_systems": len(batch),
        "solve_order": list(order) if order is not None else list(range(len(batch))),
        "config_hash": config.config_hash() if config is not None else None,
        "systems": entries,
    }
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return path
