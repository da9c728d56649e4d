"""Command-line entry points: gen, solve, bench, ablate.

Exit code is nonzero only on hard errors (bad input, I/O failures); solves
that merely hit the iteration cap report converged=false and exit 0.
"""

from __future__ import annotations

import argparse
import json
import sys

from .gcrodr import gcrodr_solve
from .gmres import SolverConfig, gmres_solve
from .harness import BenchmarkConfig, export_dataset, run_ablation, run_benchmark
from .io import read_matrix_market, read_vector, write_vector
from .precond import KINDS as PRECOND_KINDS
from .precond import build_preconditioner
from .problems import KINDS as PROBLEM_KINDS
from .problems import generate_batch


def _add_gen(sub):
    p = sub.add_parser("gen", help="generate a problem batch and export it")
    p.add_argument("--kind", required=True, choices=PROBLEM_KINDS)
    p.add_argument("--grid", type=int, required=True, help="grid side (square)")
    p.add_argument("--n", type=int, required=True, help="number of systems")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--length-scale", type=float, default=0.2)
    p.add_argument("--variance", type=float, default=1.0)
    p.add_argument("--kl-rank", type=int, default=64)
    p.add_argument("--k0", type=float, default=16.0, help="helmholtz wavenumber")
    p.add_argument("--cheb-degree", type=int, default=8)
    p.add_argument("--f-const", type=float, default=1.0)


def _add_solve(sub):
    p = sub.add_parser("solve", help="solve one exported system")
    p.add_argument("--matrix", required=True, help="Matrix Market file")
    p.add_argument("--rhs", required=True, help="vector file, one value per line")
    p.add_argument("--solver", choices=("gmres", "gcrodr"), default="gmres")
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--m", type=int, default=50)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--max-iter", type=int, default=10000)
    p.add_argument("--precond", choices=PRECOND_KINDS, default="none")
    p.add_argument("--sor-omega", type=float, default=1.0)
    p.add_argument("--bjacobi-block", type=int, default=64)
    p.add_argument("--out", help="write the solution vector here")


def _add_config_cmd(sub, name, help_text):
    p = sub.add_parser(name, help=help_text)
    p.add_argument("--config", required=True, help="JSON benchmark config")
    p.add_argument("--out-dir", help="override the config's output_dir")


def _cmd_gen(args) -> int:
    batch = generate_batch(
        args.kind,
        args.n,
        args.grid,
        base_seed=args.seed,
        grf_length_scale=args.length_scale,
        grf_variance=args.variance,
        kl_rank=args.kl_rank,
        helmholtz_k0=args.k0,
        cheb_degree=args.cheb_degree,
        f_const=args.f_const,
    )
    manifest = export_dataset(batch, None, args.out)
    print(f"wrote {len(batch)} systems to {args.out} (manifest: {manifest})")
    return 0


def _cmd_solve(args) -> int:
    A = read_matrix_market(args.matrix)
    b = read_vector(args.rhs)
    M = build_preconditioner(
        A, args.precond, sor_omega=args.sor_omega, bjacobi_block=args.bjacobi_block
    )
    cfg = SolverConfig(m=args.m, tol=args.tol, max_iter=args.max_iter, k=args.k)
    if args.solver == "gmres":
        report = gmres_solve(A, b, M=M, cfg=cfg)
    else:
        report, _ = gcrodr_solve(A, b, M=M, cfg=cfg)
    print(
        json.dumps(
            {
                "solver": args.solver,
                "n": A.n_rows,
                "iterations": report.iterations,
                "converged": bool(report.converged),
                "true_relative_residual": report.true_relative_residual,
                "wall_time": report.wall_time,
            },
            indent=2,
        )
    )
    if args.out:
        write_vector(report.x, args.out)
    return 0


def _load_config(args) -> BenchmarkConfig:
    cfg = BenchmarkConfig.from_json(args.config)
    if args.out_dir:
        cfg.output_dir = args.out_dir
    return cfg


def _cmd_bench(args) -> int:
    cfg = _load_config(args)
    table = run_benchmark(cfg)
    for row in table.rows:
        print(
            f"{row['problem_kind']} n={row['n']} tol={row['tol']:g} "
            f"precond={row['precond']}: iter ratio {row['iter_ratio']:.2f} "
            f"time ratio {row['time_ratio']:.2f} "
            f"(timeouts gmres={row['gmres_timeouts']} skr={row['skr_timeouts']})"
        )
    if cfg.output_dir:
        print(f"tables written to {cfg.output_dir}")
    return 0


def _cmd_ablate(args) -> int:
    cfg = _load_config(args)
    report = run_ablation(cfg)
    for name, stats in report.summary.items():
        print(
            f"{name}: mean delta {stats['mean_delta']:.4f}, "
            f"mean iterations {stats['mean_iterations']:.1f}, "
            f"mean time {stats['mean_wall_time']:.4f}s"
        )
    if cfg.output_dir:
        print(f"ablation written to {cfg.output_dir}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="kryrec",
        description="Sequences of sparse systems: recycled Krylov solves vs GMRES",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    _add_gen(sub)
    _add_solve(sub)
    _add_config_cmd(sub, "bench", "run the benchmark grid from a JSON config")
    _add_config_cmd(sub, "ablate", "run the sorted-vs-unsorted ablation")

    args = parser.parse_args(argv)
    handlers = {
        "gen": _cmd_gen,
        "solve": _cmd_solve,
        "bench": _cmd_bench,
        "ablate": _cmd_ablate,
    }
    try:
        return handlers[args.command](args)
    except Exception as exc:  # hard errors only; timeouts are data, not errors
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
