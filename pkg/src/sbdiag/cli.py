"""Command-line front end: solve, verify, bench.

Exit codes: 0 success/converged, 1 input or usage error, 2 solver ran but
did not converge.  Reports are human text by default or JSON with --json
(schema_version 1).
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from typing import Optional

import numpy as np

from . import synth
from .apply import HamiltonianApplier, build_spin_tables
from .basis import SampleFormatError, SelectedBasis, ingest_samples
from .davidson import DavidsonOptions, davidson_solve
from .distsim import DistributedApplier, PartitionError, make_partition, overlap_stats
from .integrals import FcidumpError, parse_fcidump
from .oracle import DEFAULT_CAP, assemble_dense, dense_eigensolve

__all__ = ["main", "cmd_solve", "cmd_verify", "cmd_bench"]

SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_INPUT_ERROR = 1
EXIT_NOT_CONVERGED = 2


class InputError(Exception):
    """User-facing input problem; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on usage errors; we reserve 2 for
    "ran but did not converge", so usage problems are remapped to 1."""

    def error(self, message):
        raise InputError(message)


# -- instance loading -----------------------------------------------------------


def _parse_gen_random(text: str):
    try:
        norb, na, nb, seed = (int(x) for x in text.split(","))
    except ValueError:
        raise InputError(
            f"--gen-random expects NORB,NA,NB,SEED (four integers), got {text!r}"
        ) from None
    if not (0 < norb <= 64 and 0 <= na <= norb and 0 <= nb <= norb):
        raise InputError(f"--gen-random values out of range: {text}")
    return norb, na, nb, seed


def _load_instance(args) -> tuple[SelectedBasis, object, dict]:
    """Returns (basis, integral table, ingest/bookkeeping info)."""
    info: dict = {}
    if args.gen_random:
        norb, na, nb, seed = _parse_gen_random(args.gen_random)
        table = synth.random_integrals(norb, seed)
        if args.mode == "explicit":
            cap = math.comb(norb, na) * math.comb(norb, nb)
            basis = synth.random_explicit_basis(norb, na, nb, min(args.strings, cap), seed + 1)
        else:
            n_a = min(args.strings, math.comb(norb, na))
            n_b = min(args.strings, math.comb(norb, nb))
            basis = synth.random_product_basis(norb, na, nb, n_a, n_b, seed + 1)
        info["generator"] = {"norb": norb, "n_alpha": na, "n_beta": nb, "seed": seed}
        return basis, table, info

    if not args.fcidump or not args.samples:
        raise InputError("either --gen-random or both --fcidump and --samples are required")
    try:
        table = parse_fcidump(args.fcidump)
    except FileNotFoundError:
        raise InputError(f"cannot read integral file {args.fcidump}") from None
    except FcidumpError as exc:
        raise InputError(f"{args.fcidump}: {exc}") from None

    nelec = table.nelec if table.nelec is not None else 0
    ms2 = table.ms2 if table.ms2 is not None else 0
    n_alpha = (nelec + ms2) // 2
    n_beta = nelec - n_alpha
    if n_alpha < 0 or n_beta < 0 or n_alpha + n_beta != nelec:
        raise InputError(f"inconsistent NELEC={nelec} / MS2={ms2} in {args.fcidump}")

    try:
        with open(args.samples, encoding="utf-8") as stream:
            basis, report = ingest_samples(stream, table.norb, n_alpha, n_beta, args.mode)
    except FileNotFoundError:
        raise InputError(f"cannot read samples file {args.samples}") from None
    except SampleFormatError as exc:
        raise InputError(f"{args.samples}: {exc}") from None

    if basis.dimension == 0:
        raise InputError(
            f"empty basis: none of the {report.n_lines} sample lines passed the "
            f"{n_alpha}a+{n_beta}b electron filter"
        )
    info["ingest"] = {
        "n_lines": report.n_lines,
        "n_filtered": report.n_filtered,
        "n_duplicates": report.n_duplicates,
    }
    info["det_counts"] = report.det_counts
    return basis, table, info


def _start_vector(basis: SelectedBasis, det_counts) -> Optional[np.ndarray]:
    """Sampling-informed start: determinant multiplicities as weights."""
    if not det_counts:
        return None
    x0 = np.zeros(basis.dimension)
    for det, count in det_counts.items():
        try:
            x0[basis.index_of(det)] = float(count)
        except KeyError:
            continue
    norm = np.linalg.norm(x0)
    return x0 / norm if norm > 0 else None


# -- reports ----------------------------------------------------------------------


def _emit(report: dict, args) -> None:
    if args.json:
        text = json.dumps(report, indent=2, sort_keys=True)
    else:
        text = _format_text(report)
    if getattr(args, "out", None):
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _format_text(report: dict) -> str:
    lines = []

    def walk(prefix: str, value):
        if isinstance(value, dict):
            for key in value:
                walk(f"{prefix}{key}." if prefix else f"{key}.", value[key]) if isinstance(
                    value[key], dict
                ) else lines.append(f"{prefix}{key} = {_fmt(value[key])}")
        else:
            lines.append(f"{prefix} = {_fmt(value)}")

    walk("", report)
    return "\n".join(lines)


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.12g}"
    if isinstance(value, list):
        return "[" + ", ".join(_fmt(v) for v in value) + "]"
    return str(value)


def _basis_block(basis: SelectedBasis) -> dict:
    out = {"mode": basis.mode, "dimension": basis.dimension}
    if basis.mode == "product":
        out["n_alpha_strings"] = len(basis.alpha_strings)
        out["n_beta_strings"] = len(basis.beta_strings)
    return out


# -- solve -------------------------------------------------------------------------


def _davidson_options(args, n: int) -> DavidsonOptions:
    return DavidsonOptions(
        n_roots=args.nroots,
        tol_residual=args.tol,
        max_iters=args.max_iter,
        max_subspace=min(args.max_subspace, max(args.nroots, n)),
        restart_keep=min(args.restart_keep, min(args.max_subspace, max(args.nroots, n))),
        precond_delta=args.delta,
    )


def cmd_solve(args) -> int:
    basis, table, info = _load_instance(args)
    n = basis.dimension
    if args.nroots > n:
        raise InputError(f"cannot extract {args.nroots} roots from dimension {n}")

    exec_policy = "deterministic" if args.deterministic else "parallel"
    if args.workers > 1:
        if basis.mode != "product":
            raise InputError("--workers > 1 requires product mode (alpha-block partition)")
        try:
            partition = make_partition(len(basis.alpha_strings), args.workers)
        except PartitionError as exc:
            raise InputError(str(exc)) from None
        applier = DistributedApplier(
            basis,
            table,
            partition=partition,
            overlap=args.overlap == "on",
            transfer_delay=args.delay,
        )
        diag = np.concatenate(applier._diags)
    else:
        applier = HamiltonianApplier(basis, table, exec_policy=exec_policy)
        diag = applier.diag

    opts = _davidson_options(args, n)
    x0 = _start_vector(basis, info.get("det_counts"))
    t0 = time.perf_counter()
    result = davidson_solve(applier, diag, x0=x0, opts=opts)
    solve_s = time.perf_counter() - t0

    apply_times = result.stats.apply_seconds
    report = {
        "schema_version": SCHEMA_VERSION,
        "command": "solve",
        "basis": _basis_block(basis),
        "energies": [float(e) for e in result.energies],
        "residual_norms": [float(r) for r in result.residual_norms],
        "converged": result.stats.converged,
        "iterations": result.stats.iterations,
        "n_applies": result.stats.n_applies,
        "restarts": result.stats.restarts,
        "breakdowns": result.stats.breakdowns,
        "apply_seconds": {
            "min": float(np.min(apply_times)),
            "mean": float(np.mean(apply_times)),
            "max": float(np.max(apply_times)),
        },
        "solve_seconds": solve_s,
        "workers": args.workers,
    }
    if "ingest" in info:
        report["ingest"] = info["ingest"]
    if "generator" in info:
        report["generator"] = info["generator"]
    if args.workers > 1 and applier.last_run is not None:
        ov = overlap_stats(applier.last_run)
        report["overlap"] = {
            "enabled": ov.overlap,
            "transfer_delay": ov.transfer_delay,
            "overlap_ratio": ov.overlap_ratio,
            "rebuilds_per_worker": applier.rebuild_counts,
        }
    _emit(report, args)
    return EXIT_OK if result.stats.converged else EXIT_NOT_CONVERGED


# -- verify ------------------------------------------------------------------------


def cmd_verify(args) -> int:
    basis, table, info = _load_instance(args)
    n = basis.dimension
    if n > args.oracle_cap:
        raise InputError(
            f"dimension {n} exceeds the oracle cap {args.oracle_cap}; "
            "shrink the instance or raise --oracle-cap"
        )
    dense = assemble_dense(basis, table, cap=args.oracle_cap)
    evals, _ = dense_eigensolve(dense, cap=args.oracle_cap)

    applier = HamiltonianApplier(basis, table, exec_policy="deterministic")
    opts = _davidson_options(args, n)
    result = davidson_solve(applier, applier.diag, opts=opts)

    delta = abs(float(result.energies[0]) - float(evals[0]))
    passed = bool(result.stats.converged and delta <= args.tol_match)
    report = {
        "schema_version": SCHEMA_VERSION,
        "command": "verify",
        "basis": _basis_block(basis),
        "davidson_energy": float(result.energies[0]),
        "oracle_energy": float(evals[0]),
        "delta": delta,
        "tolerance": args.tol_match,
        "converged": result.stats.converged,
        "passed": passed,
    }
    _emit(report, args)
    return EXIT_OK if passed else EXIT_NOT_CONVERGED


# -- bench -------------------------------------------------------------------------


def cmd_bench(args) -> int:
    basis, table, info = _load_instance(args)
    if basis.mode != "product":
        raise InputError("bench requires product mode")
    try:
        workers = [int(w) for w in args.workers_list.split(",")]
    except ValueError:
        raise InputError(f"--workers expects a comma list of integers, got {args.workers_list!r}")
    if not workers or any(w < 1 for w in workers):
        raise InputError("worker counts must be positive")

    tables = build_spin_tables(basis)
    rng = np.random.default_rng(12345)
    x = rng.standard_normal(basis.dimension)

    rows = []
    t1_mean = None
    for p in sorted(set(workers)):
        try:
            partition = make_partition(len(basis.alpha_strings), p)
        except PartitionError as exc:
            raise InputError(str(exc)) from None
        applier = DistributedApplier(
            basis, table, tables=tables, partition=partition,
            overlap=args.overlap == "on", transfer_delay=args.delay,
        )
        applier.apply(x)  # untimed warm pass
        times = []
        for _ in range(args.repeats):
            t0 = time.perf_counter()
            applier.apply(x)
            times.append(time.perf_counter() - t0)
        mean = float(np.mean(times))
        if p == 1 or t1_mean is None:
            t1_mean = mean if p == 1 else t1_mean
        rows.append({"workers": p, "mean_s": mean, "min_s": float(np.min(times)),
                     "max_s": float(np.max(times))})
    baseline = t1_mean if t1_mean is not None else rows[0]["mean_s"] * rows[0]["workers"]
    for row in rows:
        row["speedup"] = baseline / row["mean_s"]
        row["efficiency"] = baseline / (row["workers"] * row["mean_s"])

    report = {
        "schema_version": SCHEMA_VERSION,
        "command": "bench",
        "basis": _basis_block(basis),
        "repeats": args.repeats,
        "mult": rows,
    }
    if args.json:
        _emit(report, args)
    else:
        lines = [
            f"mult timing over {args.repeats} repeats, N={basis.dimension}",
            f"{'workers':>8} {'mean_s':>12} {'min_s':>12} {'max_s':>12} "
            f"{'speedup':>9} {'E_p':>7}",
        ]
        lines += [
            f"{row['workers']:>8d} {row['mean_s']:>12.6f} {row['min_s']:>12.6f} "
            f"{row['max_s']:>12.6f} {row['speedup']:>9.3f} {row['efficiency']:>7.3f}"
            for row in rows
        ]
        text = "\n".join(lines)
        if getattr(args, "out", None):
            with open(args.out, "w", encoding="utf-8") as fh:
                fh.write(text + "\n")
        else:
            print(text)
    return EXIT_OK


# -- argument wiring -----------------------------------------------------------------


def _add_instance_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--fcidump", help="FCIDUMP integral file")
    p.add_argument("--samples", help="sampled configurations, one 0/1 line each")
    p.add_argument("--gen-random", metavar="NORB,NA,NB,SEED",
                   help="synthetic instance instead of input files")
    p.add_argument("--strings", type=int, default=50,
                   help="string count per sector for --gen-random (default 50)")
    p.add_argument("--mode", choices=["product", "explicit"], default="product")
    p.add_argument("--json", action="store_true", help="machine-readable report")
    p.add_argument("--out", help="write the report to a file instead of stdout")


def _add_solver_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--nroots", type=int, default=1)
    p.add_argument("--tol", type=float, default=1e-8, help="residual tolerance")
    p.add_argument("--max-iter", type=int, default=200)
    p.add_argument("--max-subspace", type=int, default=32)
    p.add_argument("--restart-keep", type=int, default=4)
    p.add_argument("--delta", type=float, default=1e-6, help="preconditioner damping")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="sbdiag",
        description="Lowest eigenpairs of a sampled-subspace electronic Hamiltonian",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="run the Davidson solver")
    _add_instance_flags(p_solve)
    _add_solver_flags(p_solve)
    p_solve.add_argument("--workers", type=int, default=1,
                         help="ring workers; > 1 runs the distributed apply")
    p_solve.add_argument("--overlap", choices=["on", "off"], default="on")
    p_solve.add_argument("--delay", type=float, default=0.0,
                         help="injected per-step transfer latency in seconds")
    p_solve.add_argument("--deterministic", action="store_true",
                         help="fixed traversal order, sequential accumulation")
    p_solve.set_defaults(func=cmd_solve)

    p_verify = sub.add_parser("verify", help="compare against the dense oracle")
    _add_instance_flags(p_verify)
    _add_solver_flags(p_verify)
    p_verify.add_argument("--tol-match", type=float, default=1e-8,
                          help="max |Davidson - oracle| ground-energy gap")
    p_verify.add_argument("--oracle-cap", type=int, default=DEFAULT_CAP)
    p_verify.set_defaults(func=cmd_verify)

    p_bench = sub.add_parser("bench", help="time the mult kernel per worker count")
    _add_instance_flags(p_bench)
    p_bench.add_argument("--workers", dest="workers_list", default="1,2,4",
                         help="comma list of worker counts (default 1,2,4)")
    p_bench.add_argument("--repeats", type=int, default=3)
    p_bench.add_argument("--overlap", choices=["on", "off"], default="on")
    p_bench.add_argument("--delay", type=float, default=0.0)
    p_bench.set_defaults(func=cmd_bench)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR


if __name__ == "__main__":
    sys.exit(main())
