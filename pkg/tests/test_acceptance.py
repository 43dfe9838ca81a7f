"""Acceptance gate: one test (and one printed pass/fail line) per criterion.

Run with -s (or read the -v PASSED/FAILED column) to see the per-criterion
lines.  Every tolerance below is asserted at full strength; nothing is
loosened for convenience.  JIT warm-up happens in a fixture so the timed
budgets measure the work, not LLVM.
"""

import itertools
import os
import time
import tracemalloc

import numpy as np
import pytest

from sbdiag.apply import HamiltonianApplier, build_det_cache, warm_up
from sbdiag.basis import (
    SelectedBasis,
    build_excitation_table,
    ingest_samples,
)
from sbdiag.cli import main
from sbdiag.davidson import DavidsonOptions, davidson_solve, precondition
from sbdiag.distsim import DistributedApplier
from sbdiag.matelem import excitation_degree, hij
from sbdiag.oracle import assemble_dense, dense_eigensolve
from sbdiag.synth import (
    all_strings,
    full_product_basis,
    random_integrals,
    random_product_basis,
)

from reference import reference_dense


def _line(criterion: int, ok: bool, detail: str) -> None:
    status = "PASS" if ok else "FAIL"
    print(f"criterion {criterion}: {status} - {detail}")
    assert ok, f"criterion {criterion}: {detail}"


@pytest.fixture(scope="module", autouse=True)
def _compiled():
    warm_up()


@pytest.fixture(scope="module")
def small_instances():
    """20 norb=4 and 10 norb=5 seeded instances with operator-algebra dense refs."""
    out = []
    for seed in range(20):
        table = random_integrals(4, seed=seed)
        basis = full_product_basis(4, 2, 2)
        out.append((table, basis, reference_dense(basis, table)))
    for seed in range(10):
        table = random_integrals(5, seed=100 + seed)
        basis = full_product_basis(5, 2, 3)
        out.append((table, basis, reference_dense(basis, table)))
    return out


@pytest.fixture(scope="module")
def big_instance():
    table = random_integrals(10, seed=3)
    basis = random_product_basis(10, 5, 5, 100, 100, seed=4)  # N = 10^4
    return basis, table


def test_criterion_1_oracle_equivalence_energies(small_instances):
    t0 = time.perf_counter()
    worst = 0.0
    for table, basis, _ in small_instances:
        evals, _vecs = dense_eigensolve(assemble_dense(basis, table))
        applier = HamiltonianApplier(basis, table)
        res = davidson_solve(applier, applier.diag)
        assert res.converged
        worst = max(worst, abs(float(res.energies[0]) - float(evals[0])))
    elapsed = time.perf_counter() - t0
    _line(
        1,
        worst <= 1e-8 and elapsed < 10.0,
        f"|E_davidson - E_dense| <= {worst:.2e} over 30 instances in {elapsed:.2f}s "
        "(tol 1e-8, budget 10s)",
    )


def test_criterion_2_oracle_equivalence_operator(small_instances):
    worst = 0.0
    for k, (table, basis, dense) in enumerate(small_instances):
        dets = [basis.det_at(i) for i in range(basis.dimension)]
        explicit = SelectedBasis.explicit(
            dets, basis.norb, basis.n_alpha_elec, basis.n_beta_elec
        )
        appliers = [HamiltonianApplier(basis, table)]
        if all(explicit.det_at(i) == dets[i] for i in range(len(dets))):
            appliers.append(HamiltonianApplier(explicit, table))
        rng = np.random.default_rng(k)
        for applier in appliers:
            for _ in range(5):
                x = rng.standard_normal(basis.dimension)
                err = np.abs(applier(x) - dense @ x).max() / np.abs(x).max()
                worst = max(worst, err)
        assert len(appliers) == 2, "explicit basis must preserve insertion order"
    _line(2, worst <= 1e-12, f"max rel apply error {worst:.2e} across modes (tol 1e-12)")


def test_criterion_3_hubbard_dimer(hubbard_basis, hubbard_table):
    applier = HamiltonianApplier(hubbard_basis, hubbard_table)
    diag_ok = np.array_equal(applier.diag, [4.0, 0.0, 0.0, 4.0])
    res = davidson_solve(applier, applier.diag)
    delta = abs(float(res.energies[0]) - (2.0 - np.sqrt(8.0)))
    _line(
        3,
        diag_ok and res.converged and delta <= 1e-8,
        f"E0 = {res.energies[0]:.10f} vs 2-sqrt(8), delta {delta:.2e}; "
        f"diagonal equals [4,0,0,4]: {diag_ok}",
    )


def test_criterion_4_ingestion_arithmetic():
    norb, ne = 18, 9
    masks = [
        sum(1 << i for i in combo)
        for combo in itertools.combinations(range(norb), ne)
    ]
    rng = np.random.default_rng(2024)
    alpha = [masks[i] for i in rng.permutation(len(masks))[:6000]]
    beta = [masks[i] for i in rng.permutation(len(masks))[:6000]]

    def fmt(s):
        return "".join("1" if (s >> i) & 1 else "0" for i in range(norb))

    lines = [fmt(a) + fmt(b) for a, b in zip(alpha, beta)]

    tracemalloc.start()
    t0 = time.perf_counter()
    basis, report = ingest_samples(lines, norb, ne, ne, mode="product")
    elapsed = time.perf_counter() - t0
    _, peak = tracemalloc.get_traced_memory()
    tracemalloc.stop()

    shape_ok = (
        len(basis.alpha_strings) == 6000
        and len(basis.beta_strings) == 6000
        and basis.dimension == 36_000_000
        and report.n_filtered == 0
    )
    # any N-length structure would need >= 3.6e7 entries; even a bare byte
    # array of that length (34 MiB) busts this allocation ceiling on top of
    # the ~few-MiB footprint the string lists legitimately need
    mem_ok = peak < 32 * 1024 * 1024
    _line(
        4,
        shape_ok and elapsed < 5.0 and mem_ok,
        f"|A|=|B|=6000, N={basis.dimension:,} in {elapsed:.2f}s "
        f"(budget 5s), peak ingest alloc {peak / 1e6:.1f} MB",
    )


def test_criterion_5_distributed_invariance(big_instance):
    basis, table = big_instance
    x = np.random.default_rng(9).standard_normal(basis.dimension)
    base = DistributedApplier(basis, table, n_workers=1).apply(x)
    scale = np.abs(base).max()
    worst = 0.0
    for p in (2, 3, 4, 8):
        y = DistributedApplier(basis, table, n_workers=p).apply(x)
        worst = max(worst, np.abs(y - base).max() / scale)

    # latency injection: d = half the fastest measured step compute, so d <=
    # compute holds by construction
    probe = DistributedApplier(basis, table, n_workers=2)
    probe.apply(x)
    probe.apply(x)
    computes = [st.compute_s for ws in probe.last_run.worker_steps for st in ws]
    delay = 0.5 * min(computes)
    dist = DistributedApplier(basis, table, n_workers=2, overlap=True, transfer_delay=delay)
    dist.apply(x)
    exposed = [
        st.exposed_s
        for ws in dist.last_run.worker_steps
        for st in ws
        if st.transfer_s > 0
    ]
    exposure_ok = max(exposed) <= 0.05 * delay
    _line(
        5,
        worst <= 1e-12 and exposure_ok,
        f"P in {{1,2,3,4,8}} agree to {worst:.2e} rel (tol 1e-12) at N=10^4; "
        f"exposed <= {max(exposed):.2e}s of d={delay:.3f}s with overlap on "
        f"(cap 5% = {0.05 * delay:.2e}s)",
    )


def test_criterion_6_davidson_internals(big_instance):
    basis, table = big_instance
    applier = HamiltonianApplier(basis, table)
    res = davidson_solve(applier, applier.diag)
    ortho_worst = max(res.stats.ortho_history)

    # force restarts on a harder dense operator and watch the lowest Ritz value
    rng = np.random.default_rng(40)
    off = rng.standard_normal((300, 300)) * 0.2
    mat = (off + off.T) / 2.0
    mat[np.diag_indices(300)] = np.arange(300.0)
    opts = DavidsonOptions(max_subspace=6, restart_keep=2, max_iters=400)
    res2 = davidson_solve(lambda v: mat @ v, np.diag(mat).copy(), opts=opts)
    thetas = [row[0] for row in res2.stats.theta_history]
    boundaries = set(res2.stats.restart_iters)
    monotone = all(
        thetas[i] <= thetas[i - 1] + 1e-10
        for i in range(1, len(thetas))
        if i not in boundaries
    )

    # delta-clamp: theta exactly on a diagonal entry must stay finite
    t = precondition(np.ones(4), np.array([0.0, 1.0, 2.0, 3.0]), 2.0, 1e-6)
    clamp_ok = bool(np.isfinite(t).all())

    _line(
        6,
        ortho_worst <= 1e-10 and res.converged and res2.stats.restarts > 0
        and monotone and clamp_ok,
        f"max ||V^T V - I||_F = {ortho_worst:.2e} (cap 1e-10); Ritz monotone "
        f"between {res2.stats.restarts} restarts: {monotone}; clamp finite: {clamp_ok}",
    )


def test_criterion_7_slater_condon_properties():
    table = random_integrals(6, seed=50)
    basis = full_product_basis(6, 3, 3)
    rng = np.random.default_rng(50)
    n = basis.dimension

    herm_ok = True
    for _ in range(1000):
        i, j = rng.integers(0, n, size=2)
        di, dj = basis.det_at(int(i)), basis.det_at(int(j))
        if hij(di, dj, table) != hij(dj, di, table):
            herm_ok = False
            break

    high_pairs = 0
    high_ok = True
    for _ in range(3000):
        i, j = rng.integers(0, n, size=2)
        di, dj = basis.det_at(int(i)), basis.det_at(int(j))
        if excitation_degree(di, dj) >= 3:
            high_pairs += 1
            if hij(di, dj, table) != 0.0:
                high_ok = False
                break

    invol_ok = pop_ok = True
    for norb in range(3, 7):
        for ne in range(1, norb):
            strings = all_strings(norb, ne)
            index = {s: k for k, s in enumerate(strings)}
            etab = build_excitation_table(strings, norb)
            for src, s in enumerate(strings):
                for tgt, p, r, phase in etab.singles_of(src):
                    pop_ok &= bin(strings[tgt]).count("1") == ne
                    back = [
                        ph
                        for t2, p2, r2, ph in etab.singles_of(tgt)
                        if t2 == src and p2 == r and r2 == p
                    ]
                    invol_ok &= back == [phase]
                for tgt, p, q, r, s_orb, phase in etab.doubles_of(src):
                    pop_ok &= bin(strings[tgt]).count("1") == ne
                    holes_back = tuple(sorted((r, s_orb)))
                    parts_back = tuple(sorted((p, q)))
                    back = [
                        ph
                        for t2, p2, q2, r2, s2, ph in etab.doubles_of(tgt)
                        if t2 == src and (p2, q2) == holes_back and (r2, s2) == parts_back
                    ]
                    invol_ok &= back == [phase]
            assert index  # the table spans the complete string set

    _line(
        7,
        herm_ok and high_ok and high_pairs >= 100 and invol_ok and pop_ok,
        f"hermiticity exact on 1000 pairs: {herm_ok}; hij == 0 on {high_pairs} "
        f"degree>=3 pairs: {high_ok}; involution/popcount over norb<=6 tables: "
        f"{invol_ok and pop_ok}",
    )


def test_criterion_8_scaling_smoke(capsys):
    rc = main([
        "bench", "--gen-random", "16,4,4,3", "--strings", "320",
        "--workers", "1,2,4", "--repeats", "2", "--json",
    ])
    import json

    rep = json.loads(capsys.readouterr().out)
    with capsys.disabled():
        print()
    rows = {row["workers"]: row for row in rep["mult"]}
    table_ok = (
        rc == 0
        and sorted(rows) == [1, 2, 4]
        and rep["basis"]["dimension"] >= 100_000
        and rows[1]["efficiency"] == 1.0
        and all(r["mean_s"] > 0 and "efficiency" in r for r in rows.values())
    )
    for row in rep["mult"]:
        print(
            f"    workers={row['workers']}  mean={row['mean_s']:.4f}s  "
            f"speedup={row['speedup']:.2f}  E_p={row['efficiency']:.2f}"
        )

    cores = os.cpu_count() or 1
    if cores >= 4:
        speedup_ok = rows[4]["speedup"] >= 2.0
        detail = (
            f"N={rep['basis']['dimension']:,}; 4-worker speedup "
            f"{rows[4]['speedup']:.2f} (need >= 2.0 on {cores} cores)"
        )
    else:
        speedup_ok = True  # the >= 2x clause is scoped to >= 4-core machines
        detail = (
            f"N={rep['basis']['dimension']:,}; bench table produced with E_p for "
            f"p in (1,2,4); the >= 2x speedup clause applies to >= 4-core "
            f"machines and this one has {cores} core(s)"
        )
    _line(8, table_ok and speedup_ok, detail)


def test_criterion_9_cache_discipline(big_instance):
    basis, table = big_instance
    n = basis.dimension
    applier = HamiltonianApplier(basis, table)
    x = np.random.default_rng(1).standard_normal(n)
    before = applier.cache.build_count
    for _ in range(3):
        applier(x)
    zero_rebuilds = applier.cache.build_count == before

    dist = DistributedApplier(basis, table, n_workers=4)
    dist.apply(x)
    first = dist.rebuild_counts
    dist.apply(x)
    second = dist.rebuild_counts
    bounded = all(c <= 4 for c in first) and all(c <= 4 for c in second)

    full_mem = applier.cache.n_records == 2 * n
    nb = len(basis.beta_strings)
    window = build_det_cache(basis, ((0, 25), (0, nb)), ((25, 50), (0, nb)))
    window_mem = window.n_records == 2 * (25 * nb)

    _line(
        9,
        zero_rebuilds and bounded and full_mem and window_mem,
        f"repeat applies rebuilt 0 caches: {zero_rebuilds}; distributed rebuilds "
        f"{first} then {second} (cap 4/worker); records = 2 x window area: "
        f"{full_mem and window_mem}",
    )
