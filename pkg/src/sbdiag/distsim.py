"""Simulated distributed-memory Hamiltonian application.

The basis rows are partitioned over P in-process workers by contiguous
alpha-index blocks.  Each worker runs P ring steps: it computes all task
contributions pairing its own bra rows against the ket block it currently
holds, while (overlap mode) that block is already in flight to the next
worker on the ring and the previous worker's block is arriving into the
alternate buffer.  Buffers swap at a step barrier.  Channels are in-process
queues with an optional injected latency standing in for a real
interconnect; exposed transfer time is measured as the portion of that
latency the worker actually sat waiting on after finishing its compute.
"""

from __future__ import annotations

import queue
import threading
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .apply import (
    DetCache,
    SpinTables,
    _diag_kernel,
    _product_kernel_seq,
    build_det_cache,
    build_spin_tables,
)
from .basis import SelectedBasis
from .integrals import IntegralTable

__all__ = [
    "Partition",
    "PartitionError",
    "make_partition",
    "DistributedApplier",
    "distributed_apply_H",
    "overlap_stats",
    "StepStat",
    "RunRecord",
    "OverlapReport",
]


class PartitionError(ValueError):
    pass


@dataclass(frozen=True)
class Partition:
    """Contiguous alpha-index blocks, one per worker; ring order w -> w+1."""

    n_workers: int
    alpha_blocks: tuple[tuple[int, int], ...]

    def block_of(self, w: int) -> tuple[int, int]:
        return self.alpha_blocks[w]


def make_partition(n_alpha: int, n_workers: int) -> Partition:
    if n_workers < 1:
        raise PartitionError(f"need at least one worker, got {n_workers}")
    if n_workers > n_alpha:
        raise PartitionError(
            f"cannot split {n_alpha} alpha strings over {n_workers} workers"
        )
    base, rem = divmod(n_alpha, n_workers)
    blocks = []
    lo = 0
    for w in range(n_workers):
        hi = lo + base + (1 if w < rem else 0)
        blocks.append((lo, hi))
        lo = hi
    return Partition(n_workers=n_workers, alpha_blocks=tuple(blocks))


@dataclass
class StepStat:
    step: int
    block: tuple[int, int]  # ket alpha block held this step
    compute_s: float
    transfer_s: float  # injected channel latency for this step's exchange
    exposed_s: float  # latency remaining after compute when the wait began
    sync_s: float  # time spent waiting for the message to exist at all


@dataclass
class RunRecord:
    partition: Partition
    overlap: bool
    transfer_delay: float
    worker_steps: list  # list (per worker) of list[StepStat]
    rebuilds: list  # ket-cache rebuild count per worker for this run
    wall_s: float


@dataclass
class OverlapReport:
    n_workers: int
    n_steps: int
    overlap: bool
    transfer_delay: float
    per_step: list  # rows: (step, mean compute, mean transfer, mean exposed, ratio)
    total_compute_s: float
    total_transfer_s: float
    total_exposed_s: float
    overlap_ratio: float


class _Buffer:
    """One half of a worker's double buffer, with a state flag."""

    __slots__ = ("lo", "hi", "data", "state")

    def __init__(self):
        self.lo = -1
        self.hi = -1
        self.data: Optional[np.ndarray] = None
        self.state = "idle"

    def load(self, lo: int, hi: int, data: np.ndarray) -> None:
        assert self.state in ("idle", "receiving"), f"receive into busy buffer ({self.state})"
        self.lo, self.hi, self.data = lo, hi, data
        self.state = "held"


class DistributedApplier:
    """Reusable distributed y = H*x over a product basis.

    Per-worker determinant caches (bra side fixed to the owned rows, ket
    side following the circulating block) and the local diagonal are built
    once and survive across applications.
    """

    def __init__(
        self,
        basis: SelectedBasis,
        table: IntegralTable,
        tables: Optional[SpinTables] = None,
        partition: Optional[Partition] = None,
        n_workers: int = 1,
        overlap: bool = True,
        transfer_delay: float = 0.0,
    ):
        if basis.mode != "product":
            raise ValueError("distributed application requires a product-mode basis")
        if transfer_delay < 0:
            raise ValueError("transfer_delay must be >= 0")
        self.basis = basis
        self.table = table
        self.tables = build_spin_tables(basis) if tables is None else tables
        self.partition = (
            make_partition(len(basis.alpha_strings), n_workers)
            if partition is None
            else partition
        )
        self.overlap = overlap
        self.transfer_delay = transfer_delay
        self.n_beta = len(basis.beta_strings)
        self._h = np.ascontiguousarray(table.h)
        self._beta_window = (0, self.n_beta)

        p = self.partition.n_workers
        self._caches: list[DetCache] = []
        self._diags: list[np.ndarray] = []
        for w in range(p):
            blk = self.partition.alpha_blocks[w]
            window = (blk, self._beta_window)
            cache = build_det_cache(basis, window, window)
            diag = np.empty(len(cache.bra_det_a))
            _diag_kernel(diag, cache.bra_det_a, cache.bra_det_b, self._h, table.eri, table.e_core)
            self._caches.append(cache)
            self._diags.append(diag)
        self.last_run: Optional[RunRecord] = None

    # -- ring plumbing ------------------------------------------------------

    def _send(self, w: int, buf: _Buffer) -> None:
        dest = (w + 1) % self.partition.n_workers
        now = time.perf_counter()
        self._queues[dest].put((buf.lo, buf.hi, buf.data, now, now + self.transfer_delay))

    def _recv(self, w: int) -> tuple[int, int, np.ndarray, float, float]:
        t_call = time.perf_counter()
        try:
            lo, hi, data, t_sent, t_ready = self._queues[w].get(timeout=120.0)
        except queue.Empty:
            raise RuntimeError(f"worker {w}: ring receive timed out") from None
        # exposed transfer: the injected latency still outstanding once the
        # message existed and we were ready for it
        exposed = max(0.0, t_ready - max(t_call, t_sent))
        if exposed > 0.0:
            time.sleep(exposed)
        sync = max(0.0, t_sent - t_call)
        return lo, hi, data, exposed, sync

    def _worker_run(self, w: int, x_block, y_block, steps_out, rebuilds_out):
        p = self.partition.n_workers
        my_lo, my_hi = self.partition.alpha_blocks[w]
        cache = self._caches[w]
        diag = self._diags[w]
        ta, tb = self.tables.alpha, self.tables.beta
        builds_before = cache.build_count

        bufs = (_Buffer(), _Buffer())
        bufs[0].load(my_lo, my_hi, x_block)
        # align step 0 across workers (ranks launch staggered, the run starts
        # together); without this the first receiver charges the whole startup
        # skew of its neighbor as exposed latency
        self._barrier.wait(timeout=120.0)
        for step in range(p):
            cur = bufs[step % 2]
            nxt = bufs[(step + 1) % 2]
            expecting = step < p - 1
            if expecting:
                assert nxt is not cur
                nxt.state = "receiving"
                if self.overlap:
                    self._send(w, cur)  # forward while we compute
            assert cur.state == "held", f"compute from buffer in state {cur.state}"
            cur.state = "compute"

            t0 = time.perf_counter()
            build_det_cache(
                self.basis, ((my_lo, my_hi), self._beta_window),
                ((cur.lo, cur.hi), self._beta_window), cache,
            )
            _product_kernel_seq(
                y_block, cur.data, diag,
                cache.bra_det_a, cache.bra_det_b, cache.ket_det_a, cache.ket_det_b,
                my_lo, cur.lo, cur.hi, self.n_beta,
                ta.s_off, ta.s_tgt, ta.d_off, ta.d_tgt,
                tb.s_off, tb.s_tgt, tb.d_off, tb.d_tgt,
                self._h, self.table.eri, self.table.e_core,
            )
            compute_s = time.perf_counter() - t0
            cur.state = "held"

            exposed = sync = 0.0
            if expecting:
                if not self.overlap:
                    self._send(w, cur)  # serialized: transfer starts only now
                lo, hi, data, exposed, sync = self._recv(w)
                nxt.load(lo, hi, data)
                self._barrier.wait(timeout=120.0)
            steps_out.append(
                StepStat(
                    step=step,
                    block=(cur.lo, cur.hi),
                    compute_s=compute_s,
                    transfer_s=self.transfer_delay if expecting else 0.0,
                    exposed_s=exposed,
                    sync_s=sync,
                )
            )
        rebuilds_out[w] = cache.build_count - builds_before

    # -- public surface -------------------------------------------------------

    def apply(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        n = self.basis.dimension
        if x.shape != (n,):
            raise ValueError(f"expected vector of length {n}, got shape {x.shape}")
        p = self.partition.n_workers
        nb = self.n_beta

        x_blocks = [x[lo * nb : hi * nb] for lo, hi in self.partition.alpha_blocks]
        y_blocks = [np.zeros((hi - lo) * nb) for lo, hi in self.partition.alpha_blocks]
        self._queues = [queue.Queue() for _ in range(p)]
        self._barrier = threading.Barrier(p)
        worker_steps: list[list[StepStat]] = [[] for _ in range(p)]
        rebuilds = [0] * p
        errors: list[BaseException] = []

        def run(w):
            try:
                self._worker_run(w, x_blocks[w], y_blocks[w], worker_steps[w], rebuilds)
            except BaseException as exc:  # propagate to the coordinator
                errors.append(exc)
                self._barrier.abort()

        t0 = time.perf_counter()
        if p == 1:
            run(0)
        else:
            threads = [
                threading.Thread(target=run, args=(w,), name=f"ring-worker-{w}")
                for w in range(p)
            ]
            for t in threads:
                t.start()
            for t in threads:
                t.join()
        wall = time.perf_counter() - t0
        if errors:
            raise errors[0]

        self.last_run = RunRecord(
            partition=self.partition,
            overlap=self.overlap,
            transfer_delay=self.transfer_delay,
            worker_steps=worker_steps,
            rebuilds=rebuilds,
            wall_s=wall,
        )
        return np.concatenate(y_blocks)

    __call__ = apply

    @property
    def rebuild_counts(self) -> list[int]:
        return [] if self.last_run is None else list(self.last_run.rebuilds)


def distributed_apply_H(
    x,
    basis: SelectedBasis,
    table: IntegralTable,
    tables: Optional[SpinTables] = None,
    partition: Optional[Partition] = None,
    overlap: bool = True,
    transfer_delay: float = 0.0,
) -> np.ndarray:
    """One distributed application; see DistributedApplier for reuse."""
    applier = DistributedApplier(
        basis,
        table,
        tables=tables,
        partition=partition if partition is not None else make_partition(len(basis.alpha_strings), 1),
        overlap=overlap,
        transfer_delay=transfer_delay,
    )
    return applier.apply(x)


def overlap_stats(run: RunRecord) -> OverlapReport:
    """Aggregate a run's timing capture into the per-step overlap report."""
    p = run.partition.n_workers
    n_steps = max(len(steps) for steps in run.worker_steps)
    per_step = []
    for s in range(n_steps):
        stats = [ws[s] for ws in run.worker_steps if s < len(ws)]
        compute = float(np.mean([st.compute_s for st in stats]))
        transfer = float(np.mean([st.transfer_s for st in stats]))
        exposed = float(np.mean([st.exposed_s for st in stats]))
        total = compute + exposed
        ratio = 1.0 - (exposed / total if total > 0 else 0.0)
        per_step.append((s, compute, transfer, exposed, ratio))
    total_compute = sum(row[1] for row in per_step)
    total_transfer = sum(row[2] for row in per_step)
    total_exposed = sum(row[3] for row in per_step)
    denom = total_compute + total_exposed
    return OverlapReport(
        n_workers=p,
        n_steps=n_steps,
        overlap=run.overlap,
        transfer_delay=run.transfer_delay,
        per_step=per_step,
        total_compute_s=total_compute,
        total_transfer_s=total_transfer,
        total_exposed_s=total_exposed,
        overlap_ratio=1.0 - (total_exposed / denom if denom > 0 else 0.0),
    )
