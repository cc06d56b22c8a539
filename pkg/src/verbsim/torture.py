"""Concurrent exercise of the datapath with real OS threads.

Sixteen threads hammer either one shared QP (with its shared, locked CQ)
or sixteen TD-bound QPs completing into one shared CQ.  Each thread keeps
its own window of outstanding WQEs and signals the last WQE of every
batch; whichever thread polls a CQE credits the batch to its owner.  The
run then checks that no send queue ever went below zero free slots, that
every signaled WQE produced exactly one polled CQE, and that all threads
joined.

Timing here is real and nondeterministic; nothing from this module feeds
the deterministic simulator outputs.
"""
from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .datapath import Nic, PostBatch, SubmitMode, Wqe
from .endpoints import SweepSpec, build_sweep_point

TORTURE_PLANS = ("shared-qp", "shared-cq")
BATCH_SIZES = (8, 16, 32, 64)


@dataclass
class TortureResult:
    plan: str
    seed: int
    messages: int
    signaled_posted: int
    cqes_polled: int
    credited: int
    min_remaining_depth: int
    cqe_writes: int
    deadlocked: bool
    errors: List[str] = field(default_factory=list)
    seconds: float = 0.0

    @property
    def ok(self) -> bool:
        return (not self.deadlocked and not self.errors
                and self.min_remaining_depth >= 0
                and self.signaled_posted == self.cqes_polled == self.cqe_writes
                and self.credited == self.messages)


def _plan(kind: str, threads: int, depth: int):
    if kind == "shared-qp":
        spec = SweepSpec("qp", ways=(threads,), threads=threads, depth=depth,
                         postlist=1, unsignaled=1)
    elif kind == "shared-cq":
        spec = SweepSpec("cq", ways=(threads,), threads=threads, depth=depth,
                         postlist=1, unsignaled=1)
    else:
        raise ValueError(f"unknown torture plan {kind!r}")
    return build_sweep_point(spec, threads)


def run_torture(kind: str = "shared-qp", seed: int = 0, messages: int = 100_000,
                threads: int = 16, depth: int = 128, timeout: float = 60.0) -> TortureResult:
    """Run one seeded torture round; ``messages`` is the total over all threads."""
    plan = _plan(kind, threads, depth)
    nic = Nic(plan.device)
    plan.device.nic = nic
    rng = np.random.default_rng(seed)
    share = [messages // threads + (1 if i < messages % threads else 0) for i in range(threads)]
    sizes = [int(rng.choice(BATCH_SIZES)) for _ in range(threads)]

    credits = [0] * threads
    credit_lock = threading.Lock()
    signaled = [0] * threads
    polled = [0] * threads
    errors: List[str] = []
    start_gate = threading.Barrier(threads)

    def worker(me: int):
        qp = plan.thread_qps[me][0]
        cq = qp.cq
        buf = plan.thread_buffers[me][0][0]
        cache = {}

        def batch(n):
            b = cache.get(n)
            if b is None:
                wqes = [Wqe(buf.base, buf.length, True, i == n - 1, (me, n)) for i in range(n)]
                b = cache[n] = PostBatch(qp, wqes, SubmitMode.DOORBELL)
            return b

        left = share[me]
        p = sizes[me]
        sent = 0
        try:
            start_gate.wait()
            while True:
                with credit_lock:
                    done = credits[me]
                if done >= share[me]:
                    break
                n = min(p, left)
                if left and sent - done + n <= depth:
                    nic.post_send(batch(n))
                    signaled[me] += 1
                    sent += n
                    left -= n
                cqes = nic.poll_cq(cq, depth)
                if cqes:
                    polled[me] += len(cqes)
                    with credit_lock:
                        for cqe in cqes:
                            owner, count = cqe.wr_id
                            credits[owner] += count
                elif left == 0 or sent - done + min(p, left) > depth:
                    time.sleep(0)
        except Exception as exc:  # reported, not raised, so the join check still runs
            errors.append(f"thread {me}: {type(exc).__name__}: {exc}")
            start_gate.abort()

    t0 = time.perf_counter()
    pool = [threading.Thread(target=worker, args=(i,), daemon=True) for i in range(threads)]
    for t in pool:
        t.start()
    deadline = t0 + timeout
    for t in pool:
        t.join(max(0.0, deadline - time.perf_counter()))
    deadlocked = any(t.is_alive() for t in pool)
    qps = {qp.id: qp for qps in plan.thread_qps for qp in qps}
    counters = nic.snapshot()
    return TortureResult(
        plan=kind,
        seed=seed,
        messages=messages,
        signaled_posted=sum(signaled),
        cqes_polled=sum(polled),
        credited=sum(credits),
        min_remaining_depth=min(qp.low_water for qp in qps.values()),
        cqe_writes=counters.dma_writes_cqe,
        deadlocked=deadlocked,
        errors=errors,
        seconds=time.perf_counter() - t0,
    )


def torture_suite(runs: int = 100, messages: int = 100_000, threads: int = 16,
                  first_seed: int = 0, plans=TORTURE_PLANS) -> List[TortureResult]:
    """``runs`` seeded rounds, alternating between the shared-QP and shared-CQ plans."""
    out = []
    for i in range(runs):
        seed = first_seed + i
        out.append(run_torture(plans[i % len(plans)], seed, messages, threads))
    return out
