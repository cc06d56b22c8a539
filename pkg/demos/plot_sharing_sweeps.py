"""
Throughput as one resource is shared
====================================

Sixteen threads drive the message-rate loop.  In each sweep a single
resource type is shared x ways while everything else stays private.
Rates come from the discrete-event model with the shipped parameters.
"""

import numpy as np

from verbsim.endpoints import SweepSpec, build_sweep
from verbsim.sim import default_params, run_sim

params = default_params()


def sweep(spec):
    pts = build_sweep(spec)
    return [pt.ways for pt in pts], np.array(
        [run_sim(pt.plan, pt.workload, params).messages_per_tick for pt in pts])


cases = {
    "PD": SweepSpec("pd"),
    "MR": SweepSpec("mr"),
    "CTX": SweepSpec("ctx"),
    "QP": SweepSpec("qp"),
    "CQ, signal every WQE": SweepSpec("cq", unsignaled=1),
    "BUF, no inlining": SweepSpec("buf", inline=False),
    "BUF, inlined": SweepSpec("buf"),
}

for name, spec in cases.items():
    ways, rates = sweep(spec)
    rel = rates / rates[0]
    print(f"{name:22}", "  ".join(f"x{w}:{r:5.2f}" for w, r in zip(ways, rel)))

###############################################################################
# Shared buffers hurt only because every payload read lands on one
# address-translation engine; inlining removes the read altogether.
# Private buffers packed back to back fall into one cache line, so they
# behave like a single shared buffer while causing exactly as many reads
# as cache-aligned ones.

aligned = build_sweep(SweepSpec("buf", inline=False, ways=(1,)))[0]
unaligned = build_sweep(SweepSpec("buf", inline=False, aligned=False, ways=(1,)))[0]
for label, pt in (("aligned", aligned), ("unaligned", unaligned)):
    res = run_sim(pt.plan, pt.workload, params)
    busy = sum(1 for t in res.tlb_busy_ticks if t)
    print(f"{label:9} payload reads {res.counters.dma_reads_payload}, engines busy {busy}, "
          f"rate {res.messages_per_tick:.4f}/tick")
