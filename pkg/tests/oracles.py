"""Independent reference models used by the tests.

The PCIe oracle replays a posting trace one transaction at a time, as a
PCIe analyzer would see it, and tallies the transaction log.  It shares
no code with :mod:`verbsim.datapath`.
"""
from __future__ import annotations

from collections import Counter
from typing import Iterable, List, Sequence, Tuple

# one posted batch: (submitted_by_blueflame, [(inline, signaled), ...])
Trace = Sequence[Tuple[bool, Sequence[Tuple[bool, bool]]]]


def pcie_log(trace: Trace) -> List[str]:
    log = []
    for blueflame, wqes in trace:
        log.append("BF_WRITE" if blueflame else "DOORBELL")
        for inline, signaled in wqes:
            if not blueflame:
                log.append("DMA_READ_WQE")
            if not inline:
                log.append("DMA_READ_PAYLOAD")
            if signaled:
                log.append("DMA_WRITE_CQE")
    return log


def pcie_counts(trace: Trace) -> Tuple[int, int, int, int, int]:
    c = Counter(pcie_log(trace))
    return (c["DOORBELL"], c["BF_WRITE"], c["DMA_READ_WQE"], c["DMA_READ_PAYLOAD"],
            c["DMA_WRITE_CQE"])


def benchmark_trace(n: int, postlist: int = 1, unsignaled: int = 1, inline: bool = False,
                    blueflame: bool = False) -> list:
    """Trace of the message-rate loop: ``n`` WQEs in lists of ``postlist``,
    every ``unsignaled``-th WQE signaled, BlueFlame for single-WQE lists."""
    trace = []
    k = 0
    while k < n:
        size = min(postlist, n - k)
        wqes = [(inline, (k + i + 1) % unsignaled == 0 or k + i + 1 == n) for i in range(size)]
        trace.append((blueflame and size == 1, wqes))
        k += size
    return trace


def uuar_assignment(total: int, low: int, n_qps: int) -> List[int]:
    """Static uUAR of each QP: low-latency slots first, then medium ones in
    turn, uUAR 0 only when everything but it is low latency."""
    low_ids = list(range(total - low, total))
    medium = list(range(1, total - low))
    out = []
    for i in range(n_qps):
        if i < len(low_ids):
            out.append(low_ids[i])
        elif medium:
            out.append(medium[(i - len(low_ids)) % len(medium)])
        else:
            out.append(0)
    return out
