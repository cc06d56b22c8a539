"""Send and completion path with exact PCIe transaction accounting.

Per ``post_send`` batch the CPU rings one doorbell (8-byte MMIO) or does
one BlueFlame write.  Per WQE the NIC DMA-reads the descriptor unless it
arrived by BlueFlame, DMA-reads the payload unless it was inlined, and,
once the remote side acknowledges, DMA-writes a CQE if the WQE was
signaled.

Locks mirror mlx5 placement: the QP lock (absent for TD-bound QPs), the
uUAR lock (medium-latency uUARs only) and the CQ lock (absent for
single-threaded CQs).  The remaining send-queue depth is updated under
its own small lock so that concurrent posters on a shared QP never drive
it negative.
"""
from __future__ import annotations

import json
import threading
from collections import deque
from dataclasses import asdict, dataclass, field, fields
from enum import Enum
from typing import Any, List, Optional, Sequence, Tuple, Union

from .errors import (
    InlineTooLarge,
    InvalidBatch,
    QpDepthExceeded,
    SignalingViolation,
    UnregisteredAddress,
)
from .verbs import CompletionQueue, Device, LatencyClass, QueuePair


class SubmitMode(Enum):
    DOORBELL = "doorbell"
    BLUEFLAME = "blueflame"


@dataclass(frozen=True)
class Wqe:
    payload_addr: int
    length: int
    inline: bool = False
    signaled: bool = True
    wr_id: Any = None


class PostBatch:
    """An ordered list of WQEs submitted with one ``post_send`` call.

    Batches are immutable, so a harness may build one and post it many
    times; the per-WQE summary is computed once.
    """

    __slots__ = ("qp", "wqes", "mode", "_payload_reads", "_spans", "_max_inline",
                 "_signaled_idx", "_checked_pd")

    def __init__(self, qp: QueuePair, wqes: Sequence[Wqe],
                 mode: SubmitMode = SubmitMode.DOORBELL):
        self.qp = qp
        self.wqes = tuple(wqes)
        self.mode = mode
        self._payload_reads = sum(1 for w in self.wqes if not w.inline)
        self._spans = {(w.payload_addr, w.length) for w in self.wqes}
        self._max_inline = max((w.length for w in self.wqes if w.inline), default=0)
        self._signaled_idx = tuple(i for i, w in enumerate(self.wqes) if w.signaled)
        self._checked_pd = None

    def __len__(self):
        return len(self.wqes)


@dataclass
class PcieCounters:
    mmio_doorbells: int = 0
    blueflame_writes: int = 0
    dma_reads_wqe: int = 0
    dma_reads_payload: int = 0
    dma_writes_cqe: int = 0
    cq_polls: int = 0

    def as_tuple(self) -> Tuple[int, int, int, int, int]:
        """The five PCIe transaction counts, without CQ polls."""
        return (self.mmio_doorbells, self.blueflame_writes, self.dma_reads_wqe,
                self.dma_reads_payload, self.dma_writes_cqe)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=False)

    @classmethod
    def from_dict(cls, data) -> "PcieCounters":
        return cls(**{f.name: int(data.get(f.name, 0)) for f in fields(cls)})


@dataclass(frozen=True)
class Cqe:
    qp_id: int
    ordinal: int
    wr_id: Any = None
    status: str = "success"


@dataclass(frozen=True)
class PostReceipt:
    qp_id: int
    first_ordinal: int
    count: int
    mode: SubmitMode
    # (ordinal, wr_id) of every signaled WQE in the batch
    signaled: Tuple[Tuple[int, Any], ...] = field(default=())


def blueflame_eligible(qp: QueuePair, n_wqes: int, message_bytes: int,
                       threshold: Optional[int] = None) -> bool:
    """Whether a batch may be pushed by BlueFlame on this QP.

    Only single small WQEs qualify; ``threshold`` defaults to the inline
    limit of the device.
    """
    if threshold is None:
        threshold = qp.ctx.device.profile.max_inline_bytes
    return (n_wqes == 1 and not qp.ctx.env.shut_up_bf
            and qp.uuar.latency_class is not LatencyClass.HIGH
            and message_bytes <= threshold)


class Nic:
    """Datapath engine of one device; also the handle of a counting run.

    In the default (immediate) mode signaled WQEs wait in an in-flight
    FIFO and become CQEs whenever :meth:`progress` runs, which
    :meth:`poll_cq` does first; the acknowledgment delay is thus "until the
    next poll".  With ``deferred=True`` nothing is queued and the caller
    (the performance simulator) delivers completions via :meth:`complete`
    at the times it models.
    """

    def __init__(self, device: Device, deferred: bool = False):
        self.device = device
        self.deferred = deferred
        self.counters = PcieCounters()
        self._counter_lock = threading.Lock()
        self._inflight: deque = deque()
        self._progress_lock = threading.Lock()
        self._qps = {}

    def post_send(self, batch: PostBatch) -> PostReceipt:
        qp = batch.qp
        n = len(batch.wqes)
        if n == 0:
            raise InvalidBatch("empty post list")
        blueflame = batch.mode is SubmitMode.BLUEFLAME
        if blueflame and (n != 1 or qp.ctx.env.shut_up_bf or not qp.uuar.blueflame_allowed):
            raise InvalidBatch("BlueFlame needs a single WQE on a BlueFlame-capable uUAR")
        if batch._max_inline > qp.ctx.device.profile.max_inline_bytes:
            raise InlineTooLarge(f"{batch._max_inline} B exceeds the inline limit")
        pd = qp.pd
        if batch._checked_pd is not pd:
            for addr, length in batch._spans:
                if not pd.covers(addr, length):
                    raise UnregisteredAddress(f"0x{addr:x}+{length} outside PD {pd.id}")
            batch._checked_pd = pd

        lock = qp.lock
        if lock is not None:
            lock.acquire()
        try:
            with qp.depth_lock:
                if qp.remaining_depth < n:
                    raise QpDepthExceeded(
                        f"QP {qp.id}: {n} WQEs, {qp.remaining_depth} slots free")
                # at least one of every `depth` consecutive WQEs must be signaled
                sig = batch._signaled_idx
                head = sig[0] if sig else n
                if qp.unsignaled_run + head >= qp.depth:
                    raise SignalingViolation(f"QP {qp.id}: unsignaled run reaches depth")
                qp.unsignaled_run = n - 1 - sig[-1] if sig else qp.unsignaled_run + n
                qp.remaining_depth -= n
                if qp.remaining_depth < qp.low_water:
                    qp.low_water = qp.remaining_depth
                first = qp.next_ordinal
                qp.next_ordinal += n
                signaled = tuple((first + i, batch.wqes[i].wr_id) for i in batch._signaled_idx)
                if not self.deferred:
                    self._qps[qp.id] = qp
                    for ordinal, wr_id in signaled:
                        self._inflight.append((qp, ordinal, wr_id))
            uuar_lock = qp.uuar.lock
            if uuar_lock is not None:
                with uuar_lock:
                    pass  # the doorbell / BlueFlame store happens under this lock
        finally:
            if lock is not None:
                lock.release()

        c = self.counters
        with self._counter_lock:
            if blueflame:
                c.blueflame_writes += 1
            else:
                c.mmio_doorbells += 1
                c.dma_reads_wqe += n
            c.dma_reads_payload += batch._payload_reads
        return PostReceipt(qp.id, first, n, batch.mode, signaled)

    def complete(self, qp: QueuePair, ordinal: int, wr_id: Any = None) -> Cqe:
        """DMA-write the CQE of a signaled WQE into the QP's CQ."""
        if ordinal <= qp.last_cqe_ordinal:
            raise ValueError(f"QP {qp.id}: CQE {ordinal} out of order")
        qp.last_cqe_ordinal = ordinal
        self._qps[qp.id] = qp
        cqe = Cqe(qp.id, ordinal, wr_id)
        cq = qp.cq
        cq.pending.append(cqe)
        if len(cq.pending) > cq.high_water:
            cq.high_water = len(cq.pending)
        with self._counter_lock:
            self.counters.dma_writes_cqe += 1
        return cqe

    def progress(self, limit: Optional[int] = None) -> int:
        """Deliver in-flight completions in posting order."""
        delivered = 0
        with self._progress_lock:
            while self._inflight and (limit is None or delivered < limit):
                qp, ordinal, wr_id = self._inflight.popleft()
                self.complete(qp, ordinal, wr_id)
                delivered += 1
        return delivered

    def poll_cq(self, cq: CompletionQueue, max_entries: int) -> List[Cqe]:
        if max_entries < 1:
            raise ValueError("poll needs room for at least one CQE")
        if not self.deferred:
            self.progress()
        n = min(max_entries, cq.depth)
        out = []
        lock = cq.lock
        if lock is not None:
            lock.acquire()
        try:
            pending = cq.pending
            while pending and len(out) < n:
                out.append(pending.popleft())
        finally:
            if lock is not None:
                lock.release()
        with self._counter_lock:
            self.counters.cq_polls += 1
        for cqe in out:
            qp = self._qps[cqe.qp_id]
            with qp.depth_lock:
                freed = cqe.ordinal - qp.completed_ordinal
                if freed > 0:
                    qp.remaining_depth += freed
                    qp.completed_ordinal = cqe.ordinal
        return out

    def snapshot(self) -> PcieCounters:
        with self._counter_lock:
            return PcieCounters(**asdict(self.counters))


def nic_for(device: Device, deferred: bool = False) -> Nic:
    """The device's datapath engine, created on first use."""
    if device.nic is None:
        device.nic = Nic(device, deferred=deferred)
    return device.nic


def post_send(qp: QueuePair, batch: Union[PostBatch, Sequence[Wqe]],
              mode: Optional[SubmitMode] = None) -> PostReceipt:
    if not isinstance(batch, PostBatch):
        batch = PostBatch(qp, batch, mode or SubmitMode.DOORBELL)
    elif batch.qp is not qp:
        raise InvalidBatch("batch was built for another QP")
    return nic_for(qp.ctx.device).post_send(batch)


def poll_cq(cq: CompletionQueue, max_entries: int) -> List[Cqe]:
    return nic_for(cq.ctx.device).poll_cq(cq, max_entries)


def run_counters(run: Union[Nic, Device]) -> PcieCounters:
    nic = nic_for(run) if isinstance(run, Device) else run
    return nic.snapshot()
