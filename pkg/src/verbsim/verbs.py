"""Software Verbs objects (CTX, PD, MR, BUF, QP, CQ, TD) and mlx5 uUAR assignment.

Every object keeps exactly one parent reference.  Register assignment
follows the mlx5 provider:

* a context statically maps ``total_uuars / 2`` UAR pages; uUAR 0 is high
  latency, the last ``num_low_lat`` are low latency, the rest medium;
* QPs without a thread domain first take free low-latency uUARs, then
  round-robin over the medium ones (uUAR 1 upward); only when every uUAR
  but the first is low latency do the leftovers fall onto uUAR 0;
* a thread domain gets a dynamically allocated page.  ``sharing=1`` gives
  the TD a page of its own (slot 1 is wasted), ``sharing=2`` pairs
  consecutive TDs on the two slots of one page.
"""
from __future__ import annotations

import itertools
import os
import threading
from collections import deque
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, List, Mapping, Optional, Sequence, Union

from .device import CACHE_LINE_BYTES, CONNECTX4, DeviceProfile
from .errors import (
    CqLimitExceeded,
    CrossCtxAssociation,
    DeviceUarExhausted,
    DynamicUarLimit,
    EmptyRange,
    IndependentPathLimit,
    QpLimitExceeded,
)


class LatencyClass(Enum):
    HIGH = "high"
    MEDIUM = "medium"
    LOW = "low"
    DEDICATED = "dedicated"


class Allocation(Enum):
    STATIC = "static"
    DYNAMIC = "dynamic"


_ENV_TOTAL = "MLX5_TOTAL_UUARS"
_ENV_LOW = "MLX5_NUM_LOW_LAT_UUARS"
_ENV_SHUT_UP_BF = "MLX5_SHUT_UP_BF"


@dataclass(frozen=True)
class EnvConfig:
    """Provider environment knobs (the mlx5 environment variables)."""

    total_uuars: int = 16
    num_low_lat: int = 4
    shut_up_bf: bool = False

    def __post_init__(self):
        if self.total_uuars < 4 or self.total_uuars % 2:
            raise ValueError(f"total_uuars must be even and >= 4, got {self.total_uuars}")
        if not 0 <= self.num_low_lat <= self.total_uuars - 1:
            raise ValueError("num_low_lat may cover at most all but one uUAR")

    @classmethod
    def from_environ(cls, environ: Optional[Mapping[str, str]] = None, **overrides) -> "EnvConfig":
        """Read the mlx5 variables; keyword overrides win over the environment."""
        environ = os.environ if environ is None else environ
        values = {}
        if _ENV_TOTAL in environ:
            values["total_uuars"] = int(environ[_ENV_TOTAL])
        if _ENV_LOW in environ:
            values["num_low_lat"] = int(environ[_ENV_LOW])
        if _ENV_SHUT_UP_BF in environ:
            values["shut_up_bf"] = environ[_ENV_SHUT_UP_BF].strip() not in ("", "0")
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)

    @property
    def static_uars(self) -> int:
        return self.total_uuars // 2


class Device:
    """A live NIC: hands out UAR pages and tracks QP/CQ counts.

    With ``enforce_limits=False`` nothing is refused; plans built that way
    are checked afterwards by :func:`verbsim.accounting.feasibility`.
    """

    def __init__(self, profile: DeviceProfile = CONNECTX4, enforce_limits: bool = True):
        if not profile.has_uuars:
            raise ValueError(f"profile {profile.name!r} has no UAR structure to simulate")
        self.profile = profile
        self.enforce_limits = enforce_limits
        self.contexts: List[Context] = []
        self.uars_in_use = 0
        self.qp_count = 0
        self.cq_count = 0
        self._page_ids = itertools.count()
        self._qp_ids = itertools.count()
        self._cq_ids = itertools.count()
        self._pd_ids = itertools.count()
        self._mr_ids = itertools.count()
        self.nic = None  # attached by verbsim.datapath

    def _take_pages(self, n: int) -> List[int]:
        if self.enforce_limits and self.uars_in_use + n > self.profile.total_uars:
            raise DeviceUarExhausted(
                f"{n} UAR pages requested, {self.profile.total_uars - self.uars_in_use} left")
        self.uars_in_use += n
        return [next(self._page_ids) for _ in range(n)]

    def _return_pages(self, n: int):
        self.uars_in_use -= n


class UarPage:
    __slots__ = ("id", "ctx", "allocation", "uuars", "tds")

    def __init__(self, page_id: int, ctx: "Context", allocation: Allocation):
        self.id = page_id
        self.ctx = ctx
        self.allocation = allocation
        self.uuars: List[MicroUar] = []
        self.tds: List[ThreadDomain] = []

    @property
    def parent(self):
        return self.ctx

    def __repr__(self):
        return f"UarPage({self.id}, {self.allocation.value})"


class MicroUar:
    """One datapath register slot.  The first 8 bytes of each of its two
    buffers form the doorbell register."""

    __slots__ = ("id", "page", "slot", "latency_class", "lock", "assigned_qps", "wasted")

    DOORBELL_REGISTER_BYTES = 8

    def __init__(self, uuar_id: int, page: UarPage, slot: int, latency_class: LatencyClass):
        self.id = uuar_id
        self.page = page
        self.slot = slot
        self.latency_class = latency_class
        self.lock = threading.Lock() if latency_class is LatencyClass.MEDIUM else None
        self.assigned_qps: List[QueuePair] = []
        self.wasted = False

    @property
    def parent(self):
        return self.page

    @property
    def lock_enabled(self) -> bool:
        return self.lock is not None

    @property
    def blueflame_allowed(self) -> bool:
        return self.latency_class is not LatencyClass.HIGH

    def __repr__(self):
        return f"MicroUar({self.id}, {self.latency_class.value}, page={self.page.id})"


class Context:
    def __init__(self, device: Device, env: EnvConfig):
        self.device = device
        self.env = env
        self.static_uars: List[UarPage] = []
        self.dynamic_uars: List[UarPage] = []
        self.pds: List[ProtectionDomain] = []
        self.cqs: List[CompletionQueue] = []
        self.tds: List[ThreadDomain] = []
        self.static_uuars: List[MicroUar] = []
        self.independent_paths = 0
        self._td_ids = itertools.count()
        self._medium_rr = 0
        # sharing level -> [page awaiting its odd TD or None, TDs of that level so far]
        self._pairing: dict = {}

        ids = device._take_pages(env.static_uars)
        n_low = env.num_low_lat
        first_low = env.total_uuars - n_low
        for k, page_id in enumerate(ids):
            page = UarPage(page_id, self, Allocation.STATIC)
            for slot in (0, 1):
                index = 2 * k + slot
                if index == 0:
                    cls = LatencyClass.HIGH
                elif index >= first_low:
                    cls = LatencyClass.LOW
                else:
                    cls = LatencyClass.MEDIUM
                u = MicroUar(index, page, slot, cls)
                page.uuars.append(u)
                self.static_uuars.append(u)
            self.static_uars.append(page)
        self._low = [u for u in self.static_uuars if u.latency_class is LatencyClass.LOW]
        self._medium = [u for u in self.static_uuars if u.latency_class is LatencyClass.MEDIUM]

    @property
    def parent(self):
        return self.device

    @property
    def uars(self) -> List[UarPage]:
        return self.static_uars + self.dynamic_uars

    @property
    def uuars(self) -> List[MicroUar]:
        return [u for page in self.uars for u in page.uuars]

    @property
    def qps(self) -> List["QueuePair"]:
        return [qp for pd in self.pds for qp in pd.qps]

    def _assign_static(self) -> MicroUar:
        for u in self._low:
            if not u.assigned_qps:
                return u
        if self._medium:
            u = self._medium[self._medium_rr % len(self._medium)]
            self._medium_rr += 1
            return u
        return self.static_uuars[0]

    def _new_dynamic_page(self) -> UarPage:
        limit = self.device.profile.max_dynamic_uars_per_ctx
        if self.device.enforce_limits and len(self.dynamic_uars) >= limit:
            raise DynamicUarLimit(f"context already holds {limit} dynamic UARs")
        (page_id,) = self.device._take_pages(1)
        page = UarPage(page_id, self, Allocation.DYNAMIC)
        base = self.env.total_uuars + 2 * len(self.dynamic_uars)
        for slot in (0, 1):
            page.uuars.append(MicroUar(base + slot, page, slot, LatencyClass.DEDICATED))
        self.dynamic_uars.append(page)
        return page

    def __repr__(self):
        return f"Context(static={len(self.static_uars)}, dynamic={len(self.dynamic_uars)})"


class ThreadDomain:
    __slots__ = ("id", "ctx", "sharing", "uuar", "qps")

    def __init__(self, td_id: int, ctx: Context, sharing: int, uuar: MicroUar):
        self.id = td_id
        self.ctx = ctx
        self.sharing = sharing
        self.uuar = uuar
        self.qps: List[QueuePair] = []

    @property
    def parent(self):
        return self.ctx

    def __repr__(self):
        return f"ThreadDomain({self.id}, sharing={self.sharing}, uuar={self.uuar.id})"


class ProtectionDomain:
    __slots__ = ("id", "ctx", "mrs", "qps")

    def __init__(self, pd_id: int, ctx: Context):
        self.id = pd_id
        self.ctx = ctx
        self.mrs: List[MemoryRegion] = []
        self.qps: List[QueuePair] = []

    @property
    def parent(self):
        return self.ctx

    def covers(self, address: int, length: int) -> bool:
        end = address + max(length, 1)
        return any(mr.base <= address and end <= mr.end for mr in self.mrs)


@dataclass(frozen=True)
class Buffer:
    """Payload memory; not owned by any Verbs object."""

    base: int
    length: int
    alignment: int = CACHE_LINE_BYTES

    @property
    def end(self) -> int:
        return self.base + self.length

    @property
    def cache_lines(self) -> range:
        first = self.base // CACHE_LINE_BYTES
        last = (self.end - 1) // CACHE_LINE_BYTES
        return range(first, last + 1)


class AddressSpace:
    """Bump allocator handing out buffer addresses for a plan."""

    def __init__(self, start: int = 0x10000):
        self._next = start

    def alloc(self, length: int, alignment: int = CACHE_LINE_BYTES) -> Buffer:
        base = -(-self._next // alignment) * alignment
        self._next = base + length
        return Buffer(base, length, alignment)


class MemoryRegion:
    __slots__ = ("id", "pd", "base", "length", "buffers")

    def __init__(self, mr_id: int, pd: ProtectionDomain, base: int, length: int,
                 buffers: Sequence[Buffer]):
        self.id = mr_id
        self.pd = pd
        self.base = base
        self.length = length
        self.buffers = tuple(buffers)

    @property
    def parent(self):
        return self.pd

    @property
    def end(self) -> int:
        return self.base + self.length


class QueuePair:
    __slots__ = ("id", "pd", "cq", "depth", "td", "uuar", "lock", "remaining_depth",
                 "depth_lock", "next_ordinal", "completed_ordinal", "unsignaled_run",
                 "low_water", "last_cqe_ordinal", "__weakref__")

    def __init__(self, qp_id, pd, cq, depth, td, uuar):
        self.id = qp_id
        self.pd = pd
        self.cq = cq
        self.depth = depth
        self.td = td
        self.uuar = uuar
        self.lock = None if td is not None else threading.Lock()
        self.remaining_depth = depth
        self.depth_lock = threading.Lock()
        self.next_ordinal = 0
        self.completed_ordinal = -1
        self.unsignaled_run = 0
        self.low_water = depth
        self.last_cqe_ordinal = -1

    @property
    def parent(self):
        return self.pd

    @property
    def ctx(self) -> Context:
        return self.pd.ctx

    @property
    def lock_enabled(self) -> bool:
        return self.lock is not None

    def __repr__(self):
        return f"QueuePair({self.id}, uuar={self.uuar.id}, td={self.td is not None})"


class CompletionQueue:
    __slots__ = ("id", "ctx", "depth", "single_threaded", "lock", "pending", "qps",
                 "high_water")

    def __init__(self, cq_id: int, ctx: Context, depth: int, single_threaded: bool):
        self.id = cq_id
        self.ctx = ctx
        self.depth = depth
        self.single_threaded = single_threaded
        self.lock = None if single_threaded else threading.Lock()
        self.pending = deque()
        self.qps: List[QueuePair] = []
        self.high_water = 0

    @property
    def parent(self):
        return self.ctx

    @property
    def lock_enabled(self) -> bool:
        return self.lock is not None


def open_device(device: Union[Device, DeviceProfile], env: Optional[EnvConfig] = None) -> Context:
    """Open a context, mapping its statically allocated UAR pages."""
    if isinstance(device, DeviceProfile):
        device = Device(device)
    ctx = Context(device, env if env is not None else EnvConfig())
    device.contexts.append(ctx)
    return ctx


def close_context(ctx: Context):
    device = ctx.device
    device._return_pages(len(ctx.static_uars) + len(ctx.dynamic_uars))
    device.qp_count -= len(ctx.qps)
    device.cq_count -= len(ctx.cqs)
    device.contexts.remove(ctx)


def alloc_pd(ctx: Context) -> ProtectionDomain:
    pd = ProtectionDomain(next(ctx.device._pd_ids), ctx)
    ctx.pds.append(pd)
    return pd


def alloc_td(ctx: Context, sharing: int = 1) -> ThreadDomain:
    """Create a thread domain with the given hardware sharing level."""
    if sharing not in (1, 2):
        raise ValueError("mlx5 supports sharing levels 1 and 2 only")
    profile = ctx.device.profile
    if sharing == 1:
        limit = profile.max_independent_paths_per_ctx
        if ctx.device.enforce_limits and ctx.independent_paths >= limit:
            raise IndependentPathLimit(f"context already has {limit} independent paths")
        page = ctx._new_dynamic_page()
        uuar = page.uuars[0]
        page.uuars[1].wasted = True
        ctx.independent_paths += 1
    else:
        state = ctx._pairing.setdefault(sharing, [None, 0])
        if state[1] % 2 == 0:
            page = ctx._new_dynamic_page()
            uuar = page.uuars[0]
            state[0] = page
        else:
            page = state[0]
            uuar = page.uuars[1]
        state[1] += 1
    td = ThreadDomain(next(ctx._td_ids), ctx, sharing, uuar)
    page.tds.append(td)
    ctx.tds.append(td)
    return td


def destroy_td(td: ThreadDomain):
    if td.qps:
        raise ValueError("thread domain still has QPs")
    ctx = td.ctx
    page = td.uuar.page
    page.tds.remove(td)
    ctx.tds.remove(td)
    if td.sharing == 1:
        ctx.independent_paths -= 1
    if not page.tds:
        state = ctx._pairing.get(td.sharing)
        if state is not None and state[0] is page:
            state[0] = None
            state[1] += state[1] % 2
        ctx.dynamic_uars.remove(page)
        ctx.device._return_pages(1)


def create_cq(ctx: Context, depth: int, single_threaded: bool = False) -> CompletionQueue:
    if depth < 1:
        raise ValueError("CQ depth must be positive")
    device = ctx.device
    if device.enforce_limits and device.cq_count >= device.profile.max_cqs:
        raise CqLimitExceeded(f"device already has {device.profile.max_cqs} CQs")
    cq = CompletionQueue(next(device._cq_ids), ctx, depth, single_threaded)
    device.cq_count += 1
    ctx.cqs.append(cq)
    return cq


def create_qp(pd: ProtectionDomain, cq: CompletionQueue, depth: int,
              td: Optional[ThreadDomain] = None) -> QueuePair:
    """Create a send queue and bind it to a uUAR."""
    if depth < 1:
        raise ValueError("QP depth must be positive")
    ctx = pd.ctx
    if cq.ctx is not ctx or (td is not None and td.ctx is not ctx):
        raise CrossCtxAssociation("PD, CQ and TD must belong to one context")
    device = ctx.device
    if device.enforce_limits and device.qp_count >= device.profile.max_qps:
        raise QpLimitExceeded(f"device already has {device.profile.max_qps} QPs")
    uuar = td.uuar if td is not None else ctx._assign_static()
    qp = QueuePair(next(device._qp_ids), pd, cq, depth, td, uuar)
    uuar.assigned_qps.append(qp)
    if td is not None:
        td.qps.append(qp)
    pd.qps.append(qp)
    cq.qps.append(qp)
    device.qp_count += 1
    return qp


def destroy_qp(qp: QueuePair):
    qp.uuar.assigned_qps.remove(qp)
    if qp.td is not None:
        qp.td.qps.remove(qp)
    qp.pd.qps.remove(qp)
    qp.cq.qps.remove(qp)
    qp.ctx.device.qp_count -= 1


def reg_mr(pd: ProtectionDomain, buffers: Union[Buffer, Iterable[Buffer]]) -> MemoryRegion:
    """Register one buffer, or the contiguous area spanning several."""
    bufs = [buffers] if isinstance(buffers, Buffer) else list(buffers)
    if not bufs or any(b.length <= 0 for b in bufs):
        raise EmptyRange("cannot register an empty address range")
    base = min(b.base for b in bufs)
    end = max(b.end for b in bufs)
    mr = MemoryRegion(next(pd.ctx.device._mr_ids), pd, base, end - base, bufs)
    pd.mrs.append(mr)
    return mr
