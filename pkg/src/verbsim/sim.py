"""Performance model: turns an endpoint plan plus a workload into a message rate.

Every thread of the plan is a process of :class:`~verbsim.engine.Engine`
running the benchmark loop: post WQEs in batches of ``p`` while its
window of ``d`` outstanding WQEs allows, signal every ``q``-th WQE, and
poll its CQ for up to ``d // q`` completions.  The real datapath
(:class:`~verbsim.datapath.Nic` in deferred mode) executes every post and
poll, so PCIe counters come out of the same run.

Thread-side costs (in ticks):

* post: QP lock if the QP has one, an atomic if several threads share the
  QP, ``t_wqe_prep`` per WQE, the uUAR lock for medium-latency uUARs, then
  one BlueFlame write or one doorbell;
* poll: CQ lock if the CQ has one, ``t_poll_per_cqe`` per CQE (at least
  one), and an atomic per CQE when the CQ is shared.

NIC-side service, computed as FIFO servers in arrival order:

* a doorbell makes the UAR page's fetch unit read the WQEs (``t_dma_read``
  per batch, serialized per page);
* each non-inline payload read occupies translation engine
  ``tlb_engine(addr)`` for ``t_dma_read``;
* a signaled WQE's CQE lands ``t_ack_delay + t_dma_write`` after its last
  read, never before the QP's previous CQE.

BlueFlame writes are stretched by ``uar_share_bf_penalty`` when another
uUAR of the same UAR page carries traffic, and by
``independent_16way_bf_penalty`` when the context holds exactly 16
sharing-1 thread domains.
"""
from __future__ import annotations

import json
from collections import deque
from dataclasses import asdict, dataclass, field, fields, replace
from importlib import resources
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import jsonschema

from .datapath import Nic, PcieCounters, PostBatch, SubmitMode, Wqe
from .device import tlb_engine
from .endpoints import EndpointPlan, WorkloadKind, WorkloadSpec
from .engine import PARK, Acquire, Engine, SimLock
from .errors import InfeasiblePlan
from .verbs import LatencyClass


@dataclass(frozen=True)
class SimParams:
    t_wqe_prep: float = 40
    t_doorbell_mmio: float = 70
    t_blueflame_write: float = 60
    t_dma_read: float = 30
    t_dma_write: float = 20
    t_ack_delay: float = 1500
    t_poll_per_cqe: float = 15
    t_lock_acquire: float = 5
    t_atomic_op: float = 20
    uar_share_bf_penalty: float = 2.2
    independent_16way_bf_penalty: float = 1.15
    tlb_engines: int = 16

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name.startswith("t_") and value < 0:
                raise ValueError(f"{f.name} must be >= 0")
        if self.uar_share_bf_penalty < 1 or self.independent_16way_bf_penalty < 1:
            raise ValueError("penalty multipliers must be >= 1")
        if self.tlb_engines < 1:
            raise ValueError("tlb_engines must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, residuals: Optional[Dict[str, float]] = None, **kw) -> str:
        data = {"params": self.to_dict()}
        if residuals is not None:
            data["residuals"] = residuals
        return json.dumps(data, indent=kw.pop("indent", 2), **kw)

    @classmethod
    def from_dict(cls, data) -> "SimParams":
        data = dict(data)
        if "params" in data:
            data = dict(data["params"])
        jsonschema.validate(data, _params_schema())
        return cls(**data)

    @classmethod
    def from_json(cls, text: str) -> "SimParams":
        return cls.from_dict(json.loads(text))

    @classmethod
    def load(cls, path: Union[str, Path]) -> "SimParams":
        return cls.from_json(Path(path).read_text())


def _params_schema() -> dict:
    text = resources.files("verbsim.schemas").joinpath("params.schema.json").read_text()
    return json.loads(text)


def default_params_file() -> dict:
    text = resources.files("verbsim.data").joinpath("params_default.json").read_text()
    return json.loads(text)


def default_params() -> SimParams:
    """The calibrated parameter set shipped with the package."""
    return SimParams.from_dict(default_params_file())


@dataclass
class SimResult:
    messages_per_tick: float
    makespan: int
    per_thread_messages: List[int]
    lock_wait_ticks: Dict[str, int]
    tlb_busy_ticks: List[int]
    counters: PcieCounters
    events: int = 0

    @property
    def total_messages(self) -> int:
        return sum(self.per_thread_messages)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["counters"] = self.counters.to_dict()
        return d


def _ticks(x: float) -> int:
    return int(round(x))


class _Stream:
    """Per-thread, per-QP sending state."""

    __slots__ = ("qp", "path", "outstanding", "since_signal", "batches", "buffer")

    def __init__(self, qp, path, buffer):
        self.qp = qp
        self.path = path
        self.buffer = buffer
        self.outstanding = 0
        self.since_signal = 0
        self.batches = {}


class _Thread:
    __slots__ = ("index", "streams", "cq", "completed", "sent", "proc", "cq_lock")

    def __init__(self, index):
        self.index = index
        self.streams: List[_Stream] = []
        self.cq = None
        self.completed = 0
        self.sent = 0
        self.proc = None


class _Model:
    def __init__(self, plan: EndpointPlan, workload: WorkloadSpec, params: SimParams, seed: int):
        self.plan = plan
        self.wl = workload
        self.p = params
        self.engine = Engine(seed)
        self.nic = Nic(plan.device, deferred=True)
        plan.device.nic = self.nic
        profile = plan.profile
        if workload.inline and workload.message_size > profile.max_inline_bytes:
            raise ValueError("message size exceeds the inline limit")

        # integer costs
        self.c_prep = _ticks(params.t_wqe_prep)
        self.c_db = _ticks(params.t_doorbell_mmio)
        self.c_read = _ticks(params.t_dma_read)
        self.c_done = _ticks(params.t_ack_delay + params.t_dma_write)
        self.c_poll = _ticks(params.t_poll_per_cqe)
        self.c_lock = _ticks(params.t_lock_acquire)
        self.c_atomic = _ticks(params.t_atomic_op)
        self.engines = params.tlb_engines

        self.threads: List[_Thread] = []
        qp_users: Dict[int, set] = {}
        cq_users: Dict[int, set] = {}
        for i, (qps, bufs, paths) in enumerate(zip(plan.thread_qps, plan.thread_buffers,
                                                    plan.thread_paths)):
            th = _Thread(i)
            for k, qp in enumerate(qps):
                th.streams.append(_Stream(qp, k, bufs[k]))
                if k in paths:
                    qp_users.setdefault(qp.id, set()).add(i)
                cq_users.setdefault(qp.cq.id, set()).add(i)
            cqs = {qp.cq.id for qp in qps}
            if len(cqs) != 1:
                raise ValueError("each thread must complete into a single CQ")
            th.cq = qps[0].cq
            self.threads.append(th)

        self.qp_shared = {qid: len(u) > 1 for qid, u in qp_users.items()}
        self.cq_shared = {cid: len(u) > 1 for cid, u in cq_users.items()}
        self.qp_locks: Dict[int, SimLock] = {}
        self.uuar_locks: Dict[int, SimLock] = {}
        self.cq_locks: Dict[int, SimLock] = {}
        self.cq_waiters: Dict[int, List[_Thread]] = {}
        self.page_free: Dict[int, int] = {}
        self.engine_free = [0] * self.engines
        self.engine_busy = [0] * self.engines
        self.last_cqe: Dict[int, int] = {}
        self.cqe_fifo: Dict[int, deque] = {}
        self.owner: Dict[Tuple[int, int], Tuple[int, int, int]] = {}
        self.bf_cost: Dict[int, int] = {}
        self._penalties(params)

    def _penalties(self, params: SimParams):
        active = set()
        for th in self.threads:
            for k in self.plan.thread_paths[th.index]:
                active.add(th.streams[k].qp.uuar)
        for th in self.threads:
            for s in th.streams:
                qp = s.qp
                if qp.id in self.bf_cost:
                    continue
                cost = params.t_blueflame_write
                page = qp.uuar.page
                if sum(1 for u in page.uuars if u in active) >= 2:
                    cost *= params.uar_share_bf_penalty
                ctx = qp.ctx
                if sum(1 for td in ctx.tds if td.sharing == 1) == 16:
                    cost *= params.independent_16way_bf_penalty
                self.bf_cost[qp.id] = _ticks(cost)

    def _lock(self, table, key, name):
        lock = table.get(key)
        if lock is None:
            lock = table[key] = SimLock(name)
        return lock

    # ------------------------------------------------------------ threads

    def _post(self, th: _Thread, s: _Stream, n: int, last: bool):
        """Generator: post ``n`` WQEs on stream ``s``."""
        wl = self.wl
        q = wl.unsignaled
        mask = []
        run = s.since_signal
        for i in range(n):
            run += 1
            sig = run >= q or (last and i == n - 1)
            mask.append(sig)
            if sig:
                run = 0
        covered = []
        c = s.since_signal
        for sig in mask:
            c += 1
            if sig:
                covered.append(c)
                c = 0
        s.since_signal = c
        qp = s.qp
        blueflame = (wl.blueflame and n == 1 and qp.uuar.blueflame_allowed
                     and not qp.ctx.env.shut_up_bf
                     and (wl.inline or wl.message_size <= qp.ctx.device.profile.max_inline_bytes))
        key = (n, tuple(mask), blueflame)
        batch = s.batches.get(key)
        if batch is None:
            addr = s.buffer[0].base
            wqes = [Wqe(addr, wl.message_size, wl.inline, sig, th.index) for sig in mask]
            batch = PostBatch(qp, wqes, SubmitMode.BLUEFLAME if blueflame else SubmitMode.DOORBELL)
            s.batches[key] = batch

        cost = 0
        qlock = None
        if qp.lock is not None:
            qlock = self._lock(self.qp_locks, qp.id, f"qp{qp.id}")
            yield Acquire(qlock)
            cost += self.c_lock
        if self.qp_shared.get(qp.id):
            cost += self.c_atomic
        cost += n * self.c_prep
        ulock = None
        if qp.uuar.lock is not None:
            if cost:
                yield cost
                cost = 0
            ulock = self._lock(self.uuar_locks, id(qp.uuar), f"uuar{qp.uuar.page.id}.{qp.uuar.slot}")
            yield Acquire(ulock)
            cost += self.c_lock
        cost += self.bf_cost[qp.id] if blueflame else self.c_db
        yield cost
        receipt = self.nic.post_send(batch)
        if ulock is not None:
            self.engine.release(ulock)
        if qlock is not None:
            self.engine.release(qlock)
        s.outstanding += n
        th.sent += n
        self._schedule_completions(qp, batch, blueflame, receipt, th, s, covered)

    def _schedule_completions(self, qp, batch, blueflame, receipt, th, s, covered):
        now = self.engine.now
        if blueflame:
            t = now
        else:
            page = qp.uuar.page.id
            start = self.page_free.get(page, 0)
            if start < now:
                start = now
            t = start + self.c_read
            self.page_free[page] = t
        read = self.c_read
        engines = self.engines
        ef = self.engine_free
        busy = self.engine_busy
        last = self.last_cqe.get(qp.id, 0)
        k = 0
        first = receipt.first_ordinal
        for i, w in enumerate(batch.wqes):
            if not w.inline:
                e = tlb_engine(w.payload_addr, engines)
                st = ef[e] if ef[e] > t else t
                ef[e] = st + read
                busy[e] += read
                done = st + read
            else:
                done = t
            if w.signaled:
                when = done + self.c_done
                if when < last:
                    when = last
                last = when
                ordinal = first + i
                self.owner[(qp.id, ordinal)] = (th.index, s.path, covered[k])
                k += 1
                fifo = self.cqe_fifo.get(qp.id)
                if fifo is None:
                    fifo = self.cqe_fifo[qp.id] = deque()
                fifo.append((ordinal, w.wr_id))
                # each event delivers the QP's oldest CQE, so ties keep order
                self.engine.at(when, self._deliver, qp)
        self.last_cqe[qp.id] = last

    def _deliver(self, qp):
        ordinal, wr_id = self.cqe_fifo[qp.id].popleft()
        self.nic.complete(qp, ordinal, wr_id)
        waiters = self.cq_waiters.get(qp.cq.id)
        if waiters:
            self.cq_waiters[qp.cq.id] = []
            for th in waiters:
                self.engine.wake(th.proc)

    def _poll(self, th: _Thread):
        cq = th.cq
        lock = None
        cost = 0
        if cq.lock is not None:
            lock = self._lock(self.cq_locks, cq.id, f"cq{cq.id}")
            yield Acquire(lock)
            cost += self.c_lock
        cqes = self.nic.poll_cq(cq, self.wl.completions_per_poll)
        n = len(cqes)
        cost += self.c_poll * (n if n > 1 else 1)
        if self.cq_shared.get(cq.id):
            cost += self.c_atomic * n
        yield cost
        if lock is not None:
            self.engine.release(lock)
        threads = self.threads
        for cqe in cqes:
            owner, path, count = self.owner.pop((cqe.qp_id, cqe.ordinal))
            o = threads[owner]
            o.streams[path].outstanding -= count
            o.completed += count
            if o is not th and o.proc.parked:
                self.engine.wake(o.proc)
        return n

    def _wait(self, th: _Thread):
        """Park until a CQE lands in the thread's CQ or a peer credits it."""
        cq = th.cq
        if cq.pending:
            return
        waiters = self.cq_waiters.setdefault(cq.id, [])
        if th not in waiters:
            waiters.append(th)
        yield PARK

    def _send(self, th: _Thread, s: _Stream, count: int):
        """Send ``count`` WQEs on one stream and wait until all complete."""
        wl = self.wl
        d = wl.depth
        p = wl.postlist
        target = th.completed + count
        left = count
        while True:
            posted = False
            if left > 0:
                n = p if p < left else left
                if s.outstanding + n <= d:
                    yield from self._post(th, s, n, last=(n == left))
                    left -= n
                    posted = True
            if th.completed >= target and left == 0:
                return
            if th.cq.pending:
                yield from self._poll(th)
            elif not posted:
                yield from self._wait(th)
            elif th.sent - th.completed > 0:
                # empty poll after a post, as the benchmark loop does
                yield from self._poll(th)

    def _drain(self, th: _Thread):
        while th.sent > th.completed:
            if th.cq.pending:
                yield from self._poll(th)
            else:
                yield from self._wait(th)

    # ------------------------------------------------------------ workloads

    def _message_rate(self, th: _Thread):
        s = th.streams[self.plan.thread_paths[th.index][0]]
        yield from self._send(th, s, self.wl.messages)

    def _global_array(self, th: _Thread):
        wl = self.wl
        s = th.streams[0]
        bufs = s.buffer
        for _ in range(wl.tasks):
            for tile in (0, 1):
                s.buffer = bufs[tile:tile + 1] + bufs
                yield from self._send(th, s, wl.tile_messages)
            if wl.compute_delay:
                yield wl.compute_delay
            s.buffer = bufs[2:3] + bufs
            yield from self._send(th, s, wl.tile_messages)
        s.buffer = bufs

    def _stencil(self, th: _Thread, barrier):
        wl = self.wl
        T = self.plan.threads
        per_stream = -(-(wl.grid_width // T) // wl.cells_per_message)
        per_stream = max(per_stream, 1)
        paths = self.plan.thread_paths[th.index]
        for _ in range(wl.iterations):
            for k in paths:
                s = th.streams[k]
                yield from self._send_nowait(th, s, per_stream)
            yield from self._drain(th)
            yield from barrier.wait(th)

    def _send_nowait(self, th: _Thread, s: _Stream, count: int):
        wl = self.wl
        d = wl.depth
        p = wl.postlist
        left = count
        while left > 0:
            n = p if p < left else left
            if s.outstanding + n <= d:
                yield from self._post(th, s, n, last=(n == left))
                left -= n
                if th.cq.pending:
                    yield from self._poll(th)
            elif th.cq.pending:
                yield from self._poll(th)
            else:
                yield from self._wait(th)

    def run(self) -> SimResult:
        wl = self.wl
        eng = self.engine
        barrier = _Barrier(eng, len(self.threads)) if wl.kind is WorkloadKind.STENCIL else None
        finish = [0] * len(self.threads)

        def body(th):
            if wl.kind is WorkloadKind.MESSAGE_RATE:
                yield from self._message_rate(th)
            elif wl.kind is WorkloadKind.GLOBAL_ARRAY:
                yield from self._global_array(th)
            else:
                yield from self._stencil(th, barrier)
            finish[th.index] = eng.now

        for th in self.threads:
            th.proc = eng.spawn(body(th), f"thread{th.index}")
        eng.run()
        stuck = [th.index for th in self.threads if not th.proc.done]
        if stuck:
            raise RuntimeError(f"simulation stalled with threads {stuck} unfinished")
        makespan = max(finish) if finish else 0
        per_thread = [th.sent for th in self.threads]
        total = sum(per_thread)
        locks = {}
        for table in (self.qp_locks, self.uuar_locks, self.cq_locks):
            for lock in table.values():
                locks[lock.name] = lock.wait_ticks
        return SimResult(
            messages_per_tick=total / makespan if makespan else 0.0,
            makespan=makespan,
            per_thread_messages=per_thread,
            lock_wait_ticks=locks,
            tlb_busy_ticks=list(self.engine_busy),
            counters=self.nic.snapshot(),
            events=eng.events,
        )


class _Barrier:
    def __init__(self, engine: Engine, parties: int):
        self.engine = engine
        self.parties = parties
        self.waiting = []
        self.generation = 0

    def wait(self, th):
        gen = self.generation
        self.waiting.append(th)
        if len(self.waiting) == self.parties:
            others, self.waiting = self.waiting, []
            self.generation += 1
            for o in others:
                if o is not th:
                    self.engine.wake(o.proc)
            return
        while self.generation == gen:
            yield PARK


def run_sim(plan: EndpointPlan, workload: Optional[WorkloadSpec] = None,
            params: Optional[SimParams] = None, seed: int = 0) -> SimResult:
    """Simulate ``workload`` on a fresh copy of ``plan``.

    The plan is rebuilt from its recipe, so the caller's object graph is
    never mutated and repeated calls see identical starting state.
    """
    from .accounting import feasibility

    violations = feasibility(plan)
    if violations:
        raise InfeasiblePlan(violations)
    workload = workload or WorkloadSpec()
    params = params or default_params()
    fresh = plan.fresh()
    return _Model(fresh, workload, params, seed).run()
