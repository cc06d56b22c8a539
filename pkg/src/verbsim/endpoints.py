"""Scalable-endpoint builders, sharing sweeps and workload definitions.

Every builder is a pure function of its arguments: it opens a fresh
:class:`~verbsim.verbs.Device`, creates the object graph in a fixed order
and records a ``recipe`` dict from which :func:`rebuild_plan` reproduces
the identical graph.  Plans are built on a device that does not enforce
limits and are then checked with :func:`verbsim.accounting.feasibility`.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

from .device import CONNECTX4, DeviceProfile, builtin_profile
from .errors import InfeasiblePlan
from .verbs import (
    AddressSpace,
    Buffer,
    Context,
    Device,
    EnvConfig,
    QueuePair,
    alloc_pd,
    alloc_td,
    create_cq,
    create_qp,
    open_device,
    reg_mr,
)

SWEEP_WAYS = (1, 2, 4, 8, 16)
SWEEP_RESOURCES = ("buf", "ctx", "pd", "mr", "cq", "qp")
STENCIL_THREADS = 16


class EndpointCategory(Enum):
    MPI_EVERYWHERE = "mpi-everywhere"
    TWO_X_DYNAMIC = "2xdynamic"
    DYNAMIC = "dynamic"
    SHARED_DYNAMIC = "shared-dynamic"
    STATIC = "static"
    MPI_THREADS = "mpi-threads"

    @classmethod
    def parse(cls, name) -> "EndpointCategory":
        if isinstance(name, cls):
            return name
        key = str(name).lower().replace("_", "").replace("-", "").replace(" ", "")
        for member in cls:
            if key in (member.value.replace("-", ""), member.name.lower().replace("_", "")):
                return member
        raise ValueError(f"unknown endpoint category {name!r}")


CATEGORIES = tuple(EndpointCategory)


class WorkloadKind(Enum):
    MESSAGE_RATE = "message-rate"
    GLOBAL_ARRAY = "global-array"
    STENCIL = "stencil"


@dataclass(frozen=True)
class WorkloadSpec:
    """What each thread sends.

    ``depth`` (d), ``postlist`` (p) and ``unsignaled`` (q) are per thread;
    each poll asks for ``d // q`` completions.
    """

    kind: WorkloadKind = WorkloadKind.MESSAGE_RATE
    message_size: int = 2
    messages: int = 1024
    depth: int = 128
    postlist: int = 32
    unsignaled: int = 64
    inline: bool = True
    blueflame: bool = True
    # global array: per task one tile of A, one of B, one of C
    tasks: int = 2
    tile_messages: int = 64
    compute_delay: int = 0
    # stencil: halo cells per rank boundary, split across the rank's threads
    grid_width: int = 512
    iterations: int = 1
    cells_per_message: int = 1
    nodes: int = 2

    def __post_init__(self):
        for name in ("message_size", "messages", "depth", "postlist", "unsignaled",
                     "tasks", "tile_messages", "grid_width", "iterations",
                     "cells_per_message", "nodes"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.depth % self.unsignaled:
            raise ValueError("unsignaled interval q must divide the QP depth d")
        if self.depth % self.postlist:
            raise ValueError("postlist size p must divide the QP depth d")
        if self.compute_delay < 0:
            raise ValueError("compute_delay must be non-negative")

    @property
    def completions_per_poll(self) -> int:
        return self.depth // self.unsignaled

    @classmethod
    def message_rate(cls, **kw) -> "WorkloadSpec":
        return cls(kind=WorkloadKind.MESSAGE_RATE, **kw)

    @classmethod
    def global_array(cls, **kw) -> "WorkloadSpec":
        # latency-oriented semantics: no postlist, every WQE signaled, BlueFlame on
        kw = {"postlist": 1, "unsignaled": 1, "blueflame": True, **kw}
        return cls(kind=WorkloadKind.GLOBAL_ARRAY, **kw)

    @classmethod
    def stencil(cls, **kw) -> "WorkloadSpec":
        kw = {"postlist": 1, "unsignaled": 1, "blueflame": True, "message_size": 8, **kw}
        return cls(kind=WorkloadKind.STENCIL, **kw)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kind"] = self.kind.value
        return d

    @classmethod
    def from_dict(cls, data) -> "WorkloadSpec":
        data = dict(data)
        data["kind"] = WorkloadKind(data.get("kind", "message-rate"))
        return cls(**data)


@dataclass
class EndpointPlan:
    """A built object graph plus the thread-to-QP map.

    ``thread_qps[i]`` lists the QPs thread ``i`` drives (two for stencil
    threads, one per neighbor); ``thread_paths[i]`` lists which of those
    carry traffic; ``thread_buffers[i][k]`` are the payload buffers used
    on ``thread_qps[i][k]``.
    """

    category: Optional[EndpointCategory]
    threads: int
    processes: int
    device: Device
    thread_qps: List[List[QueuePair]]
    thread_buffers: List[List[List[Buffer]]]
    recipe: dict
    thread_paths: List[List[int]] = field(default_factory=list)
    label: str = ""

    def __post_init__(self):
        if not self.thread_paths:
            self.thread_paths = [list(range(len(q))) for q in self.thread_qps]

    @property
    def profile(self) -> DeviceProfile:
        return self.device.profile

    @property
    def total_threads(self) -> int:
        return len(self.thread_qps)

    @property
    def contexts(self) -> List[Context]:
        return self.device.contexts

    @property
    def pds(self):
        return [pd for ctx in self.contexts for pd in ctx.pds]

    @property
    def mrs(self):
        return [mr for pd in self.pds for mr in pd.mrs]

    @property
    def qps(self):
        return [qp for ctx in self.contexts for qp in ctx.qps]

    @property
    def cqs(self):
        return [cq for ctx in self.contexts for cq in ctx.cqs]

    @property
    def tds(self):
        return [td for ctx in self.contexts for td in ctx.tds]

    @property
    def buffers(self) -> List[Buffer]:
        seen = {}
        for per_thread in self.thread_buffers:
            for bufs in per_thread:
                for b in bufs:
                    seen.setdefault(b, None)
        return list(seen)

    def fresh(self) -> "EndpointPlan":
        return rebuild_plan(self.recipe)

    def to_dict(self) -> dict:
        return {
            "recipe": self.recipe,
            "label": self.label,
            "contexts": [
                {
                    "static_uars": [p.id for p in ctx.static_uars],
                    "dynamic_uars": [p.id for p in ctx.dynamic_uars],
                    "tds": [{"id": td.id, "sharing": td.sharing, "uuar": td.uuar.id}
                            for td in ctx.tds],
                    "pds": [{"id": pd.id,
                             "mrs": [[mr.base, mr.length] for mr in pd.mrs],
                             "qps": [{"id": qp.id, "cq": qp.cq.id, "uuar": qp.uuar.id,
                                      "depth": qp.depth} for qp in pd.qps]}
                            for pd in ctx.pds],
                    "cqs": [{"id": cq.id, "depth": cq.depth,
                             "single_threaded": cq.single_threaded} for cq in ctx.cqs],
                }
                for ctx in self.contexts
            ],
            "threads": [
                {"qps": [qp.id for qp in qps], "paths": paths}
                for qps, paths in zip(self.thread_qps, self.thread_paths)
            ],
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _profile_from_recipe(recipe: dict) -> DeviceProfile:
    data = recipe.get("profile", "connectx4")
    if isinstance(data, dict):
        return DeviceProfile(**data)
    return builtin_profile(data)


def _env_from_recipe(recipe: dict) -> EnvConfig:
    return EnvConfig(**recipe.get("env", {}))


def _profile_key(profile: DeviceProfile):
    try:
        if builtin_profile(profile.name) == profile:
            return profile.name
    except KeyError:
        pass
    return profile.to_dict()


def _env_dict(env: EnvConfig) -> dict:
    return asdict(env)


class _Builder:
    def __init__(self, profile: DeviceProfile, env: EnvConfig):
        self.device = Device(profile, enforce_limits=False)
        self.env = env
        self.memory = AddressSpace()

    def context(self) -> Context:
        return open_device(self.device, self.env)

    def buffers(self, n: int, size: int, aligned: bool = True) -> List[Buffer]:
        align = 64 if aligned else 1
        return [self.memory.alloc(size, align) for _ in range(n)]


def _check(plan: EndpointPlan, check: bool) -> EndpointPlan:
    if check:
        from .accounting import feasibility

        violations = feasibility(plan, plan.profile)
        if violations:
            raise InfeasiblePlan(violations)
    return plan


def _build_process(b: _Builder, category: EndpointCategory, threads: int, paths: int,
                   buffers_per_qp: int, message_size: int, qp_depth: int,
                   cqe_per_qp: int, cq_per_thread: bool, parity: str,
                   per_qp_buffers: bool):
    """Create one process's endpoints; returns (thread_qps, thread_buffers)."""
    thread_qps: List[List[QueuePair]] = []
    thread_bufs: List[List[List[Buffer]]] = []

    def own_buffers(pd, n_paths):
        per_path = []
        for _ in range(n_paths):
            bufs = b.buffers(buffers_per_qp, message_size)
            for buf in bufs:
                reg_mr(pd, buf)
            per_path.append(bufs)
        return per_path

    if category is EndpointCategory.MPI_EVERYWHERE:
        for _ in range(threads):
            ctx = b.context()
            pd = alloc_pd(ctx)
            td = alloc_td(ctx, 1)
            qps = _qps_with_cqs(ctx, pd, [td] * paths, qp_depth, cqe_per_qp, cq_per_thread)
            thread_qps.append(qps)
            thread_bufs.append(own_buffers(pd, paths))
        return thread_qps, thread_bufs

    ctx = b.context()
    pd = alloc_pd(ctx)

    if category is EndpointCategory.MPI_THREADS:
        cq = create_cq(ctx, cqe_per_qp * paths * threads, single_threaded=False)
        qps = [create_qp(pd, cq, qp_depth * threads) for _ in range(paths)]
        shared = own_buffers(pd, paths) if per_qp_buffers else None
        for _ in range(threads):
            thread_qps.append(list(qps))
            thread_bufs.append(shared if shared is not None else own_buffers(pd, paths))
        return thread_qps, thread_bufs

    if category is EndpointCategory.STATIC:
        for _ in range(threads):
            qps = _qps_with_cqs(ctx, pd, [None] * paths, qp_depth, cqe_per_qp, cq_per_thread)
            thread_qps.append(qps)
            thread_bufs.append(own_buffers(pd, paths))
        return thread_qps, thread_bufs

    sharing = 2 if category is EndpointCategory.SHARED_DYNAMIC else 1
    if category is EndpointCategory.TWO_X_DYNAMIC:
        use = 0 if parity == "even" else 1
        for _ in range(threads):
            pairs = [[alloc_td(ctx, 1), alloc_td(ctx, 1)] for _ in range(paths)]
            if cq_per_thread:
                # the used QPs of a thread share one CQ, the idle ones another
                cqs = [create_cq(ctx, cqe_per_qp * paths, single_threaded=True) for _ in range(2)]
            used = []
            for pair in pairs:
                # QPs are created in TD order so that QP parity equals TD parity
                for k, td in enumerate(pair):
                    cq = cqs[k != use] if cq_per_thread else \
                        create_cq(ctx, cqe_per_qp, single_threaded=True)
                    qp = create_qp(pd, cq, qp_depth, td)
                    if k == use:
                        used.append(qp)
            thread_qps.append(used)
            thread_bufs.append(own_buffers(pd, paths))
        return thread_qps, thread_bufs

    for _ in range(threads):
        tds = [alloc_td(ctx, sharing) for _ in range(paths)]
        qps = _qps_with_cqs(ctx, pd, tds, qp_depth, cqe_per_qp, cq_per_thread)
        thread_qps.append(qps)
        thread_bufs.append(own_buffers(pd, paths))
    return thread_qps, thread_bufs


def _qps_with_cqs(ctx, pd, tds, qp_depth, cqe_per_qp, cq_per_thread):
    """QPs for one thread, one per entry of ``tds``, each with its own
    single-threaded CQ, or all on one CQ when ``cq_per_thread``."""
    if cq_per_thread:
        cq = create_cq(ctx, cqe_per_qp * len(tds), single_threaded=True)
        return [create_qp(pd, cq, qp_depth, td) for td in tds]
    out = []
    for td in tds:
        cq = create_cq(ctx, cqe_per_qp, single_threaded=True)
        out.append(create_qp(pd, cq, qp_depth, td))
    return out


def build_endpoints(category, threads: int, processes: int = 1,
                    profile: DeviceProfile = CONNECTX4, env: Optional[EnvConfig] = None,
                    workload: Optional[WorkloadSpec] = None, parity: str = "even",
                    check: bool = True) -> EndpointPlan:
    """Build the endpoint configuration of one category.

    ``threads`` is per process; every process gets its own copy of the
    category recipe on the shared NIC.
    """
    category = EndpointCategory.parse(category)
    if threads < 1 or processes < 1:
        raise ValueError("threads and processes must be at least 1")
    if parity not in ("even", "odd"):
        raise ValueError("parity must be 'even' or 'odd'")
    env = env or EnvConfig()
    workload = workload or WorkloadSpec()
    recipe = {
        "builder": "endpoints",
        "category": category.value,
        "threads": threads,
        "processes": processes,
        "profile": _profile_key(profile),
        "env": _env_dict(env),
        "workload": workload.to_dict(),
        "parity": parity,
    }
    ga = workload.kind is WorkloadKind.GLOBAL_ARRAY
    b = _Builder(profile, env)
    all_qps, all_bufs = [], []
    for _ in range(processes):
        qps, bufs = _build_process(
            b, category, threads, paths=1, buffers_per_qp=3 if ga else 1,
            message_size=workload.message_size, qp_depth=workload.depth,
            cqe_per_qp=workload.completions_per_poll, cq_per_thread=False,
            parity=parity, per_qp_buffers=ga)
        all_qps += qps
        all_bufs += bufs
    plan = EndpointPlan(category, threads, processes, b.device, all_qps, all_bufs, recipe,
                        label=category.value)
    return _check(plan, check)


def build_global_array(category, threads: int = 16, processes: int = 1,
                       profile: DeviceProfile = CONNECTX4, env: Optional[EnvConfig] = None,
                       **workload_kw) -> Tuple[EndpointPlan, WorkloadSpec]:
    workload = WorkloadSpec.global_array(**workload_kw)
    plan = build_endpoints(category, threads, processes, profile, env, workload)
    return plan, workload


def stencil_neighbors(processes: int, rank: int, nodes: int = 2) -> List[int]:
    """Paths (0 = lower neighbor, 1 = upper neighbor) of a rank on node 0.

    Ranks are chained across ``nodes`` nodes in a 1-D partition; only the
    global first rank lacks a lower neighbor.
    """
    total = processes * nodes
    paths = []
    if rank > 0:
        paths.append(0)
    if rank < total - 1:
        paths.append(1)
    return paths


def build_stencil(processes: int, threads_per_process: int, grid: Optional[int] = None,
                  category=EndpointCategory.MPI_EVERYWHERE,
                  profile: DeviceProfile = CONNECTX4, env: Optional[EnvConfig] = None,
                  check: bool = True, **workload_kw) -> Tuple[EndpointPlan, WorkloadSpec]:
    """Endpoints for the 1-D five-point stencil on the simulated node.

    Each thread owns two QPs, one per neighbor, both completing into one
    CQ.  The product ``processes * threads_per_process`` must be 16.
    """
    if processes * threads_per_process != STENCIL_THREADS:
        raise ValueError(f"processes x threads must be {STENCIL_THREADS}")
    category = EndpointCategory.parse(category)
    if grid is not None:
        workload_kw["grid_width"] = grid
    workload = WorkloadSpec.stencil(**workload_kw)
    env = env or EnvConfig()
    recipe = {
        "builder": "stencil",
        "category": category.value,
        "processes": processes,
        "threads": threads_per_process,
        "profile": _profile_key(profile),
        "env": _env_dict(env),
        "workload": workload.to_dict(),
    }
    b = _Builder(profile, env)
    all_qps, all_bufs, all_paths = [], [], []
    for rank in range(processes):
        qps, bufs = _build_process(
            b, category, threads_per_process, paths=2, buffers_per_qp=1,
            message_size=workload.message_size, qp_depth=workload.depth,
            cqe_per_qp=workload.completions_per_poll, cq_per_thread=True,
            parity="even", per_qp_buffers=False)
        active = stencil_neighbors(processes, rank, workload.nodes)
        all_qps += qps
        all_bufs += bufs
        all_paths += [list(active) for _ in qps]
    plan = EndpointPlan(category, threads_per_process, processes, b.device, all_qps, all_bufs,
                        recipe, thread_paths=all_paths,
                        label=f"{category.value} {processes}.{threads_per_process}")
    return _check(plan, check), workload


def build_contexts(count: int, profile: DeviceProfile = CONNECTX4,
                   env: Optional[EnvConfig] = None) -> EndpointPlan:
    """A plan of ``count`` bare contexts, for limit exploration."""
    env = env or EnvConfig()
    b = _Builder(profile, env)
    for _ in range(count):
        b.context()
    recipe = {"builder": "contexts", "count": count, "profile": _profile_key(profile),
              "env": _env_dict(env)}
    return EndpointPlan(None, 0, 1, b.device, [], [], recipe, label=f"{count} contexts")


def build_qp_pool(qps: int, cqs: int = 1, profile: DeviceProfile = CONNECTX4,
                  env: Optional[EnvConfig] = None) -> EndpointPlan:
    """One context with ``qps`` static QPs spread over ``cqs`` CQs."""
    env = env or EnvConfig()
    b = _Builder(profile, env)
    ctx = b.context()
    pd = alloc_pd(ctx)
    cq_list = [create_cq(ctx, 1) for _ in range(cqs)]
    for i in range(qps):
        create_qp(pd, cq_list[i % cqs], 1)
    recipe = {"builder": "qp_pool", "qps": qps, "cqs": cqs, "profile": _profile_key(profile),
              "env": _env_dict(env)}
    return EndpointPlan(None, 0, 1, b.device, [], [], recipe, label=f"{qps} QPs")


# ---------------------------------------------------------------- sweeps

# resources whose counts legitimately move with each sweep
SWEEP_COUPLED = {
    "buf": {"buffers"},
    "ctx": {"ctx", "pd", "uars"},
    "pd": {"pd"},
    "mr": {"mr"},
    "cq": {"cq"},
    "qp": {"qp", "cq"},
}


@dataclass(frozen=True)
class SweepSpec:
    resource: str
    ways: Tuple[int, ...] = SWEEP_WAYS
    threads: int = 16
    postlist: int = 32
    unsignaled: int = 64
    inline: bool = True
    blueflame: bool = True
    aligned: bool = True
    messages: int = 1024
    message_size: int = 2
    depth: int = 128

    def __post_init__(self):
        if self.resource not in SWEEP_RESOURCES:
            raise ValueError(f"unknown sweep resource {self.resource!r}")
        for x in self.ways:
            if x < 1 or self.threads % x:
                raise ValueError(f"sharing degree {x} must divide {self.threads} threads")

    def workload(self) -> WorkloadSpec:
        return WorkloadSpec.message_rate(
            messages=self.messages, message_size=self.message_size, depth=self.depth,
            postlist=self.postlist, unsignaled=self.unsignaled, inline=self.inline,
            blueflame=self.blueflame)


@dataclass
class SweepPoint:
    ways: int
    plan: EndpointPlan
    workload: WorkloadSpec


def build_sweep_point(spec: SweepSpec, ways: int, profile: DeviceProfile = CONNECTX4,
                      env: Optional[EnvConfig] = None) -> EndpointPlan:
    """The x-way sharing configuration of one resource across ``spec.threads`` threads."""
    if ways < 1 or spec.threads % ways:
        raise ValueError(f"sharing degree {ways} must divide {spec.threads} threads")
    env = env or EnvConfig()
    T = spec.threads
    wl = spec.workload()
    d, c = wl.depth, wl.completions_per_poll
    size = spec.message_size
    b = _Builder(profile, env)
    thread_qps, thread_bufs = [], []
    res = spec.resource

    if res == "buf":
        shared = b.buffers(T // ways, size, aligned=spec.aligned)
        for i in range(T):
            ctx = b.context()
            pd = alloc_pd(ctx)
            td = alloc_td(ctx, 1)
            buf = shared[i // ways]
            reg_mr(pd, buf)
            cq = create_cq(ctx, c, single_threaded=True)
            thread_qps.append([create_qp(pd, cq, d, td)])
            thread_bufs.append([[buf]])
    elif res == "ctx":
        for _ in range(T // ways):
            ctx = b.context()
            pd = alloc_pd(ctx)
            for _ in range(ways):
                td = alloc_td(ctx, 1)
                (buf,) = b.buffers(1, size)
                reg_mr(pd, buf)
                cq = create_cq(ctx, c, single_threaded=True)
                thread_qps.append([create_qp(pd, cq, d, td)])
                thread_bufs.append([[buf]])
    else:
        ctx = b.context()
        tds = [alloc_td(ctx, 1) for _ in range(T)] if res != "qp" else []
        bufs = b.buffers(T, size)
        if res == "pd":
            pds = [alloc_pd(ctx) for _ in range(T // ways)]
            for i in range(T):
                pd = pds[i // ways]
                reg_mr(pd, bufs[i])
                cq = create_cq(ctx, c, single_threaded=True)
                thread_qps.append([create_qp(pd, cq, d, tds[i])])
                thread_bufs.append([[bufs[i]]])
        elif res == "mr":
            pd = alloc_pd(ctx)
            for g in range(T // ways):
                reg_mr(pd, bufs[g * ways:(g + 1) * ways])
            for i in range(T):
                cq = create_cq(ctx, c, single_threaded=True)
                thread_qps.append([create_qp(pd, cq, d, tds[i])])
                thread_bufs.append([[bufs[i]]])
        elif res == "cq":
            pd = alloc_pd(ctx)
            for buf in bufs:
                reg_mr(pd, buf)
            cqs = [create_cq(ctx, c * ways, single_threaded=False) for _ in range(T // ways)]
            for i in range(T):
                thread_qps.append([create_qp(pd, cqs[i // ways], d, tds[i])])
                thread_bufs.append([[bufs[i]]])
        elif res == "qp":
            pd = alloc_pd(ctx)
            for buf in bufs:
                reg_mr(pd, buf)
            qps = []
            for _ in range(T // ways):
                cq = create_cq(ctx, c * ways, single_threaded=False)
                qps.append(create_qp(pd, cq, d * ways))
            for i in range(T):
                thread_qps.append([qps[i // ways]])
                thread_bufs.append([[bufs[i]]])

    recipe = {"builder": "sweep", "spec": _sweep_dict(spec), "ways": ways,
              "profile": _profile_key(profile), "env": _env_dict(env)}
    plan = EndpointPlan(None, T, 1, b.device, thread_qps, thread_bufs, recipe,
                        label=f"{res} {ways}-way")
    return _check(plan, True)


def build_sweep(spec: SweepSpec, profile: DeviceProfile = CONNECTX4,
                env: Optional[EnvConfig] = None) -> List[SweepPoint]:
    """One plan per sharing degree; only the target resource varies."""
    wl = spec.workload()
    return [SweepPoint(x, build_sweep_point(spec, x, profile, env), wl) for x in spec.ways]


def _sweep_dict(spec: SweepSpec) -> dict:
    d = asdict(spec)
    d["ways"] = list(spec.ways)
    return d


def rebuild_plan(recipe: dict) -> EndpointPlan:
    """Rebuild a plan from its recipe (as stored in ``plan.recipe`` or JSON)."""
    kind = recipe["builder"]
    profile = _profile_from_recipe(recipe)
    env = _env_from_recipe(recipe)
    if kind == "endpoints":
        return build_endpoints(recipe["category"], recipe["threads"], recipe["processes"],
                               profile, env, WorkloadSpec.from_dict(recipe["workload"]),
                               recipe.get("parity", "even"))
    if kind == "stencil":
        wl = dict(recipe["workload"])
        wl.pop("kind", None)
        plan, _ = build_stencil(recipe["processes"], recipe["threads"],
                                category=recipe["category"], profile=profile, env=env, **wl)
        return plan
    if kind == "sweep":
        spec = dict(recipe["spec"])
        spec["ways"] = tuple(spec["ways"])
        return build_sweep_point(SweepSpec(**spec), recipe["ways"], profile, env)
    if kind == "contexts":
        return build_contexts(recipe["count"], profile, env)
    if kind == "qp_pool":
        return build_qp_pool(recipe["qps"], recipe["cqs"], profile, env)
    raise ValueError(f"unknown plan builder {kind!r}")


def plan_from_json(text: str) -> EndpointPlan:
    data = json.loads(text)
    return rebuild_plan(data["recipe"] if "recipe" in data else data)
