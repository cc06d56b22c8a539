"""Resource counts, memory footprint, register wastage and limit checks.

Everything here is a pure function of a plan's object graph.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass
from enum import Enum
from typing import Iterable, List, Optional

from .device import DeviceProfile

CSV_COLUMNS = ("category", "threads", "processes", "ctx", "qp", "cq", "uars",
               "uuars_alloc", "uuars_used", "wastage_pct", "memory_bytes")

KIB = 1024
MIB = 1024 * 1024


@dataclass(frozen=True)
class MemoryModel:
    """Bytes of host memory per Verbs object (table units read as KiB)."""

    ctx: int = 256 * KIB
    pd: int = 144
    mr: int = 144
    qp: int = 80 * KIB
    cq: int = 9 * KIB

    @property
    def endpoint_bytes(self) -> int:
        return self.ctx + self.pd + self.mr + self.qp + self.cq


DEFAULT_MEMORY = MemoryModel()


class WastageBasis(Enum):
    STATIC_ONLY = "static_only"
    WITH_DYNAMIC = "with_dynamic"


@dataclass(frozen=True)
class ResourceReport:
    category: str
    threads: int
    processes: int
    ctx_count: int
    pd_count: int
    mr_count: int
    qp_count: int
    cq_count: int
    td_count: int
    uars_allocated: int
    uuars_allocated: int
    uuars_used: int
    static_uuars_allocated: int
    wastage_pct: float
    memory_bytes: int

    def row(self) -> dict:
        return {
            "category": self.category,
            "threads": self.threads,
            "processes": self.processes,
            "ctx": self.ctx_count,
            "qp": self.qp_count,
            "cq": self.cq_count,
            "uars": self.uars_allocated,
            "uuars_alloc": self.uuars_allocated,
            "uuars_used": self.uuars_used,
            "wastage_pct": round(self.wastage_pct, 4),
            "memory_bytes": self.memory_bytes,
        }

    def to_dict(self) -> dict:
        return asdict(self)


def memory_usage(plan, model: MemoryModel = DEFAULT_MEMORY) -> int:
    """Host bytes of all CTX, PD, MR, QP and CQ objects (payload buffers excluded)."""
    total = 0
    for ctx in plan.contexts:
        total += model.ctx
        total += model.cq * len(ctx.cqs)
        for pd in ctx.pds:
            total += model.pd + model.mr * len(pd.mrs) + model.qp * len(pd.qps)
    return total


def wastage(report: ResourceReport, basis=WastageBasis.WITH_DYNAMIC) -> float:
    """Percentage of datapath uUAR slots that carry no QP.

    ``static_only`` looks at the statically mapped slots only, counting each
    used slot (wherever it lives) against them; ``with_dynamic`` divides by
    every allocated slot.
    """
    basis = WastageBasis(basis) if not isinstance(basis, WastageBasis) else basis
    if basis is WastageBasis.STATIC_ONLY:
        alloc = report.static_uuars_allocated
        used = min(report.uuars_used, alloc)
    else:
        alloc = report.uuars_allocated
        used = report.uuars_used
    if alloc == 0:
        return 0.0
    return 100.0 * (1 - used / alloc)


def resource_report(plan, model: MemoryModel = DEFAULT_MEMORY) -> ResourceReport:
    ctxs = plan.contexts
    uars = sum(len(c.static_uars) + len(c.dynamic_uars) for c in ctxs)
    static = sum(2 * len(c.static_uars) for c in ctxs)
    used = sum(1 for c in ctxs for page in c.uars for u in page.uuars if u.assigned_qps)
    pds = [pd for c in ctxs for pd in c.pds]
    category = plan.category.value if plan.category is not None else (plan.label or "custom")
    alloc = 2 * uars
    return ResourceReport(
        category=category,
        threads=plan.threads,
        processes=plan.processes,
        ctx_count=len(ctxs),
        pd_count=len(pds),
        mr_count=sum(len(pd.mrs) for pd in pds),
        qp_count=sum(len(pd.qps) for pd in pds),
        cq_count=sum(len(c.cqs) for c in ctxs),
        td_count=sum(len(c.tds) for c in ctxs),
        uars_allocated=uars,
        uuars_allocated=alloc,
        uuars_used=used,
        static_uuars_allocated=static,
        wastage_pct=100.0 * (1 - used / alloc) if alloc else 0.0,
        memory_bytes=memory_usage(plan, model),
    )


@dataclass(frozen=True)
class Violation:
    """One exceeded hardware limit; ``kind`` names the matching error class."""

    kind: str
    limit: int
    requested: int
    where: str = "device"

    def __str__(self):
        return f"{self.kind}: {self.requested} requested at {self.where}, limit {self.limit}"


def feasibility(plan, profile: Optional[DeviceProfile] = None) -> List[Violation]:
    """Every hardware limit the plan exceeds; an empty list means feasible."""
    profile = profile or plan.profile
    out: List[Violation] = []
    ctxs = plan.contexts
    uars = sum(len(c.static_uars) + len(c.dynamic_uars) for c in ctxs)
    if uars > profile.total_uars:
        out.append(Violation("DeviceUarExhausted", profile.total_uars, uars))
    qps = sum(len(pd.qps) for c in ctxs for pd in c.pds)
    if qps > profile.max_qps:
        out.append(Violation("QpLimitExceeded", profile.max_qps, qps))
    cqs = sum(len(c.cqs) for c in ctxs)
    if cqs > profile.max_cqs:
        out.append(Violation("CqLimitExceeded", profile.max_cqs, cqs))
    for i, c in enumerate(ctxs):
        if len(c.dynamic_uars) > profile.max_dynamic_uars_per_ctx:
            out.append(Violation("DynamicUarLimit", profile.max_dynamic_uars_per_ctx,
                                 len(c.dynamic_uars), f"ctx {i}"))
        if c.independent_paths > profile.max_independent_paths_per_ctx:
            out.append(Violation("IndependentPathLimit", profile.max_independent_paths_per_ctx,
                                 c.independent_paths, f"ctx {i}"))
    return out


def reports_to_csv(reports: Iterable[ResourceReport]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for r in reports:
        writer.writerow(r.row())
    return buf.getvalue()


def reports_to_json(reports: Iterable[ResourceReport]) -> str:
    return json.dumps([r.row() for r in reports], indent=2)
