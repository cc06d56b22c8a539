import json

import pytest

from verbsim.accounting import resource_report
from verbsim.endpoints import (
    CATEGORIES, SWEEP_COUPLED, SWEEP_RESOURCES, EndpointCategory as C, SweepSpec,
    WorkloadKind, WorkloadSpec, build_endpoints, build_global_array, build_stencil, build_sweep,
    build_sweep_point, plan_from_json, rebuild_plan,
)
from verbsim.errors import InfeasiblePlan
from verbsim.verbs import LatencyClass


def test_category_parse_aliases():
    assert C.parse("2xDynamic") is C.TWO_X_DYNAMIC
    assert C.parse("SharedDynamic") is C.SHARED_DYNAMIC
    assert C.parse("mpi_everywhere") is C.MPI_EVERYWHERE
    with pytest.raises(ValueError):
        C.parse("hybrid")


def test_dynamic_and_shared_dynamic_layout():
    r = resource_report(build_endpoints(C.DYNAMIC, 16))
    assert (r.ctx_count, r.td_count, r.uars_allocated) == (1, 16, 24)
    r = resource_report(build_endpoints(C.SHARED_DYNAMIC, 16))
    assert (r.uars_allocated, r.uuars_allocated) == (16, 32)
    r = resource_report(build_endpoints(C.MPI_EVERYWHERE, 1))
    assert (r.ctx_count, r.uars_allocated, r.uuars_allocated) == (1, 9, 18)


def test_static_has_no_tds_and_locked_qps():
    plan = build_endpoints(C.STATIC, 16)
    assert not plan.tds and all(qp.lock_enabled for qp in plan.qps)


def test_two_x_dynamic_uses_one_parity():
    for parity, offset in (("even", 0), ("odd", 1)):
        plan = build_endpoints(C.TWO_X_DYNAMIC, 16, parity=parity)
        ordered = plan.qps
        used = {qp.id for qps in plan.thread_qps for qp in qps}
        assert len(ordered) == 32 and len(used) == 16
        assert {i for i, qp in enumerate(ordered) if qp.id in used} == set(range(offset, 32, 2))


def test_mpi_threads_shares_one_qp():
    plan = build_endpoints(C.MPI_THREADS, 16)
    (qp,) = plan.qps
    assert all(qps == [qp] for qps in plan.thread_qps)
    assert qp.lock_enabled and qp.cq.lock_enabled and qp.depth == 16 * 128


def test_per_thread_buffers_are_cache_aligned():
    plan = build_endpoints(C.DYNAMIC, 16)
    lines = [b.base // 64 for b in plan.buffers]
    assert all(b.base % 64 == 0 for b in plan.buffers) and len(set(lines)) == 16


def test_global_array_three_buffers_per_qp():
    plan, wl = build_global_array(C.STATIC, 16)
    assert wl.kind is WorkloadKind.GLOBAL_ARRAY and (wl.postlist, wl.unsignaled) == (1, 1)
    assert len(plan.mrs) == 48
    plan, _ = build_global_array(C.MPI_THREADS, 16)
    assert len(plan.mrs) == 3


def test_workload_invariants():
    wl = WorkloadSpec(depth=128, unsignaled=64)
    assert wl.completions_per_poll == 2
    with pytest.raises(ValueError):
        WorkloadSpec(depth=128, unsignaled=48)
    with pytest.raises(ValueError):
        WorkloadSpec(depth=128, postlist=3)
    assert WorkloadSpec.from_dict(wl.to_dict()) == wl


def test_stencil_shapes():
    plan, _ = build_stencil(16, 1)
    assert len(plan.contexts) == 16
    plan, _ = build_stencil(1, 16)
    r = resource_report(plan)
    assert (r.qp_count, r.cq_count) == (32, 16)
    for cat in CATEGORIES:
        plan, _ = build_stencil(4, 4, category=cat)
        if cat is not C.TWO_X_DYNAMIC:
            assert len(plan.qps) == 2 * len({qp.cq.id for qp in plan.qps})
    with pytest.raises(ValueError):
        build_stencil(3, 4)


def test_stencil_static_fifth_qp_alone_on_its_page():
    plan, _ = build_stencil(4, 4, category=C.STATIC)
    first_level = 0
    for ctx in plan.contexts:
        qps = ctx.qps
        assert len(qps) == 8
        fifth = qps[4]
        assert fifth.uuar.latency_class is LatencyClass.MEDIUM
        page_qps = [q for u in fifth.uuar.page.uuars for q in u.assigned_qps]
        assert page_qps == [fifth]
        first_level += sum(1 for q in qps if [p for u in q.uuar.page.uuars
                                              for p in u.assigned_qps] == [q])
    assert first_level == 8


def test_stencil_boundary_rank_has_one_neighbor():
    plan, _ = build_stencil(4, 4)
    assert plan.thread_paths[0] == [1]
    assert all(p == [0, 1] for p in plan.thread_paths[4:])


@pytest.mark.parametrize("resource", SWEEP_RESOURCES)
def test_sweep_isolation(resource):
    points = build_sweep(SweepSpec(resource))
    assert [p.ways for p in points] == [1, 2, 4, 8, 16]
    keys = {"ctx": "ctx_count", "pd": "pd_count", "mr": "mr_count", "qp": "qp_count",
            "cq": "cq_count", "uars": "uars_allocated"}
    reports = [resource_report(p.plan) for p in points]
    for a, b in zip(reports, reports[1:]):
        for name, field in keys.items():
            if name not in SWEEP_COUPLED[resource]:
                assert getattr(a, field) == getattr(b, field), (resource, name)
    for p in points:
        assert p.plan.total_threads == 16


def test_sweep_instance_counts():
    for x, p in zip((1, 2, 4, 8, 16), build_sweep(SweepSpec("qp"))):
        assert len(p.plan.qps) == 16 // x
    last = build_sweep_point(SweepSpec("qp"), 16)
    assert last.qps[0].lock_enabled and last.qps[0].td is None
    cq16 = build_sweep_point(SweepSpec("cq"), 16)
    assert cq16.cqs[0].depth == 2 * 16 and cq16.cqs[0].lock_enabled


def test_unaligned_buffers_share_a_cache_line():
    plan = build_sweep_point(SweepSpec("buf", aligned=False), 1)
    assert len({b.base // 64 for b in plan.buffers}) == 1
    plan = build_sweep_point(SweepSpec("buf"), 1)
    assert len({b.base // 64 for b in plan.buffers}) == 16


def test_bad_sweep_degree():
    with pytest.raises(ValueError):
        SweepSpec("qp", ways=(3,))
    with pytest.raises(ValueError):
        SweepSpec("tlb")


def test_recipe_round_trip():
    plan, _ = build_stencil(4, 4, category=C.SHARED_DYNAMIC)
    again = plan_from_json(plan.to_json())
    assert again.to_dict() == plan.to_dict()
    sweep = build_sweep_point(SweepSpec("mr"), 4)
    assert rebuild_plan(json.loads(json.dumps(sweep.recipe))).to_dict() == sweep.to_dict()


def test_infeasible_plan_raises():
    with pytest.raises(InfeasiblePlan) as info:
        build_endpoints(C.MPI_EVERYWHERE, 1000)
    assert "DeviceUarExhausted" in str(info.value)
