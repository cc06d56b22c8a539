import json

import jsonschema
import pytest
from hypothesis import given, settings, strategies as st

from oracles import benchmark_trace, pcie_counts
from verbsim.endpoints import (
    CATEGORIES, EndpointCategory as C, SweepSpec, WorkloadSpec, build_endpoints,
    build_sweep_point,
)
from verbsim.errors import InfeasiblePlan
from verbsim.sim import SimParams, default_params, default_params_file, run_sim

P = default_params()


def rate(plan, wl, seed=0, params=P):
    return run_sim(plan, wl, params, seed).messages_per_tick


def test_deterministic_bit_identical():
    plan = build_sweep_point(SweepSpec("cq", unsignaled=1, messages=256), 4)
    wl = SweepSpec("cq", unsignaled=1, messages=256).workload()
    a, b = run_sim(plan, wl, P, 3), run_sim(plan, wl, P, 3)
    assert a.to_dict() == b.to_dict()


def test_plan_not_mutated():
    plan = build_endpoints(C.DYNAMIC, 4)
    run_sim(plan, WorkloadSpec(messages=256), P)
    assert all(qp.next_ordinal == 0 for qp in plan.qps)


def test_perfect_scaling_without_sharing():
    wl = WorkloadSpec(messages=256, postlist=1, unsignaled=1)
    one = rate(build_endpoints(C.MPI_EVERYWHERE, 1), wl)
    many = run_sim(build_endpoints(C.MPI_EVERYWHERE, 16), wl, P)
    assert many.messages_per_tick == pytest.approx(16 * one, rel=1e-12)
    assert not any(many.lock_wait_ticks.values())


def test_counters_from_simulation_match_oracle():
    wl = WorkloadSpec(messages=1024, postlist=32, unsignaled=64, inline=True)
    res = run_sim(build_endpoints(C.DYNAMIC, 16), wl, P)
    expected = tuple(16 * v for v in pcie_counts(benchmark_trace(1024, 32, 64, True, True)))
    assert res.counters.as_tuple() == expected == (512, 0, 16384, 0, 256)
    assert res.total_messages == sum(res.per_thread_messages) == 16 * 1024
    assert res.messages_per_tick > 0


def test_buffer_sharing_serializes_on_one_engine():
    spec = SweepSpec("buf", inline=False, messages=256)
    alone = run_sim(build_sweep_point(spec, 1), spec.workload(), P)
    shared = run_sim(build_sweep_point(spec, 16), spec.workload(), P)
    assert shared.messages_per_tick < alone.messages_per_tick
    assert shared.counters.dma_reads_payload == alone.counters.dma_reads_payload
    assert sum(1 for t in shared.tlb_busy_ticks if t) == 1
    assert sum(1 for t in alone.tlb_busy_ticks if t) == 16


def test_shared_qp_lock_contention_recorded():
    spec = SweepSpec("qp", messages=256)
    res = run_sim(build_sweep_point(spec, 16), spec.workload(), P)
    assert sum(res.lock_wait_ticks.values()) > 0


# (builder, every UAR page carries a single active uUAR)
FEATURE_PLANS = [
    (lambda: build_endpoints(C.MPI_EVERYWHERE, 16), True),
    (lambda: build_endpoints(C.DYNAMIC, 16), True),
    (lambda: build_endpoints(C.TWO_X_DYNAMIC, 16), True),
    (lambda: build_sweep_point(SweepSpec("cq"), 4), False),
    (lambda: build_sweep_point(SweepSpec("qp"), 4), False),
]


@pytest.mark.parametrize("make,unshared_uars", FEATURE_PLANS)
def test_feature_effects(make, unshared_uars):
    plan = make()
    base = dict(messages=256, inline=True)
    r_p1 = rate(plan, WorkloadSpec(postlist=1, unsignaled=1, **base))
    for p in (2, 32):
        assert rate(plan, WorkloadSpec(postlist=p, unsignaled=1, **base)) >= r_p1
    assert rate(plan, WorkloadSpec(postlist=1, unsignaled=16, **base)) >= r_p1
    if unshared_uars:
        # a penalised BlueFlame write on a shared page can lose to a doorbell
        no_bf = rate(plan, WorkloadSpec(postlist=1, unsignaled=1, blueflame=False, **base))
        assert no_bf <= r_p1


def test_uar_page_sharing_penalty_and_16way_drop():
    wl = WorkloadSpec(messages=256, postlist=1, unsignaled=1)
    dyn = rate(build_endpoints(C.DYNAMIC, 16), wl)
    two = rate(build_endpoints(C.TWO_X_DYNAMIC, 16), wl)
    shared = rate(build_endpoints(C.SHARED_DYNAMIC, 16), wl)
    assert two > dyn > shared
    eight = rate(build_sweep_point(SweepSpec("ctx", postlist=1, unsignaled=1, messages=256), 8),
                 WorkloadSpec(messages=256, postlist=1, unsignaled=1))
    sixteen = rate(build_sweep_point(SweepSpec("ctx", postlist=1, unsignaled=1, messages=256), 16),
                   WorkloadSpec(messages=256, postlist=1, unsignaled=1))
    assert sixteen < eight


def test_infeasible_plan_rejected():
    plan = build_endpoints(C.MPI_EVERYWHERE, 1100, check=False)
    with pytest.raises(InfeasiblePlan):
        run_sim(plan, WorkloadSpec(messages=8), P)


def test_inline_size_checked():
    with pytest.raises(ValueError):
        run_sim(build_endpoints(C.STATIC, 1), WorkloadSpec(messages=8, message_size=64), P)


def test_params_json_round_trip_and_validation():
    p = SimParams(t_wqe_prep=12.5)
    assert SimParams.from_json(p.to_json(residuals={"static": 0.01})) == p
    with pytest.raises(ValueError):
        SimParams(t_dma_read=-1)
    with pytest.raises(ValueError):
        SimParams(uar_share_bf_penalty=0.5)
    with pytest.raises(jsonschema.ValidationError):
        SimParams.from_dict({"t_bogus": 1})


def test_shipped_params_carry_residuals():
    data = default_params_file()
    assert set(data["residuals"]) == {c.value for c in CATEGORIES}
    assert max(data["residuals"].values()) <= 0.10
    assert data["params"]["independent_16way_bf_penalty"] == 1.15


@settings(max_examples=12, deadline=None)
@given(cat=st.sampled_from(CATEGORIES), threads=st.sampled_from([1, 2, 3, 8]),
       p=st.sampled_from([1, 4, 16]), q=st.sampled_from([1, 4, 16]),
       inline=st.booleans(), seed=st.integers(0, 2**16))
def test_sim_conservation_property(cat, threads, p, q, inline, seed):
    wl = WorkloadSpec(messages=64, depth=64, postlist=p, unsignaled=q, inline=inline)
    plan = build_endpoints(cat, threads, workload=wl)
    res = run_sim(plan, wl, P, seed)
    assert res.per_thread_messages == [64] * threads
    assert res.messages_per_tick > 0
    per_thread = pcie_counts(benchmark_trace(64, p, q, inline, True))
    if p == 1 and cat is not C.MPI_THREADS:
        # each thread's own stream is the benchmark trace
        assert res.counters.as_tuple() == tuple(threads * v for v in per_thread)
    assert res.counters.dma_reads_payload == (0 if inline else 64 * threads)
    assert res.counters.dma_writes_cqe == threads * per_thread[4]
    assert run_sim(plan, wl, P, seed).to_dict() == res.to_dict()
