import pytest

from verbsim.torture import TORTURE_PLANS, run_torture, torture_suite


@pytest.mark.parametrize("kind", TORTURE_PLANS)
def test_small_torture_round(kind):
    res = run_torture(kind, seed=5, messages=4000, threads=8, timeout=20)
    assert res.ok, res
    assert res.credited == 4000
    assert res.min_remaining_depth >= 0


def test_suite_alternates_plans():
    out = torture_suite(runs=4, messages=800, threads=4)
    assert [r.plan for r in out] == list(TORTURE_PLANS) * 2
    assert all(r.ok for r in out)


def test_unknown_plan():
    with pytest.raises(ValueError):
        run_torture("nope")
