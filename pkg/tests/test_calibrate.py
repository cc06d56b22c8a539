import pytest

from verbsim.calibrate import DEFAULT_TARGETS, RESIDUAL_THRESHOLD, calibrate, category_ratios
from verbsim.endpoints import EndpointCategory as C
from verbsim.sim import SimParams, default_params, default_params_file


def test_trivial_target_is_exact():
    res = calibrate({"mpi-everywhere": 1.0}, budget=10)
    assert res.max_residual == 0.0
    assert res.evaluations == 1


def test_small_budget_never_worse_than_start():
    base = SimParams()
    targets = {C.MPI_EVERYWHERE: 1.0, C.MPI_THREADS: 0.03}
    start = category_ratios(base, [C.MPI_THREADS])
    res = calibrate(targets, budget=3, seed=1, base=base)
    assert res.evaluations <= 3
    assert res.max_residual <= abs(start[C.MPI_THREADS] - 0.03) + 1e-9
    assert set(res.residuals) == {"mpi-everywhere", "mpi-threads"}


def test_shipped_defaults_fit_targets():
    data = default_params_file()
    assert max(data["residuals"].values()) <= RESIDUAL_THRESHOLD
    ratios = category_ratios(default_params(), [c for c in DEFAULT_TARGETS
                                                if c is not C.MPI_EVERYWHERE])
    for cat, target in DEFAULT_TARGETS.items():
        assert ratios[cat] == pytest.approx(target, abs=RESIDUAL_THRESHOLD)
        assert round(ratios[cat], 3) == pytest.approx(data["calibration"]["ratios"][cat.value], abs=1e-3)
