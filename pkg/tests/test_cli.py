"""CLI behaviour and byte-exact golden outputs.

Set VERBSIM_REGEN_GOLDEN=1 to rewrite the golden files after an
intentional output change.
"""
import csv
import io
import json
import os
from pathlib import Path

import pytest

from verbsim.cli import EXIT_INFEASIBLE, EXIT_RESIDUAL, EXIT_USAGE, main

GOLDEN = Path(__file__).parent / "golden"

CASES = {
    "plan_all.csv": ["plan", "--threads", "16"],
    "plan_2xdynamic.json": ["plan", "--category", "2xdynamic", "--threads", "16",
                            "--format", "json"],
    "limits.csv": ["limits", "--uars-per-ctx", "8", "256", "8168"],
    "sweep_pd.csv": ["sweep", "--resource", "pd", "--messages", "256"],
    "sweep_qp_no_postlist.csv": ["sweep", "--resource", "qp", "--no-postlist",
                                 "--messages", "128"],
    "sweep_cq_unsignaled1.csv": ["sweep", "--resource", "cq", "--unsignaled", "1",
                                 "--messages", "256"],
    "simulate_stencil.csv": ["simulate", "--workload", "stencil", "--processes", "4",
                             "--seed", "7"],
}


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    for var in ("MLX5_TOTAL_UUARS", "MLX5_NUM_LOW_LAT_UUARS", "MLX5_SHUT_UP_BF"):
        monkeypatch.delenv(var, raising=False)


def run(capsys, argv):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def rows(text):
    lines = [l for l in text.splitlines() if not l.startswith("#")]
    return list(csv.DictReader(io.StringIO("\n".join(lines))))


@pytest.mark.parametrize("name", sorted(CASES))
def test_golden(capsys, name):
    code, out, _ = run(capsys, CASES[name])
    assert code == 0
    path = GOLDEN / name
    if os.environ.get("VERBSIM_REGEN_GOLDEN"):
        path.write_text(out)
    assert out == path.read_text()


def test_plan_values(capsys):
    _, out, _ = run(capsys, ["plan", "--category", "2xdynamic", "--threads", "16"])
    assert rows(out)[0]["uuars_alloc"] == "80"
    _, out, _ = run(capsys, ["plan", "--category", "mpi-everywhere", "--threads", "16"])
    assert rows(out)[0]["memory_bytes"] == "5657088"


def test_config_echo_is_replayable(capsys):
    _, out, _ = run(capsys, ["plan", "--category", "static", "--threads", "4",
                             "--low-lat-uuars", "2"])
    first = out.splitlines()[0]
    assert first.startswith("# config: ")
    config = dict(item.split("=", 1) for item in first[len("# config: "):].split())
    assert config["low_lat_uuars"] == "2" and config["total_uuars"] == "16"
    assert config["threads"] == "4" and config["seed"] == "0"


def test_env_override_changes_plan(capsys, monkeypatch):
    monkeypatch.setenv("MLX5_TOTAL_UUARS", "8")
    _, out, _ = run(capsys, ["plan", "--category", "static", "--threads", "1"])
    assert rows(out)[0]["uars"] == "4"


def test_usage_errors(capsys):
    with pytest.raises(SystemExit) as info:
        main(["plan", "--threads", "0"])
    assert info.value.code == EXIT_USAGE
    with pytest.raises(SystemExit) as info:
        main(["sweep", "--resource", "tlb"])
    assert info.value.code == EXIT_USAGE
    code, _, err = run(capsys, ["plan", "--category", "hybrid"])
    assert code == EXIT_USAGE and "hybrid" in err
    code, _, _ = run(capsys, ["plan", "--total-uuars", "7"])
    assert code == EXIT_USAGE
    code, _, _ = run(capsys, ["limits", "--profile", "connectx9"])
    assert code == EXIT_USAGE


def test_infeasible_exit(capsys):
    code, _, err = run(capsys, ["plan", "--category", "mpi-everywhere", "--threads", "1022"])
    assert code == EXIT_INFEASIBLE and "DeviceUarExhausted" in err


def test_calibrate_trivial_target(capsys, tmp_path):
    targets = tmp_path / "t.json"
    targets.write_text(json.dumps({"MpiEverywhere": 1.0}))
    out_file = tmp_path / "cal.json"
    code, _, _ = run(capsys, ["calibrate", "--targets", str(targets), "--format", "json",
                              "--out", str(out_file)])
    assert code == 0
    data = json.loads(out_file.read_text())
    assert data["residuals"] == {"mpi-everywhere": 0.0}


def test_calibrate_residual_exit(capsys, tmp_path):
    targets = tmp_path / "t.json"
    targets.write_text(json.dumps({"MpiEverywhere": 1.0, "MpiThreads": 0.9}))
    code, _, err = run(capsys, ["calibrate", "--targets", str(targets), "--budget", "1"])
    assert code == EXIT_RESIDUAL and "residual" in err


def test_custom_profile_limits(capsys, tmp_path):
    prof = tmp_path / "p.json"
    prof.write_text(json.dumps({"total_uars": 64}))
    _, out, _ = run(capsys, ["limits", "--profile", "custom", "--profile-file", str(prof),
                             "--uars-per-ctx", "8"])
    assert rows(out)[0]["max_ctx"] == "8"


def test_params_file_is_used(capsys, tmp_path):
    params = tmp_path / "p.json"
    params.write_text(json.dumps({"t_wqe_prep": 400}))
    argv = ["simulate", "--messages", "64", "--threads", "2"]
    _, slow, _ = run(capsys, argv + ["--params", str(params)])
    _, fast, _ = run(capsys, argv)
    assert float(rows(slow)[0]["rate"]) < float(rows(fast)[0]["rate"])


def test_simulate_torture_flag(capsys, monkeypatch):
    import verbsim.torture as torture

    real = torture.torture_suite
    monkeypatch.setattr(torture, "torture_suite",
                        lambda runs, first_seed: real(runs=runs, messages=2000,
                                                      first_seed=first_seed))
    code, out, err = run(capsys, ["simulate", "--messages", "64", "--threads", "2",
                                  "--torture", "2"])
    assert code == 0 and "2/2 runs ok" in err
    assert "torture" not in out.split("\n", 1)[1]
