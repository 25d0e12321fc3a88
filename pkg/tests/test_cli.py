import csv
import json
import subprocess
import sys

import pytest

from hsvi import cli
from hsvi.cli import EXIT_INPUT, EXIT_OK, EXIT_USAGE, EXIT_VERIFY, main
from hsvi.ingest import load_pomdp


@pytest.fixture(scope="module")
def solved(tmp_path_factory, tiger_path):
    out = tmp_path_factory.mktemp("solve")
    assert main(["solve", "--pomdp", str(tiger_path), "--epsilon", "0.1", "--time-budget", "30",
                 "--out", str(out)]) == EXIT_OK
    return out


def test_solve_outputs(solved):
    summary = json.loads((solved / "summary.json").read_text())
    assert summary["problem"] == "tiger" and summary["reason"] == "converged"
    assert summary["lower_b0"] <= summary["upper_b0"] <= summary["lower_b0"] + 0.1
    rows = list(csv.DictReader((solved / "trace.csv").open()))
    assert float(rows[-1]["lower_b0"]) == pytest.approx(summary["lower_b0"], abs=1e-9)
    assert (solved / "policy.txt").read_text().strip()


@pytest.mark.parametrize("kind", ["lookahead", "alpha"])
def test_simulate_is_deterministic(tmp_path, tiger_path, solved, kind):
    texts = []
    for run in ("a", "b"):
        out = tmp_path / run
        code = main(["simulate", "--pomdp", str(tiger_path), "--policy", str(solved / "policy.txt"),
                     "--kind", kind, "--episodes", "40", "--seed", "3", "--out", str(out)])
        assert code == EXIT_OK
        texts.append((out / "report.json").read_text())
        assert len((out / "episodes.csv").read_text().splitlines()) == 41
    assert texts[0] == texts[1]


def test_simulate_qmdp(tmp_path, tiger_path, capsys):
    assert main(["simulate", "--pomdp", str(tiger_path), "--qmdp", "--episodes", "20"]) == EXIT_OK
    assert "mean" in capsys.readouterr().out


def test_generate_round_trip(tmp_path):
    path = tmp_path / "rs.pomdp"
    assert main(["generate", "--rocksample", "2,1", "--out", str(path)]) == EXIT_OK
    m = load_pomdp(path)
    assert (m.num_states, m.num_actions) == (9, 6)


@pytest.mark.parametrize("argv", [
    ["simulate", "--benchmark", "tiger", "--qmdp", "--episodes", "0"],
    ["simulate", "--benchmark", "tiger", "--qmdp", "--policy", "x"],
    ["solve", "--benchmark", "tiger", "--epsilon", "-1"],
    ["verify-theory", "--random-seed", "0", "--p", "1.0"],
    ["verify-theory"],
    ["no-such-command"],
])
def test_usage_errors(argv):
    with pytest.raises(SystemExit) as info:
        main(argv)
    assert info.value.code == EXIT_USAGE


def test_input_errors(tmp_path, tiger_path, solved, capsys):
    missing = tmp_path / "missing.pomdp"
    assert main(["solve", "--pomdp", str(missing), "--out", str(tmp_path)]) == EXIT_INPUT
    bad = tmp_path / "bad.pomdp"
    bad.write_text("discount: 0.9\nstates: 2\nactions: a\nobservations: o\nT: a bogus\n")
    assert main(["solve", "--pomdp", str(bad), "--out", str(tmp_path)]) == EXIT_INPUT
    assert "line" in capsys.readouterr().err
    # a policy written for another problem is rejected
    assert main(["simulate", "--rocksample", "2,1", "--policy", str(solved / "policy.txt")]) == EXIT_INPUT
    assert main(["generate", "--rocksample", "2,5", "--out", str(tmp_path / "x.pomdp")]) == EXIT_INPUT
    assert not (tmp_path / "x.pomdp").exists()


def test_partial_outputs_removed_on_failure(tmp_path, monkeypatch):
    def boom(*args, **kwargs):
        raise RuntimeError("disk full")

    monkeypatch.setattr(cli, "write_trace_csv", boom)
    with pytest.raises(RuntimeError):
        main(["solve", "--benchmark", "tiger", "--max-trials", "2", "--out", str(tmp_path)])
    assert not (tmp_path / "policy.txt").exists()


def test_verify_theory_random_model(tmp_path):
    out = tmp_path / "theory.csv"
    code = main(["verify-theory", "--random-seed", "1", "--depth", "3", "--trials", "100", "--steps", "3",
                 "--vstar-budget", "2", "--out", str(out)])
    assert code == EXIT_OK
    rows = list(csv.DictReader(out.open()))
    assert {r["check"] for r in rows} == {"contraction", "backup-gap", "fixed-point-gap", "regret"}
    assert all(r["pass"] == "1" for r in rows)


def test_verify_theory_negative_control(tmp_path):
    code = main(["verify-theory", "--random-seed", "1", "--depth", "3", "--trials", "100", "--steps", "2",
                 "--vstar-budget", "1", "--p", "0", "--claimed-discount", "0.5"])
    assert code == EXIT_VERIFY


def test_console_entry_point():
    res = subprocess.run([sys.executable, "-m", "hsvi.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    assert "verify-theory" in res.stdout
