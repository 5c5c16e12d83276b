import csv
import json

from app.main import EXIT_CONFIG, EXIT_INVARIANT, EXIT_OK, build_parser, config_from_args, main
from app.models import AttackStrategy, Leg


def test_run_writes_a_report(tmp_path):
    out = tmp_path / "report.json"
    argv = ["run", "--variant", "2p", "--m", "4", "--trials", "3", "--seed", "7"]
    assert main([*argv, "--out", str(out)]) == EXIT_OK
    report = json.loads(out.read_text())
    assert report["aggregates"]["decode_success_rate"] == 1.0
    assert len(report["trials"]) == 3


def test_run_prints_to_stdout_without_out(capsys):
    assert main(["run", "--m", "2", "--seed", "1", "--no-transcript"]) == EXIT_OK
    report = json.loads(capsys.readouterr().out)
    assert report["trials"][0]["transcript"] == []


def test_flags_override_the_config_file(tmp_path):
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"m": 8, "trials": 2, "attack": {"strategy": "pns"}}))
    args = build_parser().parse_args(
        ["run", "--config", str(config), "--m", "4", "--leg", "distribution", "--no-security"]
    )
    parsed = config_from_args(args)
    assert parsed.m == 4 and parsed.trials == 2
    assert parsed.attack.strategy == AttackStrategy.PNS
    assert parsed.attack.leg == Leg.DISTRIBUTION
    assert parsed.security is False
    assert parsed.decoy_count == 0


def test_invalid_config_exits_with_two(capsys):
    assert main(["run", "--m", "4", "--secret", "101"]) == EXIT_CONFIG
    assert "secret" in capsys.readouterr().err
    assert main(["run", "--attack", "entangle-measure", "--leg", "distribution"]) == EXIT_CONFIG


def test_unknown_config_keys_are_rejected(tmp_path, capsys):
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"m": 4, "shots": 10}))
    assert main(["run", "--config", str(config)]) == EXIT_CONFIG
    assert "shots" in capsys.readouterr().err


def test_broken_json_reports_its_position(tmp_path, capsys):
    config = tmp_path / "config.json"
    config.write_text('{"m": 4,\n "trials": }')
    assert main(["run", "--config", str(config)]) == EXIT_CONFIG
    assert "line 2" in capsys.readouterr().err


def test_dense_cap_is_a_config_error():
    assert main(["run", "--backend", "dense", "--m", "40"]) == EXIT_CONFIG


def test_sweep_writes_csv(tmp_path):
    grid = tmp_path / "grid.json"
    cells = {"base": {"trials": 2, "seed": 3}, "axes": {"m": [2, 3], "variant": ["2p", "3p"]}}
    grid.write_text(json.dumps(cells))
    out = tmp_path / "sweep.csv"
    assert main(["sweep", str(grid), "--out", str(out)]) == EXIT_OK
    with out.open(newline="") as handle:
        rows = list(csv.DictReader(handle))
    assert len(rows) == 4
    assert {row["status"] for row in rows} == {"ok"}


def test_invariant_violations_exit_with_three(monkeypatch, tmp_path):
    from app import runner
    from app.exceptions import InvariantViolation

    def broken_trial(config, index, seed):
        raise InvariantViolation("norm drifted")

    monkeypatch.setattr(runner, "run_trial", broken_trial)
    out = tmp_path / "report.json"
    argv = ["run", "--m", "2", "--trials", "2", "--seed", "1", "--out", str(out)]
    assert main(argv) == EXIT_INVARIANT
    report = json.loads(out.read_text())
    assert len(report["invariant_violations"]) == 2
    assert report["trials"][0]["error"].startswith("invariant:")


def test_other_trial_failures_are_not_invariant_violations(monkeypatch, tmp_path):
    from app import runner
    from app.exceptions import ResourceError

    def starved_trial(config, index, seed):
        raise ResourceError("out of qubits")

    monkeypatch.setattr(runner, "run_trial", starved_trial)
    out = tmp_path / "report.json"
    argv = ["run", "--m", "2", "--trials", "2", "--seed", "1", "--out", str(out)]
    assert main(argv) == EXIT_OK
    report = json.loads(out.read_text())
    assert report["invariant_violations"] == []
    assert report["trials"][0]["error"] == "out of qubits"
