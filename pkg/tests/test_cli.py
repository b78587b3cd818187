import json

import pytest

from wardenvc.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    return code, capsys.readouterr().out


def test_sim_collusion_passes(capsys):
    code, out = run(capsys, "sim", "--scenario", "collusion_double_state", "--seed", "7")
    assert code == 0
    assert "[PASS] same-state closure" in out


def test_sim_requires_seed(capsys):
    with pytest.raises(SystemExit) as e:
        main(["sim", "--scenario", "honest_optimistic"])
    assert e.value.code == 2


def test_ablation_fails(capsys):
    code, out = run(capsys, "sim", "--scenario", "collusion_double_state", "--seed", "7", "--ablate", "cross-check")
    assert code == 1
    assert "[FAIL] balance security" in out


def test_machine_report(capsys):
    code, out = run(capsys, "sim", "--scenario", "bob_offline", "--seed", "1", "--format", "machine")
    body = json.loads(out)
    assert code == 0 and body["ok"]
    assert {c["tag"] for c in body["checks"]} >= {"balance-security", "liveness", "same-state-closure"}
    assert out.endswith("\n")


def test_output_dir_from_env(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv("WARDENVC_OUT", str(tmp_path))
    code, _ = run(capsys, "sim", "--scenario", "honest_optimistic", "--seed", "3")
    assert code == 0
    assert json.loads((tmp_path / "report.json").read_text())["ok"]
    assert (tmp_path / "trace.jsonl").read_text().count("\n") > 10


def test_malformed_scenario_file(capsys, tmp_path):
    p = tmp_path / "s.json"
    p.write_text('{"schema": 1, "bogus": 1}')
    code = main(["sim", "--scenario", str(p), "--seed", "1"])
    err = capsys.readouterr().err
    assert code == 2 and "bogus" in err


def test_game_closing_table(capsys):
    code, out = run(capsys, "game", "closing", "--knows=false")
    assert code == 0
    rows = out.split("normal form:")[1].splitlines()[2:5]
    assert [r.split()[0] for r in rows] == ["Uni", "Old", "New"]


def test_game_subgame_sweep(capsys):
    code, out = run(capsys, "game", "subgame1", "--f", "3", "--sweep", "1000")
    assert code == 0
    assert "regime holds: 1000/1000" in out


def test_game_negative_regime(capsys):
    code, out = run(capsys, "game", "subgame1", "--d-exceeds-collateral")
    assert code == 0 and "cheating SPNE" in out


def test_game_brute_force_and_multihop(capsys):
    assert run(capsys, "game", "closing", "--brute-force")[0] == 0
    assert run(capsys, "game", "multihop", "--knows=false")[0] == 0
    assert run(capsys, "game", "opening")[0] == 0


def test_game_bad_params(capsys):
    code = main(["game", "closing", "--alpha", "1", "--eps", "2"])
    assert code == 2


def test_sweep_and_suite(capsys):
    assert run(capsys, "sweep", "--scenario", "bob_offline", "--seed", "2")[0] == 0
    code, out = run(capsys, "suite", "balance", "--runs", "12", "--fs", "1")
    assert code == 0 and "12/12" in out


def test_dump(capsys):
    code, out = run(capsys, "dump", "--scenario", "honest_optimistic", "--seed", "1", "chain")
    assert code == 0
    first = json.loads(out.splitlines()[0])
    assert "height" in first
