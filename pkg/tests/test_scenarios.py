import json
from dataclasses import replace

import pytest

from wardenvc.actors import Behavior
from wardenvc.scenarios import (
    CANNED,
    ScenarioConfig,
    ScenarioError,
    all_settled,
    balance_configs,
    build_multihop,
    canned,
    check_balance_security,
    check_liveness,
    config_from_dict,
    count_onchain_txs,
    h_sweep,
    same_state_configs,
    load_scenario,
    outcome_key,
    run_scenario,
    same_state_closure,
)


def test_all_honest_two_hop():
    rep = run_scenario(canned("honest_optimistic", f=1, seed=0))
    assert all(v == 0 for a, v in rep.loss.items() if not a.startswith("W"))
    assert rep.live and check_balance_security(rep)


def test_collusion_same_ws_both_contracts():
    rep = run_scenario(canned("collusion_double_state", f=1, seed=3))
    assert all_settled(rep) and same_state_closure(rep)


def test_ingrid_alone_settles_both_sides():
    rep = run_scenario(canned("ends_offline", f=1, seed=4))
    assert all_settled(rep)
    assert rep.loss["I"] <= 0


def test_honest_bob_vs_old_state_alice():
    assert check_balance_security(run_scenario(canned("old_state_closer", f=2, seed=1)))


def test_ablation_breaks_collusion_defense():
    cfg = replace(canned("collusion_double_state", f=1, seed=7), crosscheck=False)
    rep = run_scenario(cfg)
    assert not same_state_closure(rep)
    assert not check_balance_security(rep)


def test_honest_wardens_never_slashed():
    for cfg in balance_configs(48, seed0=900):
        rep = run_scenario(cfg)
        assert not rep.slashed_honest, (cfg.name, cfg.seed)


def test_liveness_silent_counterparty():
    rep = run_scenario(canned("bob_offline", f=1, seed=2))
    assert check_liveness(rep)


def test_liveness_with_f_ignoring_wardens():
    beh = {f"W{i}": Behavior("crash", "update") for i in range(1)}
    rep = run_scenario(canned("honest_optimistic", f=1, seed=2, behaviors=beh))
    assert all(u["committed"] for u in rep.liveness["updates"])


def test_superseded_update_counts_as_invalidated():
    rep = run_scenario(canned("offline_during_update", f=1, seed=2))
    last = rep.liveness["updates"][-1]
    assert last["committed"] or last["invalidated"]
    assert check_liveness(rep)


def test_liveness_bound():
    rep = run_scenario(canned("honest_optimistic", f=1, seed=2))
    steps = rep.liveness["steps"]
    assert check_liveness(rep, steps) and not check_liveness(rep, steps - 1)


def test_tx_count_pessimistic_vc_close():
    rep = run_scenario(canned("ingrid_offline", f=3, seed=1))
    party_txs, warden_txs = count_onchain_txs(rep, "pessimistic_vc_close", "SC:A-I")
    assert party_txs == 2 and 7 <= warden_txs <= 10


def test_tx_count_optimistic_vc_close():
    rep = run_scenario(canned("honest_optimistic", f=3, seed=1))
    assert count_onchain_txs(rep, "optimistic_vc_close") == (0, 0)


def test_tx_count_pessimistic_pc_close():
    rep = run_scenario(canned("ingrid_offline", f=3, seed=1))
    party_txs, warden_txs = count_onchain_txs(rep, "pessimistic_pc_close", "SC:A-I")
    assert party_txs == 1 and 7 <= warden_txs <= 10


def test_tx_count_deploy():
    rep = run_scenario(canned("honest_optimistic", f=3, seed=1))
    assert count_onchain_txs(rep, "deploy_open_pc", "SC:A-I") == (2, 10)


def test_unknown_phase_rejected():
    rep = run_scenario(canned("honest_optimistic", f=1, seed=1))
    with pytest.raises(ValueError):
        count_onchain_txs(rep, "nope")


def test_four_party_honest():
    cfg = canned("honest_optimistic", f=1, seed=0, hops=3)
    assert cfg.labels == ["A", "B", "C", "D"]
    rep = build_multihop(cfg).run()
    assert check_balance_security(rep) and rep.live
    assert all(v == 0 for a, v in rep.loss.items() if not a.startswith("W"))


def test_four_party_collusion_settles_identically():
    rep = run_scenario(canned("collusion_double_state", f=1, seed=5, hops=3))
    assert all_settled(rep) and same_state_closure(rep)
    assert check_balance_security(rep)


def test_four_party_inconsistent_lock_refused():
    rep = run_scenario(canned("inconsistent_funder", f=1, seed=5, hops=3))
    assert check_balance_security(rep)


def test_multihop_needs_three_hops():
    with pytest.raises(ValueError):
        build_multihop(canned("honest_optimistic"))


@pytest.mark.parametrize("name", CANNED)
@pytest.mark.parametrize("hops", [2, 3])
def test_canned_secure_and_live(name, hops):
    rep = run_scenario(canned(name, f=1, seed=13, hops=hops))
    assert check_balance_security(rep), rep.summary()
    assert check_liveness(rep)
    assert same_state_closure(rep)
    assert not rep.violations


def test_config_validation():
    with pytest.raises(ValueError):
        ScenarioConfig(hops=1)
    with pytest.raises(ValueError):
        ScenarioConfig(initial=(3, 3), v=10)
    with pytest.raises(ValueError):
        ScenarioConfig(closers=["Z"])


def test_same_state_configs_cover_both_collisions():
    cfgs = list(same_state_configs(1, 8))
    assert {c.name for c in cfgs} == {"collusion_double_state", "collusion_diff_seq"}
    assert {c.same_block_crosscheck for c in cfgs} == {True, False}


def test_h_sweep_outcome_independent():
    res = h_sweep(canned("bob_offline", f=1, seed=8))
    assert len({outcome_key(r) for r in res.values()}) == 1


def test_scenario_file_roundtrip(tmp_path):
    p = tmp_path / "s.json"
    p.write_text(json.dumps({"schema": 1, "base": "bob_offline", "f": 2, "behaviors": {"W0": "stale_publisher:1"}}))
    cfg = load_scenario(str(p))
    assert cfg.f == 2 and cfg.behaviors["W0"] == Behavior("stale_publisher", 1)
    assert check_balance_security(run_scenario(cfg))


def test_scenario_file_unknown_key_rejected():
    with pytest.raises(ScenarioError, match="unknown key"):
        config_from_dict({"schema": 1, "speed": 3})


def test_scenario_file_needs_schema():
    with pytest.raises(ScenarioError, match="schema"):
        config_from_dict({"f": 1})


def test_scenario_file_bad_json_reports_line(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{"schema": 1,\n "f": }')
    with pytest.raises(ScenarioError, match=r"bad.json:2:"):
        load_scenario(str(p))


def test_scenario_file_bad_behavior():
    with pytest.raises(ScenarioError, match="behaviors.A"):
        config_from_dict({"schema": 1, "behaviors": {"A": "teleport"}})
