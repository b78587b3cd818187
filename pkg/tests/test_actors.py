from types import SimpleNamespace

import pytest

from wardenvc.actors import Behavior, WardenActor, WardenStore, is_byzantine
from wardenvc.core import ChannelState, announce, party, warden
from wardenvc.scenarios import Simulation, canned, check_balance_security, check_liveness

A, B = party(0, "A"), party(2, "B")


def _ann(seq, a=3):
    return announce(ChannelState.of("VC", seq, {A: a, B: 10 - a}), [A, B])


def _warden(name="honest", arg=None, top=4):
    w = WardenActor(SimpleNamespace(), warden(0), Behavior(name, arg))
    st = WardenStore()
    for s in range(1, top + 1):
        st.signed[s] = [_ann(s)]
    return w, st


def test_signs_next_seq():
    w, st = _warden()
    assert w._may_sign(st, _ann(5))


def test_ignores_gap():
    w, st = _warden()
    assert not w._may_sign(st, _ann(6))


def test_honest_signs_once_per_seq():
    w, st = _warden()
    w._sign(st, _ann(5, 3))
    assert not w._may_sign(st, _ann(5, 4))


def test_double_signer_signs_both():
    w, st = _warden("double_signer")
    w._sign(st, _ann(5, 3))
    assert w._may_sign(st, _ann(5, 4))


def test_no_signing_after_publication():
    w, st = _warden()
    st.published.add("vc:SC")
    assert not w._may_sign(st, _ann(5))


def test_publication_choice():
    w, st = _warden(top=9)
    assert w._choose(st).seq == 9
    w, st = _warden("stale_publisher", 5, top=9)
    assert w._choose(st).seq == 5


def test_offline_counts_as_honest():
    assert not is_byzantine(Behavior("offline", "close"))
    assert is_byzantine(Behavior("old_state_closer", 2))


def _sim(name, f=1, seed=1, **kw):
    s = Simulation(canned(name, f=f, seed=seed, **kw))
    return s, s.run()


def test_open_locks_vc_amounts_in_both_pcs():
    s, _ = _sim("honest_optimistic", closers=[], settle_out=False)
    for cid in ("SC:A-I", "SC:I-B"):
        st = s.party("I").pcs[cid].state
        # PC (a, b) = (10, 10) with VC (c, d) = (5, 5) -> (a-c, b-d)
        assert st.lock("VC:A-I-B") == (5, 5)
        assert sorted(v for _, v in st.balances) == [5, 5]


def test_inconsistent_funder_refused():
    s, rep = _sim("inconsistent_funder")
    assert not s.party("B").usable
    assert check_balance_security(rep)


def test_offline_party_blocks_open_everywhere():
    s, rep = _sim("honest_optimistic", behaviors={"B": Behavior("offline", "open")})
    assert all(s.party(p).vc.tx is None for p in "AIB")
    assert check_balance_security(rep)


def test_honest_update_committed_with_both_certs():
    s, rep = _sim("honest_optimistic", closers=[], settle_out=False)
    assert s.party("A").vc.committed.seq == 4
    assert all(u["committed"] for u in rep.liveness["updates"])


def test_update_below_quorum_not_committed():
    crashed = {f"W{i}": Behavior("crash", "update") for i in range(10, 14)}
    s, rep = _sim("honest_optimistic", f=3, behaviors=crashed, settle_out=False, closers=[])
    assert s.party("A").vc.committed.seq == 1


def test_honest_wardens_sign_once_per_seq():
    for name in ("collusion_double_state", "collusion_diff_seq", "honest_optimistic"):
        s, _ = _sim(name)
        for w in s.wardens:
            actor = s.actors[w]
            if actor.honest:
                assert max(actor.sig_count.values(), default=0) <= 1, (name, w)


def test_mismatched_requests_close_both_sides():
    _, rep = _sim("mismatched_requests")
    assert all(c["settled"] for c in rep.closures.values())
    assert check_balance_security(rep)


def test_ingrid_offline_ends_close_unilaterally():
    _, rep = _sim("ingrid_offline")
    assert rep.liveness["closes"] == {"A": "unilateral", "B": "unilateral"}
    assert check_balance_security(rep)


def test_withholders_tolerated():
    beh = {f"W{i}": Behavior("withholder", "chain") for i in range(3)}
    _, rep = _sim("honest_single_closer", f=3, behaviors=beh)
    assert check_liveness(rep) and check_balance_security(rep)


def test_old_state_closer_defeated():
    _, rep = _sim("old_state_closer")
    assert check_balance_security(rep)
    seqs = {c["ws_seq"] for c in rep.closures.values() if c["settled"]}
    assert seqs == {4}
