import pytest
from hypothesis import given, settings, strategies as st

from wardenvc.core import party, warden
from wardenvc.netsim import AdversaryPolicy, Network
from wardenvc.scenarios import canned, run_scenario

A, I, B = party(0, "A"), party(1, "I"), party(2, "B")


def test_honest_delay_within_horizon():
    net = Network(AdversaryPolicy(seed=1, horizon=50))
    t = net.now
    for _ in range(200):
        env = net.send(A, B, "m", None)
        assert t + 1 <= env.deliver_at <= t + 50


@given(st.integers(0, 2**32), st.integers(1, 300), st.integers(-5, 1000))
@settings(max_examples=200)
def test_honest_delay_clamped_even_when_requested(seed, h, requested):
    net = Network(AdversaryPolicy(seed=seed, horizon=h))
    env = net.send(A, B, "m", None, delay=requested)
    assert 1 <= env.deliver_at - net.now <= h


def test_byzantine_drop_is_selective():
    w = warden(0)
    pol = AdversaryPolicy(seed=0, horizon=10, drop_rules={("W0", "I", "sig")})
    net = Network(pol, byzantine=[w])
    assert net.send(w, I, "sig", None) is None
    assert net.send(w, A, "sig", None) is not None
    assert net.dropped == 1


def test_honest_sender_never_dropped():
    pol = AdversaryPolicy(seed=0, horizon=10, drop_rules={("A", "*", "*")})
    net = Network(pol)
    assert net.send(A, B, "x", None) is not None


def test_censorship_delay_must_respect_horizon():
    with pytest.raises(ValueError):
        AdversaryPolicy(horizon=10, censorship={("A", "*"): 11})


def test_same_deliver_at_ordered_by_counter():
    net = Network(AdversaryPolicy(seed=0, horizon=10))
    e1 = net.send(A, B, "first", None, delay=3)
    e2 = net.send(I, B, "second", None, delay=3)
    got = []
    net.advance_to_next()
    net.step(lambda now, batch: got.extend(batch))
    assert [e.kind for e in got] == ["first", "second"]
    assert e1.counter < e2.counter


def test_empty_step_advances():
    net = Network(AdversaryPolicy())
    t = net.now
    assert net.step() == []
    assert net.now == t + 1


def test_quiescence_and_replay():
    def run(seed):
        net = Network(AdversaryPolicy(seed=seed, horizon=20))
        hops = []

        def deliver(now, batch):
            for e in batch:
                hops.append((now, e.kind))
                if e.kind == "ping" and len(hops) < 30:
                    net.send(e.to, e.frm, "ping", None)

        net.send(A, B, "ping", None)
        assert net.run_until_quiescent(deliver, 10_000)
        return net.trace_digest(), hops

    d1, h1 = run(5)
    d2, h2 = run(5)
    assert d1 == d2 and h1 == h2
    steps = [t for t, _ in h1]
    assert steps == sorted(steps)


def test_run_replay_byte_identical():
    cfg = canned("collusion_double_state", f=1, seed=11)
    assert run_scenario(cfg).trace_digest == run_scenario(cfg).trace_digest


def test_honest_optimistic_quiesces():
    rep = run_scenario(canned("honest_optimistic", f=1, seed=2))
    assert rep.live


def test_stall_every_honest_tx_still_quiescent():
    cfg = canned("ingrid_offline", f=1, seed=3, horizon=30, censorship={(x, "tx"): 30 for x in ("A", "B")})
    rep = run_scenario(cfg)
    assert rep.live and not rep.violations
