import pytest
from hypothesis import given, strategies as st

from wardenvc.core import (
    ChannelState,
    ContractInfo,
    IncompleteRegisterError,
    ProofOfFraud,
    QuorumCert,
    RegisterMismatchError,
    Signature,
    _tag,
    announce,
    digest,
    encode,
    endorse,
    make_register_tx,
    merge_pre_registers,
    party,
    quorum_size,
    register_body,
    required_collateral,
    sign,
    validate_proof_of_fraud,
    verify,
    verify_quorum,
    warden,
)

A, I, B, C = party(0, "A"), party(1, "I"), party(2, "B"), party(3, "C")


def test_sign_verify_roundtrip():
    s = sign(A, b"m")
    assert verify(s, A, b"m")


def test_wrong_signer_rejected():
    assert not verify(sign(A, b"m"), B, b"m")


def test_wrong_message_rejected():
    assert not verify(sign(A, b"m"), A, b"m2")


@given(st.binary(), st.binary())
def test_signature_binds_message(m1, m2):
    assert verify(sign(A, m1), A, m2) == (m1 == m2)


def test_encoding_is_canonical():
    s1 = ChannelState.of("VC", 3, {A: 1, B: 2})
    s2 = ChannelState.of("VC", 3, {B: 2, A: 1})
    assert encode(s1) == encode(s2)
    assert digest(s1) != digest(ChannelState.of("VC", 3, {A: 2, B: 1}))
    # length prefixes keep ("ab", "c") apart from ("a", "bc")
    assert encode(("ab", "c")) != encode(("a", "bc"))


def test_state_rejects_negative_and_zero_seq():
    with pytest.raises(ValueError):
        ChannelState.of("VC", 1, {A: -1, B: 2})
    with pytest.raises(ValueError):
        ChannelState.of("VC", 0, {A: 1, B: 2})


def _wsig(w, d):
    return Signature(w, d, _tag(w, d))


def _cert(signers, d=b"d" * 32):
    return QuorumCert(d, frozenset(_wsig(w, d) for w in signers), "C")


def test_quorum_threshold_f3():
    com = [warden(i) for i in range(10)]
    assert quorum_size(3) == 7
    assert verify_quorum(_cert(com[:7]), com, 3)
    assert not verify_quorum(_cert(com[:6]), com, 3)


def test_quorum_counts_distinct_signers():
    com = [warden(i) for i in range(10)]
    # 7 signatures, two from the same warden: a frozenset collapses exact
    # duplicates, so build the 7th over a different digest to keep it distinct
    sigs = list(_cert(com[:6]).warden_sigs)
    dup = _wsig(com[0], b"e" * 32)
    cert = QuorumCert(b"d" * 32, frozenset(sigs + [dup]), "C")
    assert len(cert.warden_sigs) == 7
    assert not verify_quorum(cert, com, 3)


def test_quorum_ignores_outsiders():
    com = [warden(i) for i in range(10)]
    outsiders = [warden(100 + i) for i in range(7)]
    assert not verify_quorum(_cert(com[:5] + outsiders[:2]), com, 3)


def _collateral_oracle(v, f):
    return min(c for c in range(1, v + 1) if f * c >= v)


@pytest.mark.parametrize("v,f,want", [(10, 3, 4), (12, 3, 4), (3, 3, 1)])
def test_required_collateral(v, f, want):
    c = required_collateral(v, f)
    assert c == want == _collateral_oracle(v, f)
    assert (f + 1) * c > v


@given(st.integers(1, 10_000), st.integers(1, 50))
def test_collateral_always_covers_v(v, f):
    c = required_collateral(v, f)
    assert c == _collateral_oracle(v, f)
    assert (f + 1) * c > v


def _pub(w, seq, a):
    return endorse(w, announce(ChannelState.of("VC", seq, {A: a, B: 10 - a}), [A, B]))


def test_fraud_newer_signature():
    w = warden(0)
    assert validate_proof_of_fraud(ProofOfFraud(w, _pub(w, 4, 3), _pub(w, 5, 2)))


def test_no_fraud_identical_state():
    w = warden(0)
    assert not validate_proof_of_fraud(ProofOfFraud(w, _pub(w, 5, 3), _pub(w, 5, 3)))


def test_fraud_equal_seq_different_balances():
    w = warden(0)
    assert validate_proof_of_fraud(ProofOfFraud(w, _pub(w, 5, 3), _pub(w, 5, 4)))


def test_fraud_needs_same_warden():
    assert not validate_proof_of_fraud(ProofOfFraud(warden(0), _pub(warden(0), 4, 3), _pub(warden(1), 5, 2)))


def test_fraud_older_signature_is_not_fraud():
    w = warden(0)
    assert not validate_proof_of_fraud(ProofOfFraud(w, _pub(w, 5, 3), _pub(w, 4, 2)))


def _body(parties, n=10):
    cids = tuple(f"SC:{i}" for i in range(len(parties) - 1))
    coms = {cid: [warden(j * n + i) for i in range(n)] for j, cid in enumerate(cids)}
    s1 = ChannelState.of("VC", 1, {parties[0]: 5, parties[-1]: 5})
    return register_body("VC", parties, coms, s1, 10, ContractInfo(cids, cids[0])), s1


def test_register_three_parties():
    body, s1 = _body([A, I, B])
    tx = make_register_tx(body, {p: sign(p, encode(body)) for p in (A, I, B)}, {p: sign(p, encode(s1)) for p in (A, B)})
    assert len(body.pk_wardens) == 20
    assert len(tx.sigs) == 3 and tx.is_valid()


def test_register_multihop_needs_every_party():
    body, s1 = _body([A, I, C, B])
    init = {p: sign(p, encode(s1)) for p in (A, B)}
    tx = make_register_tx(body, {p: sign(p, encode(body)) for p in (A, I, C, B)}, init)
    assert len(tx.sigs) == 4
    with pytest.raises(IncompleteRegisterError):
        make_register_tx(body, {p: sign(p, encode(body)) for p in (A, I, B)}, init)


def test_register_missing_intermediary_signature():
    body, s1 = _body([A, I, B])
    with pytest.raises(IncompleteRegisterError):
        make_register_tx(body, {p: sign(p, encode(body)) for p in (A, B)}, {p: sign(p, encode(s1)) for p in (A, B)})


def test_mismatched_pre_registers_abort():
    b1, _ = _body([A, I, B])
    s_other = ChannelState.of("VC", 1, {A: 4, B: 6})
    b2 = register_body("VC", [A, I, B], dict(b1.committees), s_other, 10, b1.contract_info)
    assert merge_pre_registers([b1, b1]) == b1
    with pytest.raises(RegisterMismatchError):
        merge_pre_registers([b1, b2])


def test_leader_must_be_listed_once():
    with pytest.raises(ValueError):
        ContractInfo(("X", "Y"), "Z")
