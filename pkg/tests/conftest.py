from __future__ import annotations

import pytest

from wardenvc.chainsim import Ledger, PcSetup, TxKind, make_tx
from wardenvc.core import (
    ChannelState,
    ContractInfo,
    announce,
    contract,
    encode,
    endorse,
    make_register_tx,
    party,
    register_body,
    required_collateral,
    sign,
    warden,
)

A, I, B = party(0, "A"), party(1, "I"), party(2, "B")
AI, IB = "SC:A-I", "SC:I-B"
VC = "VC:1"


class Chain:
    """One funded Alice-Ingrid-Bob setup on a bare ledger, f=3 by default."""

    def __init__(self, f: int = 3, v: int = 10, deposit: int = 15, leader: str = AI):
        self.f, self.v = f, v
        n = 3 * f + 1
        self.com = {AI: [warden(i) for i in range(n)], IB: [warden(n + i) for i in range(n)]}
        everyone = [A, I, B] + self.com[AI] + self.com[IB]
        self.ledger = Ledger({x: 1000 for x in everyone})
        self.ledger.contract_ids = {AI: contract(0, AI), IB: contract(1, IB)}
        self.coll = required_collateral(2 * deposit, f)
        for cid, (l, r) in ((AI, (A, I)), (IB, (I, B))):
            setup = PcSetup(cid, l, r, tuple(self.com[cid]), f, self.coll)
            self.apply(TxKind.DEPLOY, l, cid, setup, deposit)
            self.apply(TxKind.FUND_PARTY, r, cid, None, deposit)
            for w in self.com[cid]:
                self.apply(TxKind.FUND_WARDEN, w, cid, None, self.coll)
        s1 = self.state(1, v // 2)
        body = register_body(VC, [A, I, B], self.com, s1, v, ContractInfo((AI, IB), leader))
        self.reg = make_register_tx(
            body, {p: sign(p, encode(body)) for p in (A, I, B)}, {p: sign(p, encode(s1)) for p in (A, B)}
        )

    def state(self, seq: int, a: int) -> ChannelState:
        return ChannelState.of(VC, seq, {A: a, B: self.v - a})

    def pub(self, w, seq: int, a: int):
        return endorse(w, announce(self.state(seq, a), [A, B]))

    def apply(self, kind, sender, cid, body, amount=0):
        return self.ledger.apply(make_tx(kind, sender, cid, body, amount))

    def block(self, txs):
        _, out = self.ledger.apply_block(0, txs)
        return out

    def c(self, cid):
        return self.ledger.contracts[cid]


@pytest.fixture
def chain():
    return Chain()


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
