"""Blockchain and payment-channel contract state machine.

A `Ledger` applies transactions block by block. Each payment channel has one
`ContractState` holding party deposits, per-warden collateral and the
virtual-channel closing machinery: registration, warden publications,
proofs-of-fraud, cross-checking with peer contracts and settlement.

The settlement arithmetic lives in pure functions (`decide_ws`, `fee_shares`,
`settlement`) so the game-theory module can use it as its payoff oracle.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any, Iterable, Protocol, Sequence

from .core import (
    ActorId,
    ChannelState,
    PcState,
    ProofOfFraud,
    RegisterTx,
    Signature,
    SignedStatePublication,
    UpdateAnnouncement,
    encode,
    quorum_size,
    sign,
    validate_proof_of_fraud,
    verify,
)


class TxKind(str, enum.Enum):
    DEPLOY = "DeployChannel"
    FUND_PARTY = "FundParty"
    FUND_WARDEN = "FundWarden"
    COLLAB_CLOSE_PC = "CollabClosePC"
    REGISTER_VC = "RegisterVC"
    PUBLISH = "PublishState"
    PROOFS = "SubmitProofs"
    CROSSCHECK = "CrossCheck"
    CLOSE_PC = "ClosePcAfterVc"


class Phase(enum.IntEnum):
    OPEN = 0
    VC_REGISTERED = 1
    VC_COLLECTING = 2
    VC_CROSSCHECKING = 3
    VC_CLOSED = 4
    PC_CLOSED = 5


@dataclass(frozen=True)
class PcSetup:
    contract_id: str
    left: ActorId
    right: ActorId
    committee: tuple[ActorId, ...]
    f: int
    collateral: int

    def canonical(self):
        return (self.contract_id, self.left, self.right, self.committee, self.f, self.collateral)


@dataclass(frozen=True)
class CrossCheckMsg:
    """TX_q between contracts. `ws` is None for an abstaining reply from a
    contract that closed without a WS; `null` marks a reply that merely
    echoes an adopted state."""

    vc_id: str
    origin: str
    to_contract: str
    ws: ChannelState | None
    ws_origin: str | None
    register: RegisterTx
    null: bool = False

    def canonical(self):
        return (self.vc_id, self.origin, self.to_contract, self.ws, self.ws_origin, self.null)

    def summary(self) -> str:
        tag = "NULL" if self.null else "WS"
        seq = self.ws.seq if self.ws else "-"
        return f"{tag}[{self.origin}->{self.to_contract} seq={seq}]"


@dataclass(frozen=True)
class Tx:
    kind: TxKind
    sender: ActorId
    contract: str
    body: Any
    amount: int = 0
    sig: Signature | None = field(default=None, compare=False)

    def signing_bytes(self) -> bytes:
        return encode((self.kind.value, self.sender, self.contract, self.body, self.amount))

    def summary(self) -> str:
        return f"{self.kind.value}({self.sender.label}->{self.contract})"


def make_tx(kind: TxKind, sender: ActorId, contract_id: str, body: Any, amount: int = 0) -> Tx:
    tx = Tx(kind, sender, contract_id, body, amount)
    return Tx(kind, sender, contract_id, body, amount, sign(sender, tx.signing_bytes()))


@dataclass
class Block:
    height: int
    step: int
    txs: list[Tx]
    results: list[tuple[bool, str]] = field(default_factory=list)


# ---------------------------------------------------------------------------
# pure settlement rules


class PubLike(Protocol):
    warden: ActorId

    @property
    def seq(self) -> int: ...

    @property
    def state(self) -> Any: ...


def decide_ws(pubs: Sequence[PubLike], excluded: Iterable[ActorId], f: int):
    """Highest-seq state among the first 2f+1 publications by wardens not
    proven fraudulent; the earliest wins among equal seqs. None if fewer than
    2f+1 such publications exist."""
    bad = set(excluded)
    eligible = [p for p in pubs if p.warden not in bad]
    q = quorum_size(f)
    if len(eligible) < q:
        return None
    best = eligible[0]
    for p in eligible[1:q]:
        if p.seq > best.seq:
            best = p
    return best.state


def fee_shares(pubs: Sequence[PubLike], cheaters: Iterable[ActorId], f: int, fee: int):
    """First 2f+1 non-cheating publishers split the fee equally. Returns
    (shares, refund, shortfall)."""
    bad = set(cheaters)
    q = quorum_size(f)
    winners = [p.warden for p in pubs if p.warden not in bad][:q]
    share = fee // q
    shares = {w: share for w in winners}
    return shares, fee - share * len(winners), len(winners) < q


def vc_split(ws: ChannelState, left: ActorId, right: ActorId, endpoints: tuple[ActorId, ActorId]) -> dict[ActorId, int]:
    """Inside one PC the left party mirrors the first end party and the right
    party mirrors the last one."""
    return {left: ws.balance(endpoints[0]), right: ws.balance(endpoints[1])}


@dataclass(frozen=True)
class Settlement:
    ws: ChannelState | None
    x: int
    vc: dict[ActorId, int]
    slashed: dict[ActorId, int]
    fees: dict[ActorId, int]
    refund: int
    shortfall: bool


def settlement(
    *,
    ws: ChannelState | None,
    pubs: Sequence[PubLike],
    proven: Sequence[ActorId],
    f: int,
    v: int,
    fee: int,
    collateral: int,
    submitter: ActorId,
    left: ActorId,
    right: ActorId,
    endpoints: tuple[ActorId, ActorId],
) -> Settlement:
    """Outcome of one unilateral virtual-channel close on one contract.

    `proven` lists wardens with a valid proof-of-fraud (each slashed once).
    With x <= f the VC balance follows `ws`; with x >= f+1 the whole balance
    goes to the submitter's counterparty.
    """
    proven_set = list(dict.fromkeys(proven))
    x = len(proven_set)
    slashed = {w: collateral for w in proven_set}
    if x >= f + 1:
        other = right if submitter == left else left
        vc = {submitter: 0, other: v}
    else:
        if ws is None:
            raise ValueError("settlement needs a decided WS")
        vc = vc_split(ws, left, right, endpoints)
    fees, refund, shortfall = fee_shares(pubs, proven_set, f, fee)
    return Settlement(ws, x, vc, slashed, fees, refund, shortfall)


def prefer(own: ChannelState, own_origin: str, peer: ChannelState, peer_origin: str, leader: str, order: Sequence[str]):
    """Cross-check receiving rule: higher seq wins; a same-seq value conflict
    goes to the leader contract (then to the earlier contract in TX_r)."""
    if peer.seq > own.seq:
        return peer, peer_origin
    if peer.seq < own.seq or peer.same_value(own):
        return own, own_origin

    def rank(o):
        return (o != leader, order.index(o) if o in order else len(order))

    return (own, own_origin) if rank(own_origin) <= rank(peer_origin) else (peer, peer_origin)


# ---------------------------------------------------------------------------
# contract


class ContractState:
    def __init__(self, setup: PcSetup, aid: ActorId):
        self.cid = setup.contract_id
        self.aid = aid
        self.left = setup.left
        self.right = setup.right
        self.committee = tuple(setup.committee)
        self.f = setup.f
        self.collateral_required = setup.collateral
        self.deposits: dict[ActorId, int] = {}
        self.collateral: dict[ActorId, int] = {}
        self.slashed: set[ActorId] = set()
        self.phase = Phase.OPEN
        self.phase_log: list[Phase] = [Phase.OPEN]
        self.pc_state: PcState | None = None

        self.register: RegisterTx | None = None
        self.vc_registered = False
        self.is_leader = False
        self.peers: tuple[str, ...] = ()
        self.order: tuple[str, ...] = ()
        self.publications: list[SignedStatePublication] = []
        self.published_by: set[ActorId] = set()
        self.proofs_in = False
        self.proven: list[ActorId] = []
        self.x_submitter: ActorId | None = None
        self.ws: ChannelState | None = None
        self.ws_origin: str | None = None
        self.ws_history: list[int] = []
        self.decided_own = False
        self.heard: set[str] = set()
        self.sent_to: set[str] = set()
        self.fee_escrow = 0
        self.closer: ActorId | None = None
        self.settled: Settlement | None = None
        self.shortfall = False
        self.crosscheck = True

        self.pc_close_requested = False
        self.collab: dict[ActorId, bytes] = {}
        self.pc_requester: ActorId | None = None
        self.pc_publications: list[SignedStatePublication] = []
        self.pc_published_by: set[ActorId] = set()
        self.payouts: dict[ActorId, int] = {}
        self.penalty = False

    # -- bookkeeping -------------------------------------------------------

    @property
    def parties(self) -> tuple[ActorId, ActorId]:
        return self.left, self.right

    @property
    def pool(self) -> int:
        return sum(self.deposits.values())

    def holdings(self) -> int:
        return self.pool + sum(self.collateral.values()) + self.fee_escrow

    @property
    def funded(self) -> bool:
        return len(self.deposits) == 2 and len(self.collateral) + len(self.slashed) >= len(self.committee)

    def counterparty(self, p: ActorId) -> ActorId:
        return self.right if p == self.left else self.left

    def _goto(self, phase: Phase):
        if phase != self.phase:
            self.phase = phase
            self.phase_log.append(phase)

    @property
    def vc_id(self) -> str | None:
        return self.register.vc_id if self.register else None

    def _register_fits(self, reg: RegisterTx) -> bool:
        if not reg.is_valid():
            return False
        try:
            left, right = reg.body.pc(self.cid)
        except KeyError:
            return False
        if (left, right) != (self.left, self.right):
            return False
        return set(reg.body.committee(self.cid)) == set(self.committee)

    def _learn_register(self, reg: RegisterTx):
        if self.register is None:
            self.register = reg
            info = reg.body.contract_info
            self.is_leader = info.leader == self.cid
            self.order = info.contracts
            self.peers = tuple(c for c in info.contracts if c != self.cid)

    def _set_ws(self, state: ChannelState, origin: str):
        self.ws, self.ws_origin = state, origin
        self.ws_history.append(state.seq)


class ChainError(Exception):
    pass


class Ledger:
    """Single-writer ledger. `apply_block` returns contract-emitted CrossCheck
    txs for the caller to route through the network."""

    def __init__(self, external: dict[ActorId, int], crosscheck: bool = True):
        self.external: dict[ActorId, int] = dict(external)
        self.contracts: dict[str, ContractState] = {}
        self.blocks: list[Block] = []
        self.crosscheck = crosscheck
        self.total0 = self.total()
        self.violations: list[str] = []
        self.events: list[tuple[int, str, str]] = []
        self._seen: set[int] = set()
        self.contract_ids: dict[str, ActorId] = {}

    # -- coins -------------------------------------------------------------

    def total(self) -> int:
        return sum(self.external.values()) + sum(c.holdings() for c in self.contracts.values())

    def _pay(self, who: ActorId, amount: int):
        if amount:
            self.external[who] = self.external.get(who, 0) + amount

    def _take(self, who: ActorId, amount: int) -> bool:
        if self.external.get(who, 0) < amount:
            return False
        self.external[who] -= amount
        return True

    def note(self, cid: str, msg: str):
        self.events.append((len(self.blocks), cid, msg))

    # -- blocks ------------------------------------------------------------

    def apply_block(self, step: int, txs: Sequence[Tx]) -> tuple[Block, list[Tx]]:
        block = Block(len(self.blocks), step, [])
        emitted: list[Tx] = []
        for tx in txs:
            if id(tx) in self._seen:
                continue
            self._seen.add(id(tx))
            block.txs.append(tx)
            ok, why, out = self.apply(tx)
            block.results.append((ok, why))
            emitted.extend(out)
        self.blocks.append(block)
        if self.total() != self.total0:
            self.violations.append(f"conservation broken at height {block.height}: {self.total()} != {self.total0}")
        return block, emitted

    def apply(self, tx: Tx) -> tuple[bool, str, list[Tx]]:
        if tx.kind != TxKind.CROSSCHECK:
            if tx.sig is None or not verify(tx.sig, tx.sender, tx.signing_bytes()):
                return False, "bad tx signature", []
        handler = getattr(self, "_h_" + tx.kind.name.lower())
        try:
            return handler(tx)
        except ChainError as e:
            return False, str(e), []

    def _contract(self, tx: Tx) -> ContractState:
        c = self.contracts.get(tx.contract)
        if c is None:
            raise ChainError("unknown contract")
        return c

    # -- funding -----------------------------------------------------------

    def _h_deploy(self, tx: Tx):
        setup: PcSetup = tx.body
        if setup.contract_id in self.contracts or tx.sender != setup.left:
            raise ChainError("bad deploy")
        if len(setup.committee) != 3 * setup.f + 1:
            raise ChainError("committee must have 3f+1 wardens")
        if not self._take(tx.sender, tx.amount):
            raise ChainError("insufficient funds")
        aid = self.contract_ids.get(setup.contract_id)
        if aid is None:
            raise ChainError("contract id not reserved")
        c = ContractState(setup, aid)
        c.crosscheck = self.crosscheck
        c.deposits[tx.sender] = tx.amount
        self.contracts[setup.contract_id] = c
        return True, "deployed", []

    def _h_fund_party(self, tx: Tx):
        c = self._contract(tx)
        if tx.sender != c.right or tx.sender in c.deposits:
            raise ChainError("not the funding party")
        if not self._take(tx.sender, tx.amount):
            raise ChainError("insufficient funds")
        c.deposits[tx.sender] = tx.amount
        self._maybe_initial_state(c)
        return True, "funded", []

    def _h_fund_warden(self, tx: Tx):
        c = self._contract(tx)
        if tx.sender not in c.committee or tx.sender in c.collateral:
            raise ChainError("not a committee warden")
        if tx.amount < c.collateral_required:
            raise ChainError("collateral below v/f")
        if not self._take(tx.sender, tx.amount):
            raise ChainError("insufficient funds")
        c.collateral[tx.sender] = tx.amount
        self._maybe_initial_state(c)
        return True, "collateral locked", []

    def _maybe_initial_state(self, c: ContractState):
        if c.funded and c.pc_state is None:
            c.pc_state = PcState(c.cid, 1, tuple(c.deposits.items()))

    # -- payment channel close ---------------------------------------------

    def _skip_penalty(self, c: ContractState, requester: ActorId) -> bool:
        if c.vc_registered and c.phase != Phase.VC_CLOSED:
            other = c.counterparty(requester)
            self._payout(c, {other: c.pool})
            c.penalty = True
            self.note(c.cid, f"skip penalty: {other.label} receives whole PC balance")
            return True
        return False

    def _payout(self, c: ContractState, balances: dict[ActorId, int]):
        if sum(balances.values()) != c.pool:
            self.violations.append(f"{c.cid}: payout {sum(balances.values())} != pool {c.pool}")
            return
        for who, amt in balances.items():
            self._pay(who, amt)
        c.payouts = dict(balances)
        c.deposits = {}
        for w, amt in list(c.collateral.items()):
            self._pay(w, amt)
        c.collateral = {}
        if c.fee_escrow:
            self._pay(c.closer or c.left, c.fee_escrow)
            c.fee_escrow = 0
        c._goto(Phase.PC_CLOSED)

    def _h_collab_close_pc(self, tx: Tx):
        c = self._contract(tx)
        if c.phase == Phase.PC_CLOSED:
            raise ChainError("already closed")
        if tx.sender not in c.parties:
            raise ChainError("not a channel party")
        ann: UpdateAnnouncement = tx.body
        st = ann.state
        if not isinstance(st, PcState) or st.channel_id != c.cid:
            raise ChainError("not a PC state")
        if not ann.signers_valid(c.parties):
            raise ChainError("collaborative close needs both signatures")
        if st.locks or st.total != c.pool:
            raise ChainError("final state must be lock-free and match deposits")
        if self._skip_penalty(c, tx.sender):
            return True, "penalty", []
        # each party publishes the agreed final state; the second matching
        # publication closes the channel
        c.collab[tx.sender] = ann.digest
        if len(c.collab) < 2 or len(set(c.collab.values())) != 1:
            return True, "closing state recorded", []
        self._payout(c, dict(st.balances))
        return True, "closed collaboratively", []

    def _h_close_pc(self, tx: Tx):
        c = self._contract(tx)
        if c.phase == Phase.PC_CLOSED or c.pc_close_requested:
            raise ChainError("close already in progress")
        if tx.sender not in c.parties:
            raise ChainError("not a channel party")
        if self._skip_penalty(c, tx.sender):
            return True, "penalty", []
        c.pc_close_requested = True
        c.pc_requester = tx.sender
        return True, "pc close requested", []

    def _finish_pc_close(self, c: ContractState):
        pubs = c.pc_publications
        best = decide_ws(pubs, (), c.f)
        if best is None:
            return
        bal = dict(best.balances)
        for vc_id, l, r in best.locks:
            if c.settled is not None and vc_id == c.vc_id:
                for who, amt in c.settled.vc.items():
                    bal[who] = bal.get(who, 0) + amt
            else:
                # a live lock with no on-chain VC settlement: forfeit to the
                # requester's counterparty, like skipping the VC close
                other = c.counterparty(c.pc_requester)
                self.note(c.cid, f"unsettled lock {vc_id}: forfeited to {other.label}")
                bal = {other: c.pool}
                c.penalty = True
                break
        self._payout(c, bal)

    # -- virtual channel close ---------------------------------------------

    def _h_register_vc(self, tx: Tx):
        c = self._contract(tx)
        if c.phase == Phase.PC_CLOSED:
            raise ChainError("contract closed")
        reg: RegisterTx = tx.body
        if tx.sender not in c.parties:
            raise ChainError("not a channel party")
        if c.vc_registered:
            return False, "duplicate register (no-op)", []
        if not c._register_fits(reg):
            raise ChainError("invalid register transaction")
        if c.register is not None and c.register.vc_id != reg.vc_id:
            raise ChainError("different virtual channel")
        if not self._take(tx.sender, tx.amount):
            raise ChainError("cannot escrow fee")
        c.fee_escrow += tx.amount
        c.closer = tx.sender
        c._learn_register(reg)
        c.vc_registered = True
        c._goto(Phase.VC_REGISTERED)
        return True, "vc registered", []

    def _h_publish(self, tx: Tx):
        c = self._contract(tx)
        pub: SignedStatePublication = tx.body
        if tx.sender != pub.warden or pub.warden not in c.committee:
            raise ChainError("publisher not in committee")
        if not pub.is_valid() or not pub.announcement.is_valid():
            raise ChainError("invalid publication")
        if isinstance(pub.state, PcState):
            if not c.pc_close_requested or c.phase == Phase.PC_CLOSED:
                raise ChainError("no pc close in progress")
            if pub.state.channel_id != c.cid:
                raise ChainError("wrong channel")
            if pub.warden in c.pc_published_by:
                raise ChainError("second publication ignored")
            c.pc_published_by.add(pub.warden)
            c.pc_publications.append(pub)
            self._finish_pc_close(c)
            return True, "pc state published", []
        if c.phase not in (Phase.VC_REGISTERED, Phase.VC_COLLECTING, Phase.VC_CROSSCHECKING):
            raise ChainError("not collecting publications")
        if pub.state.channel_id != c.vc_id:
            raise ChainError("wrong channel")
        if pub.warden in c.published_by:
            raise ChainError("second publication ignored")
        c.published_by.add(pub.warden)
        c.publications.append(pub)
        if c.phase == Phase.VC_REGISTERED:
            c._goto(Phase.VC_COLLECTING)
        return True, "vc state published", self._progress(c)

    def _h_proofs(self, tx: Tx):
        c = self._contract(tx)
        if c.phase not in (Phase.VC_COLLECTING, Phase.VC_CROSSCHECKING):
            raise ChainError("not accepting proofs")
        if tx.sender not in c.parties:
            raise ChainError("submitter is not a channel party")
        proofs: Sequence[ProofOfFraud] = tx.body
        counted = {p.warden: p for p in c.publications}
        gained = 0
        for pof in proofs:
            w = pof.accused
            if w in c.slashed or counted.get(w) != pof.published:
                continue
            if not validate_proof_of_fraud(pof):
                continue
            amt = c.collateral.pop(w, 0)
            c.slashed.add(w)
            c.proven.append(w)
            self._pay(tx.sender, amt)
            gained += amt
            if len(c.proven) == c.f + 1:
                c.x_submitter = tx.sender
        c.proofs_in = True
        self.note(c.cid, f"proofs by {tx.sender.label}: x={len(c.proven)} +{gained}")
        return True, f"x={len(c.proven)}", self._progress(c)

    def _h_crosscheck(self, tx: Tx):
        c = self._contract(tx)
        msg: CrossCheckMsg = tx.body
        if not c.crosscheck:
            return False, "cross-checking disabled", []
        if c.phase == Phase.PC_CLOSED and c.register is None:
            raise ChainError("contract closed")
        if c.register is None:
            if not c._register_fits(msg.register):
                raise ChainError("cross-check for unknown virtual channel")
            c._learn_register(msg.register)
        if msg.vc_id != c.vc_id or msg.origin not in c.peers:
            raise ChainError("cross-check from unknown contract")
        if self.contract_ids.get(msg.origin) != tx.sender:
            raise ChainError("cross-check not sent by its origin contract")
        c.heard.add(msg.origin)
        out: list[Tx] = []
        if msg.ws is not None and c.settled is None and c.x_submitter is None:
            if c.ws is None:
                c._set_ws(msg.ws, msg.ws_origin)
                self.note(c.cid, f"adopted seq {msg.ws.seq} from {msg.ws_origin}")
                out += self._broadcast(c, null=True)
            else:
                new, origin = prefer(c.ws, c.ws_origin, msg.ws, msg.ws_origin, c.register.body.contract_info.leader, c.order)
                if new is not c.ws:
                    self.note(c.cid, f"ws seq {c.ws.seq} -> {new.seq} via {origin}")
                    c._set_ws(new, origin)
        if msg.origin not in c.sent_to:
            out += self._send(c, msg.origin, null=True)
        return True, "cross-check received", out + self._progress(c)

    def _send(self, c: ContractState, peer: str, null: bool) -> list[Tx]:
        c.sent_to.add(peer)
        msg = CrossCheckMsg(c.vc_id, c.cid, peer, c.ws, c.ws_origin, c.register, null)
        return [Tx(TxKind.CROSSCHECK, c.aid, peer, msg)]

    def _broadcast(self, c: ContractState, null: bool) -> list[Tx]:
        out = []
        for p in c.peers:
            if p not in c.sent_to:
                out += self._send(c, p, null)
        return out

    def _progress(self, c: ContractState) -> list[Tx]:
        """Advance the closing state machine after any input."""
        out: list[Tx] = []
        if c.settled is not None or not c.vc_registered:
            return out
        if c.x_submitter is not None:
            self._settle(c)
            return out
        if not c.proofs_in:
            return out
        if c.phase == Phase.VC_COLLECTING:
            own = decide_ws(c.publications, c.proven, c.f)
            if own is None:
                return out
            c._goto(Phase.VC_CROSSCHECKING)
            if c.ws is None:
                c._set_ws(own, c.cid)
                c.decided_own = True
                self.note(c.cid, f"decided own ws seq {own.seq}")
            if c.crosscheck:
                out += self._broadcast(c, null=False)
        if c.phase == Phase.VC_CROSSCHECKING:
            if not c.crosscheck or set(c.peers) <= c.heard:
                self._settle(c)
        return out

    def _settle(self, c: ContractState):
        reg = c.register
        left, right = c.parties
        submitter = c.x_submitter or c.closer or left
        s = settlement(
            ws=c.ws,
            pubs=c.publications,
            proven=c.proven,
            f=c.f,
            v=reg.body.balance,
            fee=c.fee_escrow,
            collateral=0,
            submitter=submitter,
            left=left,
            right=right,
            endpoints=reg.body.endpoints,
        )
        for w, amt in s.fees.items():
            self._pay(w, amt)
        self._pay(c.closer, s.refund)
        c.fee_escrow = 0
        c.settled = s
        c.shortfall = s.shortfall
        if s.shortfall:
            self.note(c.cid, "fee shortfall: fewer than 2f+1 non-cheating publishers")
        c._goto(Phase.VC_CLOSED)
        self.note(c.cid, f"vc settled x={s.x} ws={s.ws.seq if s.ws else None} split={ {k.label: v for k, v in s.vc.items()} }")

    # -- dumps -------------------------------------------------------------

    def dump(self) -> list[dict]:
        rows = []
        for b in self.blocks:
            rows.append(
                {
                    "height": b.height,
                    "step": b.step,
                    "txs": [
                        {"kind": t.kind.value, "sender": t.sender.label, "contract": t.contract, "ok": ok, "note": why}
                        for t, (ok, why) in zip(b.txs, b.results)
                    ],
                }
            )
        return rows
