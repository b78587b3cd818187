"""Main-party and warden state machines.

Honest actors follow the open / update / close protocols message by message.
Byzantine actors are drawn from a closed catalogue of behaviours, each one
tied to an attack the protocol is meant to withstand.

No actor ever reads the clock to decide anything. The one exception to pure
message-driven progress is `nudge()`, which the driver calls when the network
is quiescent; it models a party noticing that a response never came.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Iterable

from .chainsim import Phase, TxKind, make_tx
from .core import (
    CHAIN,
    ActorId,
    ChannelState,
    ContractInfo,
    PcState,
    ProofOfFraud,
    RegisterBody,
    RegisterTx,
    SignedStatePublication,
    UpdateAnnouncement,
    encode,
    endorse,
    make_register_tx,
    merge_pre_registers,
    quorum_size,
    sign,
    state_bytes,
    verify,
    verify_digest,
)

if TYPE_CHECKING:  # pragma: no cover
    from .scenarios import Simulation


# ---------------------------------------------------------------------------
# behaviours


@dataclass(frozen=True)
class Behavior:
    name: str
    arg: Any = None

    def __str__(self):
        return self.name if self.arg is None else f"{self.name}({self.arg})"


PARTY_BEHAVIORS = {
    "honest",
    "offline",
    "double_state_colluder",
    "old_state_closer",
    "inconsistent_funder",
    "collusive_intermediary",
}
WARDEN_BEHAVIORS = {"honest", "stale_publisher", "double_signer", "withholder", "crash"}

HONEST = Behavior("honest")


def is_byzantine(b: Behavior) -> bool:
    """Offline parties stop but never deviate, so they count as honest."""
    return b.name not in ("honest", "offline")


# ---------------------------------------------------------------------------
# messages


@dataclass(frozen=True)
class Msg:
    kind: str
    body: Any

    def summary(self) -> str:
        b = self.body
        st = getattr(b, "state", None)
        if st is not None and hasattr(st, "seq"):
            return f"{self.kind}[{st.channel_id}#{st.seq}]"
        return self.kind


# ---------------------------------------------------------------------------
# base


class Actor:
    def __init__(self, sim: "Simulation", aid: ActorId, behavior: Behavior):
        self.sim = sim
        self.aid = aid
        self.behavior = behavior
        self.offline_from: int | None = None
        if behavior.name in ("offline", "crash") and isinstance(behavior.arg, int):
            self.offline_from = behavior.arg

    @property
    def online(self) -> bool:
        return self.offline_from is None or self.sim.net.now < self.offline_from

    @property
    def honest(self) -> bool:
        return not is_byzantine(self.behavior)

    def send(self, to: ActorId, kind: str, body: Any):
        if self.online:
            self.sim.net.send(self.aid, to, kind, Msg(kind, body))
            self.sim.count_msg(self.aid, kind)

    def submit(self, kind: TxKind, contract_id: str, body: Any, amount: int = 0):
        if self.online:
            tx = make_tx(kind, self.aid, contract_id, body, amount)
            self.sim.net.send(self.aid, CHAIN, "tx", tx)

    def log(self, event: str, action: str):
        self.sim.net.record("decision", self.aid, "-", f"{event} -> {action}")

    def receive(self, frm: ActorId, msg: Msg):
        if not self.online:
            return
        handler = getattr(self, "on_" + msg.kind, None)
        if handler is not None:
            handler(frm, msg.body)

    def on_block(self, block):
        pass

    def nudge(self) -> bool:
        return False


# ---------------------------------------------------------------------------
# wardens


@dataclass
class WardenStore:
    signed: dict[int, list[UpdateAnnouncement]] = field(default_factory=dict)
    register: RegisterTx | None = None
    published: set[str] = field(default_factory=set)

    @property
    def top(self) -> int:
        return max(self.signed, default=0)

    def highest(self) -> UpdateAnnouncement | None:
        if not self.signed:
            return None
        return self.signed[self.top][0]


class WardenActor(Actor):
    def __init__(self, sim, aid, behavior):
        super().__init__(sim, aid, behavior)
        self.contracts: set[str] = set()
        self.store: dict[str, WardenStore] = {}
        self.sig_count: dict[tuple[str, int], int] = {}

    def _store(self, channel: str) -> WardenStore:
        return self.store.setdefault(channel, WardenStore())

    def _withheld(self, to: ActorId) -> bool:
        return self.behavior.name == "withholder" and self.behavior.arg == to.label

    def _ack(self, targets: Iterable[ActorId], kind: str, ann: UpdateAnnouncement):
        pub = endorse(self.aid, ann)
        for t in targets:
            if not self._withheld(t):
                self.send(t, kind, pub)

    def _may_sign(self, st: WardenStore, ann: UpdateAnnouncement) -> bool:
        seq = ann.seq
        if st.published:
            return False
        already = st.signed.get(seq, [])
        if any(a.state.same_value(ann.state) for a in already):
            return False
        if self.behavior.name == "double_signer":
            return seq in (st.top, st.top + 1)
        return seq == st.top + 1 and not already

    def _sign(self, st: WardenStore, ann: UpdateAnnouncement):
        st.signed.setdefault(ann.seq, []).append(ann)
        key = (ann.channel_id, ann.seq)
        self.sig_count[key] = self.sig_count.get(key, 0) + 1

    # -- open --------------------------------------------------------------

    def on_register_announce(self, frm: ActorId, reg: RegisterTx):
        if self.aid not in reg.body.pk_wardens or not reg.is_valid():
            return
        st = self._store(reg.vc_id)
        if st.register is None:
            st.register = reg
            m1 = reg.initial_announcement
            if not st.signed:
                self._sign(st, m1)
        if st.register.digest != reg.digest:
            return
        self._ack([frm], "register_ack", st.signed[1][0])

    # -- updates -----------------------------------------------------------

    def on_vc_announce(self, frm: ActorId, ann: UpdateAnnouncement):
        st = self.store.get(ann.channel_id)
        if st is None or st.register is None:
            return
        ends = st.register.body.endpoints
        if set(ann.state.holders) != set(ends) or not ann.signers_valid(ends):
            return
        if ann.state.total != st.register.body.balance:
            return
        if not self._may_sign(st, ann):
            return
        self._sign(st, ann)
        self._ack(ends, "vc_ack", ann)

    def on_pc_announce(self, frm: ActorId, ann: UpdateAnnouncement):
        cid = ann.channel_id
        if cid not in self.contracts:
            return
        c = self.sim.meta[cid]
        if set(ann.state.holders) != {c.left, c.right} or not ann.signers_valid((c.left, c.right)):
            return
        st = self._store(cid)
        if not self._may_sign(st, ann):
            return
        self._sign(st, ann)
        self._ack((c.left, c.right), "pc_ack", ann)

    # -- closing -----------------------------------------------------------

    def _choose(self, st: WardenStore) -> UpdateAnnouncement | None:
        if self.behavior.name == "stale_publisher" and self.behavior.arg in st.signed:
            return st.signed[self.behavior.arg][0]
        return st.highest()

    def on_block(self, block):
        if self.behavior.name == "withholder" and self.behavior.arg == "chain":
            return
        for tx, (ok, _) in zip(block.txs, block.results):
            if not ok or tx.contract not in self.contracts:
                continue
            if tx.kind == TxKind.REGISTER_VC:
                reg: RegisterTx = tx.body
                st = self.store.get(reg.vc_id)
                key = "vc:" + tx.contract
                if st is None or key in st.published:
                    continue
                ann = self._choose(st)
                if ann is None:
                    continue
                st.published.add(key)
                self.log(f"RegisterVC on {tx.contract}", f"publish seq {ann.seq}")
                self.submit(TxKind.PUBLISH, tx.contract, endorse(self.aid, ann))
            elif tx.kind == TxKind.CLOSE_PC:
                st = self.store.get(tx.contract)
                key = "pc:" + tx.contract
                if st is None or key in st.published:
                    continue
                ann = st.highest()
                if ann is None:
                    continue
                st.published.add(key)
                self.submit(TxKind.PUBLISH, tx.contract, endorse(self.aid, ann))


# ---------------------------------------------------------------------------
# parties


@dataclass
class PcView:
    cid: str
    left: ActorId
    right: ActorId
    committee: tuple[ActorId, ...]
    ann: UpdateAnnouncement | None = None
    pending: UpdateAnnouncement | None = None
    pending_purpose: tuple | None = None
    proposal: tuple | None = None
    deferred: list = field(default_factory=list)
    acks: dict[bytes, set[ActorId]] = field(default_factory=dict)
    closing: str | None = None

    @property
    def state(self) -> PcState | None:
        return self.ann.state if self.ann else None


@dataclass
class VcView:
    body: RegisterBody
    pcs: tuple[str, ...]
    body_sigs: dict = field(default_factory=dict)
    s1_sigs: dict = field(default_factory=dict)
    responded: bool = False
    exchanged: bool = False
    tx: RegisterTx | None = None
    open_acks: dict[str, set[ActorId]] = field(default_factory=dict)
    opened: bool = False
    locked: set[str] = field(default_factory=set)
    aborted: str | None = None
    committed: UpdateAnnouncement | None = None
    pending: UpdateAnnouncement | None = None
    proposal: ChannelState | None = None
    acks: dict[bytes, dict[ActorId, SignedStatePublication]] = field(default_factory=dict)
    signed_log: list[UpdateAnnouncement] = field(default_factory=list)
    archive: dict[ActorId, list[SignedStatePublication]] = field(default_factory=dict)
    # closing
    requested: UpdateAnnouncement | None = None
    requests: dict[ActorId, UpdateAnnouncement] = field(default_factory=dict)
    agreed: ChannelState | None = None
    queried: bool = False
    closed_via: str | None = None
    queue: list[str] = field(default_factory=list)
    learned: ChannelState | None = None

    @property
    def vc_id(self) -> str:
        return self.body.vc_id


class PartyActor(Actor):
    def __init__(self, sim, aid, behavior):
        super().__init__(sim, aid, behavior)
        self.pcs: dict[str, PcView] = {}
        self.vc: VcView | None = None
        self.pre: dict[ActorId, tuple] = {}
        self.update_log: list[tuple[str, int]] = []
        self.close_initiated = False
        self.unilateral: dict[str, dict] = {}
        self.watch_proofs: set[str] = set()
        self.waited = 0

    # -- helpers -----------------------------------------------------------

    @property
    def is_end(self) -> bool:
        return self.vc is not None and self.aid in self.vc.body.endpoints

    def other_end(self) -> ActorId:
        a, b = self.vc.body.endpoints
        return b if self.aid == a else a

    def intermediaries(self) -> tuple[ActorId, ...]:
        return self.vc.body.parties[1:-1]

    def _colluding(self) -> bool:
        return self.behavior.name == "double_state_colluder"

    # -- payment channels --------------------------------------------------

    def add_pc(self, cid: str, left: ActorId, right: ActorId, committee):
        self.pcs[cid] = PcView(cid, left, right, tuple(committee))

    def pc_other(self, pc: PcView) -> ActorId:
        return pc.right if self.aid == pc.left else pc.left

    def pc_propose(self, cid: str, new: PcState, purpose: tuple):
        pc = self.pcs[cid]
        sig = sign(self.aid, state_bytes(new))
        pc.proposal = (new, purpose)
        self.send(self.pc_other(pc), "pc_propose", (new, sig, purpose))

    def _pc_ok(self, pc: PcView, new: PcState, purpose: tuple) -> bool | None:
        """True to accept, False to refuse, None to defer."""
        kind = purpose[0]
        cur = pc.state
        if kind == "open":
            c = self.sim.ledger.contracts.get(pc.cid)
            if c is None or c.pc_state is None:
                return None
            return new.same_value(c.pc_state)
        if cur is None or new.seq != cur.seq + 1 or new.total != cur.total:
            return False
        if kind == "lock":
            vc = self.vc
            if vc is None or vc.vc_id != purpose[1] or vc.aborted:
                return False
            if not vc.opened:
                return None
            return new.same_value(self._lock_state(pc, cur))
        if kind == "unwind":
            vc = self.vc
            agreed = self._agreed_state()
            if vc is None or agreed is None:
                return None if vc is not None else False
            return new.same_value(self._unwind_state(pc, cur, agreed))
        return False

    def on_pc_propose(self, frm: ActorId, body):
        new, sig, purpose = body
        pc = self.pcs.get(new.channel_id)
        if pc is None or frm != self.pc_other(pc) or not verify(sig, frm, state_bytes(new)):
            return
        if self.behavior.name == "collusive_intermediary" or self._colluding():
            ok = True
        else:
            ok = self._pc_ok(pc, new, purpose)
        if ok is None:
            pc.deferred.append((frm, body))
            return
        if not ok:
            self.log(f"pc_propose {purpose[0]} on {pc.cid}", "refuse")
            if purpose[0] == "lock" and self.vc is not None:
                self.vc.aborted = "inconsistent virtual lock"
            return
        mine = sign(self.aid, state_bytes(new))
        ann = UpdateAnnouncement(new, (sig, mine))
        self.send(frm, "pc_accept", (ann, purpose))
        self._pc_pending(pc, ann, purpose)

    def _retry_deferred(self):
        for pc in self.pcs.values():
            items, pc.deferred = pc.deferred, []
            for frm, body in items:
                self.on_pc_propose(frm, body)

    def on_pc_accept(self, frm: ActorId, body):
        ann, purpose = body
        pc = self.pcs.get(ann.channel_id)
        if pc is None or pc.proposal is None or not ann.state.same_value(pc.proposal[0]):
            return
        if not ann.signers_valid((pc.left, pc.right)):
            return
        pc.proposal = None
        self._pc_pending(pc, ann, purpose)

    def _pc_pending(self, pc: PcView, ann: UpdateAnnouncement, purpose: tuple):
        pc.pending, pc.pending_purpose = ann, purpose
        for w in pc.committee:
            self.send(w, "pc_announce", ann)
        self._pc_check(pc)

    def on_pc_ack(self, frm: ActorId, pub: SignedStatePublication):
        pc = self.pcs.get(pub.announcement.channel_id)
        if pc is None or not pub.is_valid() or pub.warden not in pc.committee:
            return
        pc.acks.setdefault(pub.announcement.digest, set()).add(pub.warden)
        self._pc_check(pc)

    def _pc_check(self, pc: PcView):
        if pc.pending is None:
            return
        got = pc.acks.get(pc.pending.digest, set())
        if len(got) < quorum_size(self.sim.cfg.f):
            return
        pc.ann, purpose = pc.pending, pc.pending_purpose
        pc.pending = pc.pending_purpose = None
        self.log(f"pc {pc.cid} seq {pc.ann.seq}", f"committed {purpose[0]}")
        if purpose[0] == "lock" and self.vc is not None:
            self.vc.locked.add(pc.cid)
        elif purpose[0] == "unwind" and self.vc is not None:
            self._unwound(pc)

    # -- open: payment channel ----------------------------------------------

    def open_pc(self, cid: str):
        """Left party proposes the funded state as PC seq 1."""
        pc = self.pcs[cid]
        c = self.sim.ledger.contracts.get(cid)
        if c is None or c.pc_state is None:
            return
        self.pc_propose(cid, c.pc_state, ("open",))

    # -- open: virtual channel ----------------------------------------------

    def start_open(self, body: RegisterBody):
        self.vc = VcView(body, self._my_pcs(body))
        if self.aid not in body.endpoints:
            return
        bsig = sign(self.aid, encode(body))
        s1sig = sign(self.aid, state_bytes(body.initial_state))
        self.vc.body_sigs[self.aid] = bsig
        self.vc.s1_sigs[self.aid] = s1sig
        for i in self.intermediaries():
            self.send(i, "pre_register", (body, bsig, s1sig))

    def _my_pcs(self, body: RegisterBody) -> tuple[str, ...]:
        return tuple(cid for cid, l, r in body.pcs if self.aid in (l, r))

    def expect_open(self, body: RegisterBody):
        self.vc = VcView(body, self._my_pcs(body))

    def on_pre_register(self, frm: ActorId, body):
        b, bsig, s1sig = body
        vc = self.vc
        if vc is None or vc.responded or vc.aborted:
            return
        if frm not in b.endpoints or not verify(bsig, frm, encode(b)):
            return
        self.pre[frm] = (b, bsig, s1sig)
        if set(self.pre) != set(b.endpoints):
            return
        try:
            merged = merge_pre_registers([self.pre[e][0] for e in b.endpoints])
            merge_pre_registers([merged, vc.body])
        except Exception:
            vc.aborted = "mismatched pre-register"
            self.log("pre_register", "abort")
            return
        if not self._funds_ok(merged):
            vc.aborted = "insufficient PC balance"
            self.log("pre_register", "abort: funds")
            return
        vc.responded = True
        mine = sign(self.aid, encode(merged))
        vc.body_sigs[self.aid] = mine
        for e in merged.endpoints:
            vc.body_sigs[e] = self.pre[e][1]
            vc.s1_sigs[e] = self.pre[e][2]
            self.send(e, "pre_register_resp", (merged, mine))

    def _funds_ok(self, body: RegisterBody) -> bool:
        for cid in self._my_pcs(body):
            pc = self.pcs.get(cid)
            if pc is None or pc.state is None:
                return False
            l_amt, r_amt = self._lock_amounts(body)
            need = l_amt if self.aid == pc.left else r_amt
            if pc.state.balance(self.aid) < need:
                return False
        return True

    def on_pre_register_resp(self, frm: ActorId, body):
        b, sig = body
        vc = self.vc
        if vc is None or frm not in self.intermediaries() or not verify(sig, frm, encode(vc.body)):
            return
        if encode(b) != encode(vc.body):
            return
        vc.body_sigs[frm] = sig
        if all(i in vc.body_sigs for i in self.intermediaries()) and not vc.exchanged:
            vc.exchanged = True
            self.send(self.other_end(), "register_exchange", (vc.body, vc.body_sigs[self.aid], vc.s1_sigs[self.aid]))
        self._try_build()

    def on_register_exchange(self, frm: ActorId, body):
        b, bsig, s1sig = body
        vc = self.vc
        if vc is None or frm != self.other_end() or encode(b) != encode(vc.body):
            return
        if not verify(bsig, frm, encode(b)) or not verify(s1sig, frm, state_bytes(b.initial_state)):
            return
        vc.body_sigs[frm] = bsig
        vc.s1_sigs[frm] = s1sig
        self._try_build()

    def _try_build(self):
        vc = self.vc
        if vc.tx is not None or not all(p in vc.body_sigs for p in vc.body.parties):
            return
        if not all(e in vc.s1_sigs for e in vc.body.endpoints):
            return
        vc.tx = make_register_tx(vc.body, vc.body_sigs, vc.s1_sigs)
        self._have_register()
        for i in self.intermediaries():
            self.send(i, "register_final", vc.tx)

    def on_register_final(self, frm: ActorId, tx: RegisterTx):
        vc = self.vc
        if vc is None or vc.tx is not None or not tx.is_valid() or encode(tx.body) != encode(vc.body):
            return
        vc.tx = tx
        self._have_register()

    def _have_register(self):
        vc = self.vc
        vc.committed = vc.tx.initial_announcement
        vc.signed_log.append(vc.committed)
        for w in sorted(vc.body.pk_wardens):
            self.send(w, "register_announce", vc.tx)

    def on_register_ack(self, frm: ActorId, pub: SignedStatePublication):
        vc = self.vc
        if vc is None or vc.tx is None or not pub.is_valid():
            return
        if pub.announcement.digest != vc.tx.initial_announcement.digest:
            return
        self._archive(pub)
        for cid, com in vc.body.committees:
            if pub.warden in com:
                vc.open_acks.setdefault(cid, set()).add(pub.warden)
        q = quorum_size(self.sim.cfg.f)
        if not vc.opened and all(len(vc.open_acks.get(cid, ())) >= q for cid, _ in vc.body.committees):
            vc.opened = True
            self.log("register acks", "vc open confirmed")
            self._start_locks()
            self._retry_deferred()

    def _lock_amounts(self, body: RegisterBody) -> tuple[int, int]:
        s1 = body.initial_state
        a, b = body.endpoints
        return s1.balance(a), s1.balance(b)

    def _lock_state(self, pc: PcView, cur: PcState, delta: int = 0) -> PcState:
        l_amt, r_amt = self._lock_amounts(self.vc.body)
        r_amt = max(0, r_amt + delta)
        bal = dict(cur.balances)
        bal[pc.left] -= l_amt
        bal[pc.right] -= r_amt
        if min(bal.values()) < 0:
            raise ValueError("insufficient balance for lock")
        return PcState(pc.cid, cur.seq + 1, tuple(bal.items()), cur.locks + ((self.vc.vc_id, l_amt, r_amt),))

    def _start_locks(self):
        for cid in self.vc.pcs:
            pc = self.pcs[cid]
            if pc.left != self.aid or pc.state is None:
                continue
            delta = self.behavior.arg if self.behavior.name == "inconsistent_funder" else 0
            try:
                new = self._lock_state(pc, pc.state, delta)
            except ValueError:
                self.vc.aborted = "insufficient PC balance"
                continue
            self.pc_propose(cid, new, ("lock", self.vc.vc_id))

    @property
    def usable(self) -> bool:
        vc = self.vc
        return vc is not None and vc.opened and not vc.aborted and set(vc.pcs) <= vc.locked

    # -- updates -----------------------------------------------------------

    def propose_update(self, balances: dict[ActorId, int]) -> bool:
        vc = self.vc
        if not self.online or not self.usable or vc.pending is not None or vc.closed_via:
            return False
        new = ChannelState.of(vc.vc_id, vc.committed.seq + 1, balances)
        if new.total != vc.body.balance:
            return False
        vc.proposal = new
        self.update_log.append(("proposed", new.seq))
        self.send(self.other_end(), "vc_propose", (new, sign(self.aid, state_bytes(new))))
        return True

    def on_vc_propose(self, frm: ActorId, body):
        new, sig = body
        vc = self.vc
        if vc is None or frm != self.other_end() or not self.usable or vc.closed_via or vc.requested:
            return
        if vc.pending is not None or new.seq != vc.committed.seq + 1 or new.total != vc.body.balance:
            return
        if set(new.holders) != set(vc.body.endpoints) or not verify(sig, frm, state_bytes(new)):
            return
        ann = UpdateAnnouncement(new, (sig, sign(self.aid, state_bytes(new))))
        self.send(frm, "vc_accept", ann)
        self._vc_pending(ann)

    def on_vc_accept(self, frm: ActorId, ann: UpdateAnnouncement):
        vc = self.vc
        if vc is None or vc.proposal is None or not ann.state.same_value(vc.proposal):
            return
        if not ann.signers_valid(vc.body.endpoints):
            return
        vc.proposal = None
        self._vc_pending(ann)

    def _vc_pending(self, ann: UpdateAnnouncement):
        vc = self.vc
        vc.pending = ann
        vc.signed_log.append(ann)
        for w in sorted(vc.body.pk_wardens):
            self.send(w, "vc_announce", ann)
        self._vc_check()

    def on_vc_ack(self, frm: ActorId, pub: SignedStatePublication):
        vc = self.vc
        if vc is None or not pub.is_valid() or pub.warden not in vc.body.pk_wardens:
            return
        self._archive(pub)
        vc.acks.setdefault(pub.announcement.digest, {})[pub.warden] = pub
        self._vc_check()

    def _vc_check(self):
        vc = self.vc
        if vc.pending is None:
            return
        got = set(vc.acks.get(vc.pending.digest, {}))
        q = quorum_size(self.sim.cfg.f)
        if all(len(got & set(com)) >= q for _, com in vc.body.committees):
            vc.committed, vc.pending = vc.pending, None
            self.update_log.append(("committed", vc.committed.seq))
            self.log(f"vc seq {vc.committed.seq}", "committed")

    def _archive(self, pub: SignedStatePublication):
        lst = self.vc.archive.setdefault(pub.warden, [])
        if all(p.announcement.digest != pub.announcement.digest for p in lst):
            lst.append(pub)

    # -- colluding split updates -------------------------------------------

    def split_broadcast(self, partner: "PartyActor", state: ChannelState, committees: Iterable[str]):
        """Colluders co-sign `state` and hand it only to the given committees."""
        ann = UpdateAnnouncement(state, (sign(self.aid, state_bytes(state)), sign(partner.aid, state_bytes(state))))
        targets = set()
        for cid, com in self.vc.body.committees:
            if cid in committees:
                targets |= set(com)
        for w in sorted(targets):
            self.send(w, "vc_announce", ann)
        for p in (self, partner):
            p.vc.signed_log.append(ann)

    # -- closing: requests -------------------------------------------------

    def _agreed_state(self) -> ChannelState | None:
        vc = self.vc
        if vc.agreed is not None:
            return vc.agreed
        return None

    def _unwind_state(self, pc: PcView, cur: PcState, ws: ChannelState) -> PcState:
        vc = self.vc
        lock = cur.lock(vc.vc_id)
        if lock is None:
            raise ValueError("no lock")
        a, b = vc.body.endpoints
        bal = dict(cur.balances)
        bal[pc.left] += ws.balance(a)
        bal[pc.right] += ws.balance(b)
        locks = tuple(l for l in cur.locks if l[0] != vc.vc_id)
        return PcState(pc.cid, cur.seq + 1, tuple(bal.items()), locks)

    def close(self) -> bool:
        """Close intent from the operator."""
        vc = self.vc
        if not self.online or vc is None or vc.tx is None or vc.closed_via:
            return False
        self.close_initiated = True
        self.waited = 0
        name = self.behavior.name
        if name == "double_state_colluder":
            for cid in vc.pcs:
                self.start_unilateral(cid)
            return True
        if self.is_end:
            ann = vc.committed
            if name == "old_state_closer":
                old = [a for a in vc.signed_log if a.seq == self.behavior.arg and a.is_valid()]
                ann = old[0] if old else ann
            vc.requested = ann
            self.log("close intent", f"request seq {ann.seq}")
            for i in self.intermediaries():
                self.send(i, "close_request", ann)
            return True
        vc.queried = True
        for e in vc.body.endpoints:
            self.send(e, "close_query", vc.vc_id)
        return True

    def on_close_query(self, frm: ActorId, vc_id: str):
        vc = self.vc
        if vc is None or vc.vc_id != vc_id or vc.requested or vc.closed_via or not self.is_end:
            return
        if self.behavior.name in ("double_state_colluder",):
            return
        if vc.tx is None:
            return
        self.close()

    def on_close_request(self, frm: ActorId, ann: UpdateAnnouncement):
        vc = self.vc
        if vc is None or vc.tx is None or frm not in vc.body.endpoints or vc.closed_via:
            return
        if not ann.signers_valid(vc.body.endpoints) or ann.channel_id != vc.vc_id:
            return
        vc.requests[frm] = ann
        if self.behavior.name == "collusive_intermediary":
            if frm.label == self.behavior.arg:
                self._agree(ann.state, [frm])
            return
        if vc.learned is not None:
            self._after_learning()
            return
        if vc.queue:
            return
        ends = vc.body.endpoints
        if all(e in vc.requests for e in ends):
            states = [vc.requests[e].state for e in ends]
            if all(s.same_value(states[0]) for s in states):
                self.log("close requests match", f"agree seq {states[0].seq}")
                self._agree(states[0], list(ends))
            else:
                self.log("close requests differ", "unilateral on every side")
                self._queue_unilateral(list(vc.pcs))

    def _unwind_proposer(self, pc: PcView) -> ActorId:
        """The intermediary side proposes; between two intermediaries the left."""
        ends = self.vc.body.endpoints
        if pc.left in ends:
            return pc.right
        return pc.left

    def _agree(self, state: ChannelState, ends: list[ActorId]):
        vc = self.vc
        vc.agreed = state
        for e in ends:
            self.send(e, "close_agree", state)
        for cid in vc.pcs:
            pc = self.pcs[cid]
            other = self.pc_other(pc)
            if other in vc.body.endpoints and other not in ends:
                continue
            if self._unwind_proposer(pc) != self.aid or pc.state is None or pc.state.lock(vc.vc_id) is None:
                continue
            if pc.proposal is None and pc.pending is None:
                self.pc_propose(cid, self._unwind_state(pc, pc.state, state), ("unwind", vc.vc_id))
        self._retry_deferred()

    def on_close_agree(self, frm: ActorId, state: ChannelState):
        vc = self.vc
        if vc is None or vc.requested is None or frm not in self.intermediaries():
            return
        if not state.same_value(vc.requested.state):
            return
        vc.agreed = state
        self._retry_deferred()

    def _unwound(self, pc: PcView):
        self.log(f"unwind on {pc.cid} committed", "lock released")
        self._vc_done_check()

    # -- closing: unilateral -----------------------------------------------

    def _queue_unilateral(self, cids: list[str]):
        vc = self.vc
        for cid in cids:
            if cid not in vc.queue and cid not in self.unilateral:
                vc.queue.append(cid)
        self._next_unilateral()

    def _next_unilateral(self):
        vc = self.vc
        if any(not u["vc_done"] for u in self.unilateral.values()):
            return
        while vc.queue:
            cid = vc.queue.pop(0)
            if cid in self.unilateral:
                continue
            c = self.sim.ledger.contracts.get(cid)
            if c is not None and c.settled is not None:
                continue
            self.start_unilateral(cid)
            return

    def start_unilateral(self, cid: str):
        vc = self.vc
        if vc.tx is None or cid in self.unilateral:
            if vc.tx is None:
                self.log("unilateral close", "impossible: no register transaction")
            return
        self.unilateral[cid] = {"proofs": False, "vc_done": False, "pc_sent": False}
        self.log("unilateral close", f"RegisterVC on {cid}")
        self.submit(TxKind.REGISTER_VC, cid, vc.tx, amount=self.sim.cfg.fee)

    def _proofs_for(self, cid: str) -> list[ProofOfFraud]:
        if self.behavior.name in ("old_state_closer", "double_state_colluder", "collusive_intermediary"):
            return []
        c = self.sim.ledger.contracts[cid]
        out = []
        for pub in c.publications:
            for other in self.vc.archive.get(pub.warden, []):
                if other.announcement.channel_id != pub.announcement.channel_id:
                    continue
                higher = other.seq > pub.seq
                conflict = other.seq == pub.seq and not other.state.same_value(pub.state)
                if higher or conflict:
                    out.append(ProofOfFraud(pub.warden, pub, other))
                    break
        return out

    def on_block(self, block):
        if not self.online or self.vc is None:
            return
        if self.vc.learned is None and self.vc.tx is not None:
            # a neighbour's unilateral close also reveals the settled state
            for cid in self.vc.pcs:
                c = self.sim.ledger.contracts.get(cid)
                if c is not None and c.settled is not None and c.settled.ws is not None:
                    self.vc.learned = c.settled.ws
                    if not self.is_end:
                        self._after_learning()
                    break
        for cid, u in list(self.unilateral.items()):
            c = self.sim.ledger.contracts.get(cid)
            if c is None:
                continue
            if not u["proofs"] and len(c.publications) >= quorum_size(self.sim.cfg.f) and c.phase in (
                Phase.VC_COLLECTING,
                Phase.VC_CROSSCHECKING,
            ):
                u["proofs"] = True
                proofs = self._proofs_for(cid)
                self.log(f"{len(c.publications)} publications on {cid}", f"submit {len(proofs)} proofs")
                self.submit(TxKind.PROOFS, cid, tuple(proofs))
            if c.settled is not None and not u["vc_done"]:
                u["vc_done"] = True
                self.vc.learned = self.vc.learned or c.settled.ws
                if c.phase != Phase.PC_CLOSED and not c.pc_close_requested and not u["pc_sent"]:
                    u["pc_sent"] = True
                    self.submit(TxKind.CLOSE_PC, cid, cid)
                self._vc_done_check()
                if not self.is_end:
                    self._after_learning()
                    self._next_unilateral()

    def _vc_done_check(self):
        vc = self.vc
        for cid in vc.pcs:
            c = self.sim.ledger.contracts.get(cid)
            pc = self.pcs[cid]
            settled = c is not None and c.settled is not None
            unlocked = pc.state is not None and pc.state.lock(vc.vc_id) is None
            if not (settled or unlocked):
                return
        if not vc.closed_via:
            vc.closed_via = "unilateral" if self.unilateral else "optimistic"

    def _after_learning(self):
        """Intermediary: compare pending requests with the settled state."""
        vc = self.vc
        ws = vc.learned
        if ws is None or self.is_end or self.behavior.name == "collusive_intermediary":
            return
        for cid in vc.pcs:
            if cid in self.unilateral or cid in vc.queue:
                continue
            pc = self.pcs[cid]
            if pc.state is None or pc.state.lock(vc.vc_id) is None:
                continue
            end = self._end_behind(cid)
            req = vc.requests.get(end) if end is not None else None
            if req is not None and req.state.same_value(ws):
                self.log(f"request from {end.label} matches settled state", "agree collaboratively")
                vc.agreed = ws
                self.send(end, "close_agree", ws)
                if self.pc_other(pc) == end and pc.proposal is None and pc.pending is None:
                    self.pc_propose(cid, self._unwind_state(pc, pc.state, ws), ("unwind", vc.vc_id))
            elif req is not None:
                self.log(f"request from {end.label} differs from settled state", f"unilateral on {cid}")
                self._queue_unilateral([cid])

    def _end_behind(self, cid: str) -> ActorId | None:
        """End party reached through this PC."""
        vc = self.vc
        parties = vc.body.parties
        me = parties.index(self.aid)
        pc = self.pcs[cid]
        other = self.pc_other(pc)
        return parties[0] if parties.index(other) < me else parties[-1]

    # -- absence of response -----------------------------------------------

    def nudge(self) -> bool:
        if not self.online or self.vc is None or self.vc.tx is None:
            return False
        vc = self.vc
        if self.behavior.name in ("double_state_colluder", "collusive_intermediary"):
            return False
        acted = False
        # proofs as the closer's counterparty when the closer went quiet
        for cid in vc.pcs:
            c = self.sim.ledger.contracts.get(cid)
            if c is None or cid in self.unilateral or cid in self.watch_proofs:
                continue
            if c.vc_registered and not c.proofs_in and len(c.publications) >= quorum_size(self.sim.cfg.f):
                self.watch_proofs.add(cid)
                self.submit(TxKind.PROOFS, cid, tuple(self._proofs_for(cid)))
                acted = True
        if vc.closed_via:
            return acted
        self.waited += 1
        if self.is_end:
            # end parties give the intermediary one extra round to resolve a
            # silent or mismatched counterparty on its own
            if self.waited < 2:
                return True
            if vc.requested is not None and vc.agreed is None and not self.unilateral:
                self.log("no agreement from intermediary", "unilateral close")
                for cid in vc.pcs:
                    self.start_unilateral(cid)
                return True
            if vc.agreed is not None and not self.unilateral:
                pc = self.pcs[vc.pcs[0]]
                if pc.state is not None and pc.state.lock(vc.vc_id) is not None and pc.pending is None:
                    self.log("unwind never arrived", "unilateral close")
                    self.start_unilateral(vc.pcs[0])
                    return True
            return acted
        # intermediary
        if vc.queue or any(not u["vc_done"] for u in self.unilateral.values()):
            return acted
        ends = vc.body.endpoints
        silent = [e for e in ends if e not in vc.requests]
        if (vc.requests or vc.queried) and silent and not self.unilateral:
            sides = [cid for cid in vc.pcs if self._end_behind(cid) in silent]
            others = [cid for cid in vc.pcs if cid not in sides]
            self.log(f"no request from {[e.label for e in silent]}", "unilateral on silent side first")
            self._queue_unilateral(sides if vc.requests else sides + others)
            return True
        stuck = [
            cid
            for cid in vc.pcs
            if cid not in self.unilateral
            and self.pcs[cid].state is not None
            and self.pcs[cid].state.lock(vc.vc_id) is not None
            and (vc.agreed is not None or vc.learned is not None)
        ]
        if stuck:
            self.log("unwind stalled", f"unilateral on {stuck}")
            self._queue_unilateral(stuck)
            return True
        return acted

    # -- settle-out --------------------------------------------------------

    def entitled_vc_delta(self) -> int:
        """Entitlement from the party's own signing log: balance in the
        highest-seq state bearing both end-party signatures it signed."""
        vc = self.vc
        if vc is None or vc.tx is None or self.aid not in vc.body.endpoints:
            return 0
        if not (vc.locked or vc.opened):
            return 0
        signed = [a for a in vc.signed_log if a.signers_valid(vc.body.endpoints)]
        if not signed:
            return 0
        best = max(signed, key=lambda a: a.seq)
        return best.state.balance(self.aid) - vc.body.initial_state.balance(self.aid)
