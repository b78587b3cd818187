"""Scenario driver, execution reports and property suites.

A scenario runs the whole lifecycle: deploy and fund the payment channels,
open the virtual channel, apply updates, close, and finally close every
payment channel an honest party still holds. The report compares each honest
participant's final coins with what it is entitled to.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Sequence

from .actors import HONEST, Behavior, PartyActor, WardenActor, is_byzantine
from .chainsim import Ledger, PcSetup, Phase, Tx, TxKind, make_tx
from .core import (
    CHAIN,
    ActorId,
    ChannelState,
    ContractInfo,
    PcState,
    contract,
    party,
    quorum_size,
    register_body,
    required_collateral,
    warden,
)
from .netsim import DEFAULT_HORIZON, AdversaryPolicy, Network

PHASES = ("setup", "open", "update", "close", "settle")


def party_labels(hops: int) -> list[str]:
    if hops == 2:
        return ["A", "I", "B"]
    if hops == 3:
        return ["A", "B", "C", "D"]
    return [f"P{i}" for i in range(hops + 1)]


@dataclass
class ScenarioConfig:
    """Everything a run depends on. `hops` counts payment channels, so the
    classic Alice-Ingrid-Bob channel has hops=2."""

    hops: int = 2
    f: int = 1
    v: int = 10
    initial: tuple[int, int] | None = None
    free_balance: int = 5
    updates: list[dict] = field(default_factory=list)
    closers: list[str] = field(default_factory=lambda: ["A"])
    behaviors: dict[str, Behavior] = field(default_factory=dict)
    seed: int = 0
    horizon: int = DEFAULT_HORIZON
    censorship: dict[tuple[str, str], int] = field(default_factory=dict)
    drop_rules: set[tuple[str, str, str]] = field(default_factory=set)
    same_block_crosscheck: bool = False
    leader: int = 0
    crosscheck: bool = True
    fee: int | None = None
    overlap: int = 0
    max_steps: int = 200_000
    settle_out: bool = True
    name: str = "custom"

    def __post_init__(self):
        if self.hops < 2:
            raise ValueError("hops must be >= 2")
        if self.f < 1:
            raise ValueError("f must be >= 1")
        if self.overlap > 3 * self.f + 1:
            raise ValueError("overlap larger than a committee")
        if self.initial is None:
            self.initial = (self.v // 2, self.v - self.v // 2)
        if sum(self.initial) != self.v or min(self.initial) < 0:
            raise ValueError("initial split must be non-negative and sum to v")
        if self.fee is None:
            self.fee = quorum_size(self.f)
        labels = set(party_labels(self.hops))
        for label, b in self.behaviors.items():
            if not (label in labels or label.startswith("W")):
                raise ValueError(f"unknown actor {label!r}")
        for c in self.closers:
            if c not in labels:
                raise ValueError(f"unknown closer {c!r}")

    @property
    def labels(self) -> list[str]:
        return party_labels(self.hops)

    @property
    def contract_ids(self) -> list[str]:
        ls = self.labels
        return [f"SC:{ls[i]}-{ls[i + 1]}" for i in range(self.hops)]

    def committee_members(self) -> list[list[int]]:
        n = 3 * self.f + 1
        out, start = [], 0
        for _ in range(self.hops):
            out.append(list(range(start, start + n)))
            start += n - self.overlap
        return out


@dataclass
class ExecutionReport:
    name: str
    seed: int
    final: dict[str, int]
    entitled: dict[str, int]
    loss: dict[str, int]
    honest: list[str]
    closures: dict[str, dict]
    txs: list[dict]
    messages: dict[str, int]
    live: bool
    liveness: dict[str, Any]
    trace_digest: str
    violations: list[str]
    phase_logs: dict[str, list[str]]
    slashed_honest: list[str]
    notes: list[str] = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "name": self.name,
            "seed": self.seed,
            "balance_security": check_balance_security(self),
            "liveness": check_liveness(self),
            "same_state_closure": same_state_closure(self),
            "losses": {k: v for k, v in self.loss.items() if v},
            "closures": self.closures,
            "violations": self.violations,
            "trace_digest": self.trace_digest,
        }


class Simulation:
    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        f = cfg.f
        labels = cfg.labels
        self.parties = [party(i, l) for i, l in enumerate(labels)]
        by_label = {p.label: p for p in self.parties}
        members = cfg.committee_members()
        self.wardens = [warden(i) for i in sorted({w for com in members for w in com})]
        wmap = {w.index: w for w in self.wardens}
        self.committees = {cid: tuple(wmap[i] for i in com) for cid, com in zip(cfg.contract_ids, members)}

        a_init, b_init = cfg.initial
        self.deposits: dict[str, tuple[int, int]] = {}
        self.meta: dict[str, PcSetup] = {}
        self.contract_aids: dict[str, ActorId] = {}
        genesis: dict[ActorId, int] = {}
        for i, cid in enumerate(cfg.contract_ids):
            left, right = self.parties[i], self.parties[i + 1]
            dl, dr = a_init + cfg.free_balance, b_init + cfg.free_balance
            self.deposits[cid] = (dl, dr)
            coll = required_collateral(dl + dr, f)
            self.meta[cid] = PcSetup(cid, left, right, self.committees[cid], f, coll)
            self.contract_aids[cid] = contract(i, cid)
            genesis[left] = genesis.get(left, 0) + dl
            genesis[right] = genesis.get(right, 0) + dr
            for w in self.committees[cid]:
                genesis[w] = genesis.get(w, 0) + coll
        for a in list(genesis):
            genesis[a] += 3 * cfg.fee if a.kind == 0 else 0
        self.genesis = dict(genesis)

        self.behaviors: dict[ActorId, Behavior] = {}
        for a in self.parties + self.wardens:
            self.behaviors[a] = cfg.behaviors.get(a.label, HONEST)
        byz = [a for a, b in self.behaviors.items() if is_byzantine(b)]
        self.policy = AdversaryPolicy(cfg.seed, cfg.horizon, dict(cfg.censorship), set(cfg.drop_rules))
        self.net = Network(self.policy, byz)
        self.ledger = Ledger(genesis, crosscheck=cfg.crosscheck)
        self.ledger.contract_ids = dict(self.contract_aids)

        self.actors: dict[ActorId, Any] = {}
        for p in self.parties:
            self.actors[p] = PartyActor(self, p, self.behaviors[p])
        for w in self.wardens:
            self.actors[w] = WardenActor(self, w, self.behaviors[w])
        for cid, setup in self.meta.items():
            self.actors[setup.left].add_pc(cid, setup.left, setup.right, setup.committee)
            self.actors[setup.right].add_pc(cid, setup.left, setup.right, setup.committee)
            for w in setup.committee:
                self.actors[w].contracts.add(cid)
        self.by_label = {a.label: a for a in self.actors}
        self.msg_counts: dict[str, int] = {}
        self.held: dict[str, list[Tx]] = {}
        self.held_origins: dict[str, set[str]] = {}
        self.held_since: dict[str, int] = {}
        self.live = True
        self.phase = "setup"
        self.update_ops: list[dict] = []
        self.vc_id = "VC:" + "-".join(p.label for p in self.parties)

    # -- plumbing ----------------------------------------------------------

    def count_msg(self, frm: ActorId, kind: str):
        key = f"{self.phase}:{kind}"
        self.msg_counts[key] = self.msg_counts.get(key, 0) + 1

    def party(self, label: str) -> PartyActor:
        return self.actors[self.by_label[label]]

    def deliver(self, step: int, batch):
        txs = [e.payload for e in batch if e.to == CHAIN]
        if txs:
            block, emitted = self.ledger.apply_block(step, txs)
            for tx, (ok, why) in zip(block.txs, block.results):
                self.net.record("block", tx.sender, tx.contract, f"h{block.height}:{tx.kind.value}:{'ok' if ok else 'rejected'}:{why}")
            self._route(emitted)
            for aid in sorted(self.actors):
                self.actors[aid].on_block(block)
        for e in batch:
            if e.to != CHAIN:
                self.actors[e.to].receive(e.frm, e.payload)
        self._flush_stale_holds()

    def _route(self, emitted: Sequence[Tx]):
        for tx in emitted:
            if not self.cfg.same_block_crosscheck:
                self.net.send(tx.sender, CHAIN, "tx", tx)
                continue
            vc = tx.body.vc_id
            self.held.setdefault(vc, []).append(tx)
            self.held_origins.setdefault(vc, set()).add(tx.body.origin)
            self.held_since.setdefault(vc, self.net.now)
            if self.held_origins[vc] >= set(self.cfg.contract_ids):
                self._flush(vc)

    def _flush(self, vc: str):
        txs = self.held.pop(vc, [])
        self.held_since.pop(vc, None)
        at = self.net.now + 1
        for tx in txs:
            self.net.send_at(tx.sender, CHAIN, "tx", tx, at)

    def _flush_stale_holds(self):
        for vc, since in list(self.held_since.items()):
            if self.net.now - since >= self.policy.horizon:
                self._flush(vc)

    def quiesce(self):
        while True:
            ok = self.net.run_until_quiescent(self.deliver, self.cfg.max_steps)
            if not ok:
                self.live = False
                return
            if not self.held:
                return
            for vc in list(self.held):
                self._flush(vc)

    def nudge_rounds(self, limit: int = 12):
        for _ in range(limit):
            self.quiesce()
            acted = False
            for aid in sorted(self.actors):
                if self.actors[aid].nudge():
                    acted = True
            if not acted:
                break
        self.quiesce()

    def enter(self, phase: str):
        self.phase = phase
        self.net.record("phase", "driver", "-", phase)
        for a in self.actors.values():
            b = a.behavior
            if b.name in ("offline", "crash") and b.arg == phase and a.offline_from is None:
                a.offline_from = self.net.now

    # -- lifecycle ---------------------------------------------------------

    def setup(self):
        self.enter("setup")
        for cid, setup in self.meta.items():
            dl, dr = self.deposits[cid]
            self.actors[setup.left].submit(TxKind.DEPLOY, cid, setup, amount=dl)
        self.quiesce()
        for cid, setup in self.meta.items():
            dl, dr = self.deposits[cid]
            self.actors[setup.right].submit(TxKind.FUND_PARTY, cid, cid, amount=dr)
            for w in setup.committee:
                self.actors[w].submit(TxKind.FUND_WARDEN, cid, cid, amount=setup.collateral)
        self.quiesce()
        for cid, setup in self.meta.items():
            self.actors[setup.left].open_pc(cid)
        self.quiesce()

    def open_vc(self):
        self.enter("open")
        cfg = self.cfg
        a, b = self.parties[0], self.parties[-1]
        s1 = ChannelState.of(self.vc_id, 1, {a: cfg.initial[0], b: cfg.initial[1]})
        leader = cfg.contract_ids[cfg.leader % cfg.hops]
        info = ContractInfo(tuple(cfg.contract_ids), leader)
        body = register_body(self.vc_id, self.parties, self.committees, s1, cfg.v, info)
        for p in self.parties[1:-1]:
            self.actors[p].expect_open(body)
        for p in (a, b):
            self.actors[p].start_open(body)
        self.quiesce()

    def run_update(self, spec: dict):
        a_label, b_label = self.cfg.labels[0], self.cfg.labels[-1]
        if "collude" in spec:
            self._split_update(spec)
            return
        payer = self.party(spec.get("from", a_label))
        if not payer.is_end:
            return
        other = self.party(b_label if payer.aid.label == a_label else a_label)
        vc = payer.vc
        if vc is None or vc.committed is None:
            return
        amount = spec.get("amount", 1)
        cur = vc.committed.state
        mine = cur.balance(payer.aid)
        amount = max(-cur.balance(other.aid), min(amount, mine))
        balances = {payer.aid: mine - amount, other.aid: cur.balance(other.aid) + amount}
        proposed = payer.propose_update(balances)
        self.update_ops.append({"by": payer.aid.label, "seq": cur.seq + 1, "proposed": proposed})
        self.quiesce()
        if spec.get("nudge"):
            self.nudge_rounds()

    def _split_update(self, spec: dict):
        """Colluding end parties send different states to different committees."""
        a = self.party(self.cfg.labels[0])
        b = self.party(self.cfg.labels[-1])
        if a.vc is None or a.vc.committed is None:
            return
        base = a.vc.committed.seq
        v = self.cfg.v
        cids = self.cfg.contract_ids
        mode = spec["collude"]
        for i, cid in enumerate(cids):
            share = (v * (len(cids) - 1 - i)) // max(1, len(cids) - 1)
            st = ChannelState.of(self.vc_id, base + 1, {a.aid: share, b.aid: v - share})
            a.split_broadcast(b, st, [cid])
            if mode == "diff_seq" and i == len(cids) - 1:
                st2 = ChannelState.of(self.vc_id, base + 2, {a.aid: share, b.aid: v - share - 0})
                if st2.same_value(st):
                    st2 = ChannelState.of(self.vc_id, base + 2, {a.aid: max(0, share - 1), b.aid: v - max(0, share - 1)})
                a.split_broadcast(b, st2, [cid])
        self.quiesce()

    def close(self):
        self.enter("close")
        for label in self.cfg.closers:
            self.party(label).close()
        self.quiesce()
        self.nudge_rounds()

    def settle_out(self):
        """Honest parties close every payment channel they still hold."""
        self.enter("settle")
        for cid, setup in self.meta.items():
            c = self.ledger.contracts.get(cid)
            if c is None or c.phase == Phase.PC_CLOSED or c.pc_close_requested:
                continue
            l, r = self.actors[setup.left], self.actors[setup.right]
            both = all(p.honest and p.online for p in (l, r))
            pcv = l.pcs[cid]
            ann = pcv.ann
            lock_free = ann is not None and not ann.state.locks
            if both and lock_free and r.pcs[cid].ann == ann and not c.vc_registered:
                for p in (l, r):
                    p.submit(TxKind.COLLAB_CLOSE_PC, cid, ann)
                continue
            for p in (l, r):
                if not (p.honest and p.online):
                    continue
                st = p.pcs[cid].state
                safe = c.settled is not None or (st is not None and not st.locks and not c.vc_registered)
                if safe:
                    p.submit(TxKind.CLOSE_PC, cid, cid)
                    break
        self.quiesce()

    def run(self) -> "ExecutionReport":
        self.setup()
        self.open_vc()
        self.enter("update")
        for spec in self.cfg.updates:
            self.run_update(spec)
        if self.cfg.closers:
            self.close()
        if self.cfg.settle_out:
            self.settle_out()
        return self.report()

    # -- report ------------------------------------------------------------

    def holdings(self) -> dict[ActorId, int]:
        out = dict(self.ledger.external)
        for cid, c in self.ledger.contracts.items():
            for w, amt in c.collateral.items():
                out[w] = out.get(w, 0) + amt
            if c.phase == Phase.PC_CLOSED:
                continue
            # open channel: count each party's share of the latest committed state
            setup = self.meta[cid]
            anns = [self.actors[p].pcs[cid].ann for p in (setup.left, setup.right)]
            anns = [a for a in anns if a is not None]
            if not anns:
                for p, amt in c.deposits.items():
                    out[p] = out.get(p, 0) + amt
                continue
            st = max(anns, key=lambda a: a.seq).state
            for p, amt in st.balances:
                out[p] = out.get(p, 0) + amt
            for vc_id, la, ra in st.locks:
                if c.settled is not None and vc_id == c.vc_id:
                    for p, amt in c.settled.vc.items():
                        out[p] = out.get(p, 0) + amt
                else:
                    out[setup.left] = out.get(setup.left, 0) + la
                    out[setup.right] = out.get(setup.right, 0) + ra
            out_fee = c.fee_escrow
            if out_fee and c.closer is not None:
                out[c.closer] = out.get(c.closer, 0) + out_fee
        return out

    def report(self) -> ExecutionReport:
        hold = self.holdings()
        fees_paid: dict[ActorId, int] = {}
        txs = []
        for b in self.ledger.blocks:
            for tx, (ok, why) in zip(b.txs, b.results):
                pc_pub = tx.kind == TxKind.PUBLISH and isinstance(tx.body.state, PcState)
                txs.append(
                    {
                        "height": b.height,
                        "contract": tx.contract,
                        "kind": tx.kind.value,
                        "sender": tx.sender.label,
                        "role": "warden" if tx.sender.kind == 1 else ("party" if tx.sender.kind == 0 else "contract"),
                        "pc": pc_pub,
                        "ok": ok,
                    }
                )
                if ok and tx.kind == TxKind.REGISTER_VC:
                    fees_paid[tx.sender] = fees_paid.get(tx.sender, 0) + tx.amount
        honest = [a for a in self.actors if not is_byzantine(self.behaviors[a])]
        entitled, final, loss = {}, {}, {}
        for a in sorted(self.actors):
            base = self.genesis.get(a, 0)
            if a.kind == 0:
                base += self.actors[a].entitled_vc_delta() - fees_paid.get(a, 0)
            entitled[a.label] = base
            final[a.label] = hold.get(a, 0)
            loss[a.label] = base - final[a.label] if a in honest else 0
        closures = {}
        for cid, c in self.ledger.contracts.items():
            s = c.settled
            closures[cid] = {
                "phase": c.phase.name,
                "registered": c.vc_registered,
                "settled": s is not None,
                "ws_seq": s.ws.seq if s is not None and s.ws is not None else None,
                "ws": {k.label: v for k, v in s.ws.balances} if s is not None and s.ws is not None else None,
                "ws_origin": c.ws_origin if s is not None else None,
                "x": s.x if s is not None else 0,
                "penalty": c.penalty,
                "shortfall": c.shortfall,
                "ws_history": list(c.ws_history),
            }
        liveness = self._liveness()
        slashed_honest = sorted(
            w.label for c in self.ledger.contracts.values() for w in c.slashed if not is_byzantine(self.behaviors[w])
        )
        return ExecutionReport(
            name=self.cfg.name,
            seed=self.cfg.seed,
            final=final,
            entitled=entitled,
            loss=loss,
            honest=sorted(a.label for a in honest),
            closures=closures,
            txs=txs,
            messages=dict(sorted(self.msg_counts.items())),
            live=self.live and liveness["ok"],
            liveness=liveness,
            trace_digest=self.net.trace_digest(),
            violations=list(self.ledger.violations) + self._phase_violations(),
            phase_logs={cid: [p.name for p in c.phase_log] for cid, c in self.ledger.contracts.items()},
            slashed_honest=slashed_honest,
            notes=[f"{h}:{cid}:{m}" for h, cid, m in self.ledger.events],
        )

    def _phase_violations(self) -> list[str]:
        out = []
        for cid, c in self.ledger.contracts.items():
            log = [int(p) for p in c.phase_log]
            if log != sorted(log):
                out.append(f"{cid}: phase went backwards {c.phase_log}")
            if any(b - a > 1 for a, b in zip(log, log[1:])) and not c.penalty:
                jumps = [(a, b) for a, b in zip(log, log[1:]) if b - a > 1]
                # PC closes straight from Open are normal; VC-level jumps are only
                # legitimate on the x >= f+1 branch
                bad = [j for j in jumps if not (j[1] == Phase.PC_CLOSED and j[0] in (Phase.OPEN, Phase.VC_CLOSED))]
                if bad and not (c.settled is not None and c.settled.x >= c.f + 1):
                    out.append(f"{cid}: phase skip {c.phase_log}")
            hist = c.ws_history
            if hist != sorted(hist):
                out.append(f"{cid}: ws sequence decreased {hist}")
        return out

    def _liveness(self) -> dict:
        detail: dict[str, Any] = {"closes": {}, "updates": []}
        ok = True
        for label in self.cfg.closers:
            p = self.party(label)
            if not p.honest or not p.online or p.vc is None or p.vc.tx is None:
                continue
            done = p.vc.closed_via is not None
            detail["closes"][label] = p.vc.closed_via
            ok &= done
        for op in self.update_ops:
            p = self.party(op["by"])
            if not p.honest or not op["proposed"]:
                continue
            vc = p.vc
            committed = vc.committed is not None and vc.committed.seq >= op["seq"]
            invalidated = vc.closed_via is not None or any(
                self.actors[x].vc is not None and self.actors[x].vc.closed_via for x in self.parties
            )
            detail["updates"].append({**op, "committed": committed, "invalidated": invalidated and not committed})
            ok &= committed or invalidated
        detail["ok"] = ok
        detail["steps"] = self.net.now
        return detail


# ---------------------------------------------------------------------------
# public operations


def run_scenario(cfg: ScenarioConfig) -> ExecutionReport:
    return Simulation(cfg).run()


def check_balance_security(report: ExecutionReport) -> bool:
    if report.violations or report.slashed_honest:
        return False
    return all(report.loss[a] <= 0 for a in report.honest)


def check_liveness(report: ExecutionReport, bound: int | None = None) -> bool:
    """Every honest operation committed or was invalidated, within `bound`
    simulated steps when given."""
    if not report.live:
        return False
    return bound is None or report.liveness.get("steps", 0) <= bound


def same_state_closure(report: ExecutionReport) -> bool:
    """Every contract that settled the VC with a state used the same one."""
    states = [
        (c["ws_seq"], tuple(sorted(c["ws"].items())))
        for c in report.closures.values()
        if c["settled"] and c["ws"] is not None
    ]
    return len(set(states)) <= 1


def all_settled(report: ExecutionReport) -> bool:
    return all(c["settled"] for c in report.closures.values())


def count_onchain_txs(report: ExecutionReport, phase: str, contract_id: str | None = None) -> tuple[int, int]:
    """(party txs, warden txs) for one protocol procedure on one contract."""
    rows = [t for t in report.txs if contract_id is None or t["contract"] == contract_id]
    kinds = {
        "deploy_open_pc": ({"DeployChannel", "FundParty"}, {"FundWarden"}, None),
        "optimistic_vc_close": ({"RegisterVC", "SubmitProofs"}, {"PublishState"}, False),
        "pessimistic_vc_close": ({"RegisterVC", "SubmitProofs"}, {"PublishState"}, False),
        "pessimistic_pc_close": ({"ClosePcAfterVc"}, {"PublishState"}, True),
        "optimistic_pc_close": ({"CollabClosePC"}, set(), None),
    }
    if phase not in kinds:
        raise ValueError(f"unknown phase {phase!r}")
    pk, wk, pc_pub = kinds[phase]
    n_party = sum(1 for t in rows if t["role"] == "party" and t["kind"] in pk)
    n_warden = sum(
        1 for t in rows if t["role"] == "warden" and t["kind"] in wk and (pc_pub is None or t["pc"] == pc_pub)
    )
    return n_party, n_warden


# ---------------------------------------------------------------------------
# canned scenarios


def _ups(n: int = 3, who: Sequence[str] = ("A", "B")) -> list[dict]:
    return [{"from": who[i % len(who)], "amount": 1 + i % 2} for i in range(n)]


def canned(name: str, f: int = 1, seed: int = 0, hops: int = 2, **kw) -> ScenarioConfig:
    ls = party_labels(hops)
    A, B = ls[0], ls[-1]
    I = ls[1]
    base = dict(hops=hops, f=f, v=10, seed=seed, name=name)
    table: dict[str, dict] = {
        "honest_optimistic": dict(updates=_ups(3, (A, B)), closers=[A, B]),
        "honest_single_closer": dict(updates=_ups(3, (A, B)), closers=[A]),
        "ingrid_offline": dict(
            updates=_ups(3, (A, B)), closers=[A, B], behaviors={m: Behavior("offline", "close") for m in ls[1:-1]}
        ),
        "bob_offline": dict(updates=_ups(3, (A, B)), closers=[A], behaviors={B: Behavior("offline", "close")}),
        "ends_offline": dict(
            updates=_ups(3, (A, B)),
            closers=[I],
            behaviors={A: Behavior("offline", "close"), B: Behavior("offline", "close")},
        ),
        "old_state_closer": dict(
            updates=_ups(3, (A, B)), closers=[A], behaviors={A: Behavior("old_state_closer", 2)}
        ),
        "mismatched_requests": dict(
            updates=_ups(3, (A, B)), closers=[A, B], behaviors={A: Behavior("old_state_closer", 2)}
        ),
        "collusion_double_state": dict(
            updates=_ups(2, (A, B)) + [{"collude": "same_seq"}],
            closers=[A, B],
            behaviors={A: Behavior("double_state_colluder", B), B: Behavior("double_state_colluder", A)},
            same_block_crosscheck=True,
        ),
        "collusion_diff_seq": dict(
            updates=_ups(2, (A, B)) + [{"collude": "diff_seq"}],
            closers=[A, B],
            behaviors={A: Behavior("double_state_colluder", B), B: Behavior("double_state_colluder", A)},
        ),
        "collusive_intermediary": dict(
            updates=_ups(3, (A, B)),
            closers=[A, B],
            behaviors={A: Behavior("old_state_closer", 2), I: Behavior("collusive_intermediary", A)},
        ),
        "inconsistent_funder": dict(
            updates=_ups(2, (A, B)), closers=[A], behaviors={ls[-2]: Behavior("inconsistent_funder", 1)}
        ),
        "offline_during_update": dict(
            updates=_ups(2, (A, B)) + [{"from": A, "amount": 1, "nudge": True}],
            closers=[A],
            behaviors={B: Behavior("offline", "update")},
        ),
    }
    if name not in table:
        raise KeyError(f"unknown scenario {name!r}; known: {sorted(table)}")
    if hops > 2 and name == "collusion_double_state":
        # every party but one intermediary colludes
        extra = {m: Behavior("collusive_intermediary", A) for m in ls[1:-2]}
        table[name]["behaviors"] = {**table[name]["behaviors"], **extra}
    merged = {**base, **table[name], **kw}
    return ScenarioConfig(**merged)


CANNED = (
    "honest_optimistic",
    "honest_single_closer",
    "ingrid_offline",
    "bob_offline",
    "ends_offline",
    "old_state_closer",
    "mismatched_requests",
    "collusion_double_state",
    "collusion_diff_seq",
    "collusive_intermediary",
    "inconsistent_funder",
    "offline_during_update",
)


def build_multihop(cfg: ScenarioConfig) -> Simulation:
    if cfg.hops < 3:
        raise ValueError("multi-hop needs hops >= 3")
    return Simulation(cfg)


# ---------------------------------------------------------------------------
# randomized suites

WARDEN_PATTERNS = ("stale_publisher", "double_signer", "withholder", "crash")


def warden_assignment(cfg: ScenarioConfig, rng: random.Random, pattern: int | None = None) -> dict[str, Behavior]:
    """At most f Byzantine wardens per committee. A warden shared by two
    committees counts against both."""
    members = cfg.committee_members()
    f = cfg.f
    out: dict[str, Behavior] = {}
    load = [0] * len(members)
    for ci, com in enumerate(members):
        k = rng.randint(0, f) if pattern is None else min(f, pattern)
        for w in rng.sample(com, len(com)):
            if load[ci] >= k:
                break
            others = [cj for cj, c2 in enumerate(members) if w in c2]
            if any(load[cj] >= f for cj in others) or f"W{w}" in out:
                continue
            kind = rng.choice(WARDEN_PATTERNS)
            if kind == "stale_publisher":
                b = Behavior(kind, rng.randint(1, 3))
            elif kind == "withholder":
                b = Behavior(kind, rng.choice(cfg.labels + ["chain"]))
            elif kind == "crash":
                b = Behavior(kind, rng.choice(["open", "update", "close", "settle"]))
            else:
                b = Behavior(kind)
            out[f"W{w}"] = b
            for cj in others:
                load[cj] += 1
    return out


def random_config(name: str, f: int, seed: int, hops: int = 2, pattern: int | None = None) -> ScenarioConfig:
    rng = random.Random(seed * 7919 + f * 31 + hops)
    cfg = canned(name, f=f, seed=seed, hops=hops)
    cfg = replace(cfg, overlap=rng.choice([0, 0, 1, f]))
    behaviors = dict(cfg.behaviors)
    behaviors.update(warden_assignment(cfg, rng, pattern))
    horizon = rng.choice([5, 20, 50])
    censorship = {}
    if rng.random() < 0.5:
        victim = rng.choice(cfg.labels)
        censorship[(victim, "tx")] = horizon
    cfg = replace(
        cfg,
        behaviors=behaviors,
        horizon=horizon,
        censorship=censorship,
        same_block_crosscheck=cfg.same_block_crosscheck or rng.random() < 0.5,
        leader=rng.randrange(hops),
    )
    return cfg


def same_state_configs(f: int, runs: int, seed0: int = 0, hops: int = 2) -> Iterable[ScenarioConfig]:
    for i in range(runs):
        name = "collusion_double_state" if i % 2 == 0 else "collusion_diff_seq"
        cfg = random_config(name, f, seed0 + i, hops=hops)
        yield replace(cfg, same_block_crosscheck=(i % 4) < 2, updates=cfg.updates[-2:])


def balance_configs(runs: int, seed0: int = 0, fs: Sequence[int] = (1, 2, 3), hops: int = 2) -> Iterable[ScenarioConfig]:
    names = [n for n in CANNED]
    patterns = list(range(0, max(fs) + 1))
    for i in range(runs):
        name = names[i % len(names)]
        f = fs[(i // len(names)) % len(fs)]
        pattern = patterns[(i // (len(names) * len(fs))) % len(patterns)]
        yield random_config(name, f, seed0 + i, hops=hops, pattern=min(pattern, f))


@dataclass
class SuiteResult:
    name: str
    runs: int
    failures: list[dict]
    covered: dict[str, int]

    @property
    def ok(self) -> bool:
        return not self.failures and self.runs > 0


def run_suite(name: str, configs: Iterable[ScenarioConfig], check) -> SuiteResult:
    failures, covered, n = [], {}, 0
    for cfg in configs:
        rep = run_scenario(cfg)
        n += 1
        covered[cfg.name] = covered.get(cfg.name, 0) + 1
        if not check(rep):
            failures.append({"scenario": cfg.name, "seed": cfg.seed, "f": cfg.f, "summary": rep.summary()})
    return SuiteResult(name, n, failures, covered)


def same_state_check(rep: ExecutionReport) -> bool:
    return all_settled(rep) and same_state_closure(rep) and not rep.violations


def balance_check(rep: ExecutionReport) -> bool:
    return check_balance_security(rep)


def liveness_check(rep: ExecutionReport) -> bool:
    return check_liveness(rep)


# ---------------------------------------------------------------------------
# H sweep


def h_sweep(cfg: ScenarioConfig, horizons: Sequence[int] = (10, 50, 200), victims: Sequence[str] | None = None):
    """Run `cfg` once per horizon H with the victims' messages held back by
    the full H. Returns {H: report}."""
    out = {}
    who = list(victims) if victims is not None else cfg.labels
    for h in horizons:
        cens = {(v, "*"): h for v in who}
        out[h] = run_scenario(replace(cfg, horizon=h, censorship=cens, name=f"{cfg.name}@H={h}"))
    return out


def outcome_key(rep: ExecutionReport) -> tuple:
    """What must not depend on network timing: the coins of every honest
    main party, and whether the contracts agreed on one state. Which wardens
    earn the fee, and which of two colluding states wins, may vary."""
    parties = tuple(sorted((a, rep.final[a]) for a in rep.honest if not a.startswith("W")))
    return parties, same_state_closure(rep), all_settled(rep), check_balance_security(rep), check_liveness(rep)


# ---------------------------------------------------------------------------
# scenario files

SCHEMA_VERSION = 1
_FILE_KEYS = {
    "schema",
    "base",
    "name",
    "hops",
    "f",
    "v",
    "initial",
    "free_balance",
    "updates",
    "closers",
    "behaviors",
    "seed",
    "horizon",
    "censorship",
    "drop_rules",
    "same_block_crosscheck",
    "leader",
    "crosscheck",
    "fee",
    "overlap",
    "max_steps",
    "settle_out",
}
_UPDATE_KEYS = {"from", "amount", "nudge", "collude"}


class ScenarioError(ValueError):
    pass


def _behavior(path: str, raw) -> Behavior:
    from .actors import PARTY_BEHAVIORS, WARDEN_BEHAVIORS

    if isinstance(raw, str):
        name, _, arg = raw.partition(":")
        val: Any = (int(arg) if arg.lstrip("-").isdigit() else arg) if arg else None
    elif isinstance(raw, dict) and set(raw) <= {"name", "arg"} and "name" in raw:
        name, val = raw["name"], raw.get("arg")
    else:
        raise ScenarioError(f"{path}: expected 'name[:arg]' or {{name, arg}}")
    if name not in PARTY_BEHAVIORS | WARDEN_BEHAVIORS:
        raise ScenarioError(f"{path}: unknown behavior {name!r}")
    return Behavior(name, val)


def config_from_dict(data: dict, source: str = "<scenario>") -> ScenarioConfig:
    """Build a config from the versioned file schema. Unknown keys fail."""
    if not isinstance(data, dict):
        raise ScenarioError(f"{source}: top level must be an object")
    unknown = sorted(set(data) - _FILE_KEYS)
    if unknown:
        raise ScenarioError(f"{source}: unknown key(s) {', '.join(unknown)}")
    if data.get("schema") != SCHEMA_VERSION:
        raise ScenarioError(f"{source}: field 'schema' must be {SCHEMA_VERSION}")
    kw: dict[str, Any] = {k: v for k, v in data.items() if k not in ("schema", "base")}
    for i, u in enumerate(kw.get("updates", [])):
        if not isinstance(u, dict) or set(u) - _UPDATE_KEYS:
            raise ScenarioError(f"{source}: updates[{i}] has unknown keys or is not an object")
    if "behaviors" in kw:
        kw["behaviors"] = {a: _behavior(f"{source}: behaviors.{a}", b) for a, b in kw["behaviors"].items()}
    if "initial" in kw:
        kw["initial"] = tuple(kw["initial"])
    if "censorship" in kw:
        try:
            kw["censorship"] = {(c["actor"], c.get("kind", "*")): int(c["delay"]) for c in kw["censorship"]}
        except (KeyError, TypeError) as e:
            raise ScenarioError(f"{source}: censorship entries need actor and delay ({e})") from None
    if "drop_rules" in kw:
        if not all(isinstance(r, list) and len(r) == 3 for r in kw["drop_rules"]):
            raise ScenarioError(f"{source}: drop_rules entries must be [sender, receiver, kind]")
        kw["drop_rules"] = {tuple(r) for r in kw["drop_rules"]}
    try:
        if "base" in data:
            base = data["base"]
            if base not in CANNED:
                raise ScenarioError(f"{source}: field 'base' names unknown scenario {base!r}")
            return canned(base, **kw)
        return ScenarioConfig(**kw)
    except (TypeError, ValueError) as e:
        if isinstance(e, ScenarioError):
            raise
        raise ScenarioError(f"{source}: {e}") from None


def load_scenario(path: str) -> ScenarioConfig:
    """Read a JSON scenario file."""
    import json

    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as e:
        raise ScenarioError(f"{path}:{e.lineno}:{e.colno}: {e.msg}") from None
    except OSError as e:
        raise ScenarioError(f"{path}: {e.strerror}") from None
    return config_from_dict(data, path)


def resolve_scenario(ref: str, f: int = 1, seed: int = 0, hops: int = 2) -> ScenarioConfig:
    """A canned scenario name or a path to a scenario file."""
    if ref in CANNED:
        return canned(ref, f=f, seed=seed, hops=hops)
    cfg = load_scenario(ref)
    return replace(cfg, seed=seed)
