"""Deterministic discrete-event network with an adversarial scheduler.

Honest messages are delayed by the adversary but always delivered within a
horizon of H steps. Only messages sent by Byzantine actors may be dropped.
"""

from __future__ import annotations

import hashlib
import heapq
import json
import random
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable

from .core import CHAIN, ActorId

DEFAULT_HORIZON = 50


@dataclass(frozen=True)
class Envelope:
    frm: ActorId
    to: ActorId
    kind: str
    payload: Any
    sent_at: int
    deliver_at: int
    counter: int


@dataclass
class AdversaryPolicy:
    """What the scheduler may do.

    censorship maps (actor label, message kind) to a fixed delay; the label
    refers to the sender, and the kind "*" matches every kind.
    drop_rules is a set of (sender label, receiver label or "*", kind or "*")
    and is consulted only for Byzantine senders.
    """

    seed: int = 0
    horizon: int = DEFAULT_HORIZON
    censorship: dict[tuple[str, str], int] = field(default_factory=dict)
    drop_rules: set[tuple[str, str, str]] = field(default_factory=set)
    min_delay: int = 1

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        for key, delay in self.censorship.items():
            if not 1 <= delay <= self.horizon:
                raise ValueError(f"censorship delay for {key} outside [1, H]")

    def delay_for(self, env_from: str, kind: str) -> int | None:
        for key in ((env_from, kind), (env_from, "*"), ("*", kind)):
            if key in self.censorship:
                return self.censorship[key]
        return None

    def drops(self, frm: str, to: str, kind: str) -> bool:
        for rf, rt, rk in self.drop_rules:
            if rf == frm and rt in (to, "*") and rk in (kind, "*"):
                return True
        return False


@dataclass(frozen=True)
class TraceRecord:
    step: int
    event: str
    frm: str
    to: str
    summary: str

    def line(self) -> str:
        body = json.dumps(
            {"step": self.step, "event": self.event, "from": self.frm, "to": self.to, "summary": self.summary},
            separators=(",", ":"),
        )
        d = hashlib.sha256(body.encode()).hexdigest()[:16]
        return body[:-1] + f',"digest":"{d}"}}'


class EventQueue:
    def __init__(self):
        self._heap: list[tuple[int, int, Envelope]] = []
        self.now = 0

    def push(self, env: Envelope):
        heapq.heappush(self._heap, (env.deliver_at, env.counter, env))

    def pop_due(self) -> list[Envelope]:
        out = []
        while self._heap and self._heap[0][0] <= self.now:
            out.append(heapq.heappop(self._heap)[2])
        return out

    def next_time(self) -> int | None:
        return self._heap[0][0] if self._heap else None

    def pending(self) -> list[Envelope]:
        return [e for _, _, e in sorted(self._heap)]

    def __len__(self):
        return len(self._heap)


def summarize(payload: Any) -> str:
    if hasattr(payload, "summary"):
        return payload.summary()
    s = type(payload).__name__
    return s


class Network:
    """Single-threaded event loop. The owner supplies `deliver`, called with
    each due batch in (deliver_at, counter) order."""

    def __init__(self, policy: AdversaryPolicy, byzantine: Iterable[ActorId] = ()):
        self.policy = policy
        self.rng = random.Random(policy.seed)
        self.queue = EventQueue()
        self.byzantine = set(byzantine)
        self.counter = 0
        self.trace: list[TraceRecord] = []
        self.sent_honest = 0
        self.delivered_honest = 0
        self.dropped = 0
        self.holds: dict[Any, list[Envelope]] = {}

    @property
    def now(self) -> int:
        return self.queue.now

    def record(self, event: str, frm: ActorId | str, to: ActorId | str, summary: str):
        self.trace.append(TraceRecord(self.now, event, str(frm), str(to), summary))

    def _delay(self, frm: ActorId, kind: str) -> int:
        fixed = self.policy.delay_for(frm.label, kind)
        if fixed is not None:
            return fixed
        return self.rng.randint(self.policy.min_delay, self.policy.horizon)

    def send(self, frm: ActorId, to: ActorId, kind: str, payload: Any, delay: int | None = None) -> Envelope | None:
        self.counter += 1
        byz = frm in self.byzantine
        if byz and self.policy.drops(frm.label, to.label, kind):
            self.dropped += 1
            self.record("drop", frm, to, f"{kind}:{summarize(payload)}")
            return None
        d = self._delay(frm, kind) if delay is None else delay
        d = max(1, d) if byz else min(max(1, d), self.policy.horizon)
        env = Envelope(frm, to, kind, payload, self.now, self.now + d, self.counter)
        if not byz:
            self.sent_honest += 1
        self.queue.push(env)
        self.record("send", frm, to, f"{kind}:{summarize(payload)}@{env.deliver_at}")
        return env

    def send_at(self, frm: ActorId, to: ActorId, kind: str, payload: Any, deliver_at: int) -> Envelope:
        """Schedule at an absolute step (used to force same-block arrivals)."""
        self.counter += 1
        deliver_at = max(deliver_at, self.now + 1)
        env = Envelope(frm, to, kind, payload, self.now, deliver_at, self.counter)
        if frm not in self.byzantine:
            self.sent_honest += 1
        self.queue.push(env)
        self.record("send", frm, to, f"{kind}:{summarize(payload)}@{env.deliver_at}")
        return env

    def step(self, deliver: Callable[[int, list[Envelope]], None] | None = None) -> list[Envelope]:
        """Hand every envelope due now to `deliver`, then advance one step.
        Reactions sent inside `deliver` are stamped with the current step."""
        batch = self.queue.pop_due()
        for env in batch:
            if env.frm not in self.byzantine:
                self.delivered_honest += 1
        if deliver is not None:
            deliver(self.now, batch)
        self.queue.now += 1
        return batch

    def advance_to_next(self):
        """Skip empty steps; equivalent to calling step() until something is due."""
        nxt = self.queue.next_time()
        if nxt is not None and nxt > self.now:
            self.queue.now = nxt

    def run_until_quiescent(self, deliver: Callable[[int, list[Envelope]], None], max_steps: int) -> bool:
        """Deliver batches until the queue drains. Returns False (liveness
        violation) if max_steps is exhausted with honest events pending."""
        start = self.now
        while len(self.queue):
            self.advance_to_next()
            if self.now - start > max_steps:
                return not any(e.frm not in self.byzantine for e in self.queue.pending())
            self.step(deliver)
        return True

    def trace_lines(self) -> list[str]:
        return [r.line() for r in self.trace]

    def trace_digest(self) -> str:
        h = hashlib.sha256()
        for r in self.trace:
            h.update(f"{r.step}|{r.event}|{r.frm}|{r.to}|{r.summary}\n".encode())
        return h.hexdigest()


__all__ = [
    "AdversaryPolicy",
    "CHAIN",
    "DEFAULT_HORIZON",
    "Envelope",
    "EventQueue",
    "Network",
    "TraceRecord",
]
