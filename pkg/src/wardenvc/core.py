"""Domain types, simulated signatures and quorum/collateral arithmetic.

Everything in this module is an immutable value or a pure function, so the
simulator, the contract model and the game engine can share it freely.
"""

from __future__ import annotations

import enum
import functools
import hashlib
import hmac
import struct
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence


class ProtocolError(Exception):
    """Base class for protocol-level failures raised by pure helpers."""


class IncompleteRegisterError(ProtocolError):
    pass


class RegisterMismatchError(ProtocolError):
    pass


class Kind(enum.IntEnum):
    MAIN = 0
    WARDEN = 1
    CONTRACT = 2
    CHAIN = 3


@dataclass(frozen=True, order=True)
class ActorId:
    kind: Kind
    index: int
    label: str

    def __hash__(self) -> int:
        return self.index * 4 + self.kind

    def __str__(self) -> str:
        return self.label

    def __repr__(self) -> str:
        return f"ActorId({self.label})"


def party(index: int, label: str) -> ActorId:
    return ActorId(Kind.MAIN, index, label)


def warden(index: int) -> ActorId:
    return ActorId(Kind.WARDEN, index, f"W{index}")


def contract(index: int, label: str) -> ActorId:
    return ActorId(Kind.CONTRACT, index, label)


CHAIN = ActorId(Kind.CHAIN, 0, "chain")


# ---------------------------------------------------------------------------
# canonical serialization


_PACK = struct.Struct(">Q").pack


def _lp(tag: bytes, data: bytes) -> bytes:
    return tag + _PACK(len(data)) + data


_ACTOR_ENC: dict[ActorId, bytes] = {}


def _enc_actor(a: ActorId) -> bytes:
    out = _ACTOR_ENC.get(a)
    if out is None:
        out = _ACTOR_ENC[a] = _lp(b"A", encode(int(a.kind)) + encode(a.index) + encode(a.label))
    return out


def encode(obj: Any) -> bytes:
    """Field-ordered, length-prefixed encoding used for every signed payload."""
    t = type(obj)
    if t is ActorId:
        return _enc_actor(obj)
    if t is int:
        return _lp(b"I", str(obj).encode())
    if t is str:
        return _lp(b"S", obj.encode("utf-8"))
    if t is tuple or t is list:
        return _lp(b"L", b"".join([encode(x) for x in obj]))
    if obj is None:
        return b"N"
    cached = getattr(obj, "_enc", None)
    if cached is not None:
        return cached
    if t is bool:
        return b"T" if obj else b"F"
    if isinstance(obj, enum.Enum):
        return encode(obj.value)
    if isinstance(obj, int):
        return _lp(b"I", str(int(obj)).encode())
    if isinstance(obj, str):
        return _lp(b"S", obj.encode("utf-8"))
    if isinstance(obj, (bytes, bytearray)):
        return _lp(b"Y", bytes(obj))
    if isinstance(obj, (tuple, list)):
        return _lp(b"L", b"".join([encode(x) for x in obj]))
    if isinstance(obj, (frozenset, set)):
        return _lp(b"E", b"".join(sorted(encode(x) for x in obj)))
    if isinstance(obj, dict) or isinstance(obj, Mapping):
        items = sorted((encode(k), encode(v)) for k, v in obj.items())
        return _lp(b"D", b"".join(k + v for k, v in items))
    if hasattr(obj, "canonical"):
        cached = _lp(b"O", encode(t.__name__) + encode(obj.canonical()))
        try:
            object.__setattr__(obj, "_enc", cached)
        except AttributeError:
            pass
        return cached
    raise TypeError(f"cannot canonically encode {t.__name__}")


def digest(obj: Any) -> bytes:
    data = obj if isinstance(obj, bytes) else encode(obj)
    return hashlib.sha256(data).digest()


# ---------------------------------------------------------------------------
# simulated signatures

# Only this module holds the tag key; actors can obtain a signature solely by
# calling sign() with their own id, so forgery is impossible by construction.
_TAG_KEY = b"wardenvc-simulated-signature-key"


@dataclass(frozen=True, order=True)
class Signature:
    signer: ActorId
    payload_digest: bytes
    tag: bytes = field(repr=False, compare=False)

    def canonical(self):
        return (self.signer, self.payload_digest)


@functools.lru_cache(maxsize=1 << 16)
def _tag(signer: ActorId, payload_digest: bytes) -> bytes:
    return hmac.new(_TAG_KEY, encode(signer) + payload_digest, hashlib.sha256).digest()


def sign(signer: ActorId, msg: bytes) -> Signature:
    d = hashlib.sha256(msg).digest()
    return Signature(signer, d, _tag(signer, d))


def verify_digest(sig: Signature, signer: ActorId, payload_digest: bytes) -> bool:
    if sig.signer != signer or sig.payload_digest != payload_digest:
        return False
    return hmac.compare_digest(sig.tag, _tag(signer, payload_digest))


def verify(sig: Signature, signer: ActorId, msg: bytes) -> bool:
    return verify_digest(sig, signer, hashlib.sha256(msg).digest())


# ---------------------------------------------------------------------------
# channel states


def _balances(mapping: Mapping[ActorId, int] | Iterable[tuple[ActorId, int]]):
    items = mapping.items() if isinstance(mapping, Mapping) else mapping
    out = tuple(sorted((a, int(v)) for a, v in items))
    if len({a for a, _ in out}) != len(out):
        raise ValueError("duplicate holder in balances")
    if any(v < 0 for _, v in out):
        raise ValueError("balances must be non-negative")
    return out


@dataclass(frozen=True)
class ChannelState:
    """Virtual-channel state: end-party balances and a sequence number."""

    channel_id: str
    seq: int
    balances: tuple[tuple[ActorId, int], ...]

    def __post_init__(self):
        if self.seq < 1:
            raise ValueError("seq must be >= 1")
        object.__setattr__(self, "balances", _balances(self.balances))

    @classmethod
    def of(cls, channel_id: str, seq: int, balances: Mapping[ActorId, int]) -> "ChannelState":
        return cls(channel_id, seq, _balances(balances))

    @property
    def total(self) -> int:
        return sum(v for _, v in self.balances)

    def balance(self, who: ActorId) -> int:
        for a, v in self.balances:
            if a == who:
                return v
        return 0

    @property
    def holders(self) -> tuple[ActorId, ...]:
        return tuple(a for a, _ in self.balances)

    def canonical(self):
        return ("vc", self.channel_id, self.seq, self.balances)

    def same_value(self, other: "ChannelState") -> bool:
        return self.seq == other.seq and self.balances == other.balances


@dataclass(frozen=True)
class PcState:
    """Payment-channel state. `locks` reserves coins for virtual channels as
    (vc_id, left_amount, right_amount); the lock is part of the PC total."""

    channel_id: str
    seq: int
    balances: tuple[tuple[ActorId, int], ...]
    locks: tuple[tuple[str, int, int], ...] = ()

    def __post_init__(self):
        if self.seq < 1:
            raise ValueError("seq must be >= 1")
        object.__setattr__(self, "balances", _balances(self.balances))
        object.__setattr__(self, "locks", tuple(sorted(self.locks)))
        if any(l < 0 or r < 0 for _, l, r in self.locks):
            raise ValueError("locks must be non-negative")

    @property
    def total(self) -> int:
        return sum(v for _, v in self.balances) + sum(l + r for _, l, r in self.locks)

    def balance(self, who: ActorId) -> int:
        return dict(self.balances).get(who, 0)

    def lock(self, vc_id: str) -> tuple[int, int] | None:
        for name, l, r in self.locks:
            if name == vc_id:
                return l, r
        return None

    @property
    def holders(self) -> tuple[ActorId, ...]:
        return tuple(a for a, _ in self.balances)

    def canonical(self):
        return ("pc", self.channel_id, self.seq, self.balances, self.locks)

    def same_value(self, other: "PcState") -> bool:
        return self.canonical() == other.canonical()


AnyState = ChannelState | PcState


def state_bytes(state: AnyState) -> bytes:
    return encode(state)


@dataclass(frozen=True)
class UpdateAnnouncement:
    """M = {s_i, i, sigma_A(s_i, i), sigma_B(s_i, i)}; for a PC the two
    signatures come from the two channel parties."""

    state: AnyState
    sigs: tuple[Signature, ...]

    @property
    def seq(self) -> int:
        return self.state.seq

    @property
    def channel_id(self) -> str:
        return self.state.channel_id

    def canonical(self):
        return (self.state, tuple(sorted(s.canonical() for s in self.sigs)))

    @property
    def digest(self) -> bytes:
        return digest(self)

    def signers_valid(self, signers: Sequence[ActorId]) -> bool:
        d = hashlib.sha256(state_bytes(self.state)).digest()
        have = {s.signer: s for s in self.sigs}
        return all(p in have and verify_digest(have[p], p, d) for p in signers)

    def is_valid(self) -> bool:
        """Both holders of the state signed it (decidable from M alone)."""
        return self.signers_valid(self.state.holders)


def announce(state: AnyState, signers: Sequence[ActorId]) -> UpdateAnnouncement:
    """Build an announcement with signatures from `signers` (test/helper use)."""
    msg = state_bytes(state)
    return UpdateAnnouncement(state, tuple(sign(p, msg) for p in signers))


@dataclass(frozen=True)
class QuorumCert:
    announcement_digest: bytes
    warden_sigs: frozenset[Signature]
    committee_id: str


def quorum_size(f: int) -> int:
    return 2 * f + 1


def committee_size(f: int) -> int:
    return 3 * f + 1


def verify_quorum(cert: QuorumCert, committee: Iterable[ActorId], f: int) -> bool:
    members = set(committee)
    signers = {
        s.signer
        for s in cert.warden_sigs
        if s.signer in members and verify_digest(s, s.signer, cert.announcement_digest)
    }
    return len(signers) >= quorum_size(f)


def required_collateral(v: int, f: int) -> int:
    if f < 1:
        raise ValueError("f must be >= 1")
    if v < 1:
        raise ValueError("v must be >= 1")
    return -(-v // f)


@dataclass(frozen=True)
class SignedStatePublication:
    """{VS, sigma_W(VS)}: a warden's signature over an announcement."""

    warden: ActorId
    announcement: UpdateAnnouncement
    warden_sig: Signature

    @property
    def seq(self) -> int:
        return self.announcement.seq

    @property
    def state(self) -> AnyState:
        return self.announcement.state

    def is_valid(self) -> bool:
        return self.warden_sig.signer == self.warden and verify_digest(
            self.warden_sig, self.warden, self.announcement.digest
        )

    def canonical(self):
        return (self.warden, self.announcement, self.warden_sig)


def endorse(w: ActorId, ann: UpdateAnnouncement) -> SignedStatePublication:
    return SignedStatePublication(w, ann, sign(w, encode(ann)))


@dataclass(frozen=True)
class ProofOfFraud:
    accused: ActorId
    published: SignedStatePublication
    conflicting: SignedStatePublication

    def canonical(self):
        return (self.accused, self.published, self.conflicting)


def validate_proof_of_fraud(pof: ProofOfFraud) -> bool:
    pub, con = pof.published, pof.conflicting
    if pub.warden != pof.accused or con.warden != pof.accused:
        return False
    if not (pub.is_valid() and con.is_valid()):
        return False
    if pub.announcement.channel_id != con.announcement.channel_id:
        return False
    if not con.announcement.is_valid():
        return False
    if con.seq > pub.seq:
        return True
    return con.seq == pub.seq and not con.state.same_value(pub.state)


# ---------------------------------------------------------------------------
# virtual channel registration


@dataclass(frozen=True)
class ContractInfo:
    contracts: tuple[str, ...]
    leader: str

    def __post_init__(self):
        if self.contracts.count(self.leader) != 1:
            raise ValueError("exactly one listed contract must be the leader")


@dataclass(frozen=True)
class RegisterBody:
    """Unsigned contents of TX_r."""

    vc_id: str
    parties: tuple[ActorId, ...]
    pcs: tuple[tuple[str, ActorId, ActorId], ...]
    committees: tuple[tuple[str, tuple[ActorId, ...]], ...]
    initial_state: ChannelState
    balance: int
    contract_info: ContractInfo

    def canonical(self):
        return (
            self.vc_id,
            self.parties,
            self.pcs,
            self.committees,
            self.initial_state,
            self.balance,
            self.contract_info.contracts,
            self.contract_info.leader,
        )

    @property
    def endpoints(self) -> tuple[ActorId, ActorId]:
        return self.parties[0], self.parties[-1]

    @property
    def pk_wardens(self) -> frozenset[ActorId]:
        cached = self.__dict__.get("_pk")
        if cached is None:
            cached = frozenset(w for _, com in self.committees for w in com)
            object.__setattr__(self, "_pk", cached)
        return cached

    def committee(self, contract_id: str) -> tuple[ActorId, ...]:
        return dict(self.committees)[contract_id]

    def pc(self, contract_id: str) -> tuple[ActorId, ActorId]:
        for cid, left, right in self.pcs:
            if cid == contract_id:
                return left, right
        raise KeyError(contract_id)


@dataclass(frozen=True)
class RegisterTx:
    body: RegisterBody
    sigs: tuple[Signature, ...]
    initial_sigs: tuple[Signature, ...]

    def canonical(self):
        return (self.body, tuple(s.canonical() for s in self.sigs))

    @property
    def vc_id(self) -> str:
        return self.body.vc_id

    @property
    def initial_announcement(self) -> UpdateAnnouncement:
        return UpdateAnnouncement(self.body.initial_state, self.initial_sigs)

    def is_valid(self) -> bool:
        msg = encode(self.body)
        have = {s.signer: s for s in self.sigs}
        if not all(p in have and verify(have[p], p, msg) for p in self.body.parties):
            return False
        return self.initial_announcement.is_valid()

    @property
    def digest(self) -> bytes:
        return digest(self)


def register_body(
    vc_id: str,
    parties: Sequence[ActorId],
    committees: Mapping[str, Sequence[ActorId]],
    s_1: ChannelState,
    v: int,
    contract_info: ContractInfo,
) -> RegisterBody:
    if s_1.total != v:
        raise ValueError("initial balances must sum to v")
    if s_1.seq != 1:
        raise ValueError("initial state must have seq 1")
    if set(s_1.holders) != {parties[0], parties[-1]}:
        raise ValueError("initial state must be over the two end parties")
    if len(parties) < 3:
        raise ValueError("a virtual channel needs at least one intermediary")
    cids = contract_info.contracts
    if len(cids) != len(parties) - 1:
        raise ValueError("one contract per payment channel")
    pcs = tuple((cids[i], parties[i], parties[i + 1]) for i in range(len(cids)))
    coms = tuple((cid, tuple(sorted(committees[cid]))) for cid in cids)
    return RegisterBody(vc_id, tuple(parties), pcs, coms, s_1, v, contract_info)


def merge_pre_registers(bodies: Sequence[RegisterBody]) -> RegisterBody:
    """Ingrid's check that every end party proposed identical contents."""
    first = bodies[0]
    for b in bodies[1:]:
        if encode(b) != encode(first):
            raise RegisterMismatchError("pre-register contents differ")
    return first


def make_register_tx(
    body: RegisterBody,
    sigs: Mapping[ActorId, Signature],
    initial_sigs: Mapping[ActorId, Signature],
) -> RegisterTx:
    msg = encode(body)
    for p in body.parties:
        s = sigs.get(p)
        if s is None or not verify(s, p, msg):
            raise IncompleteRegisterError(f"missing or bad register signature from {p}")
    tx = RegisterTx(
        body,
        tuple(sigs[p] for p in body.parties),
        tuple(initial_sigs[p] for p in body.endpoints if p in initial_sigs),
    )
    if not tx.initial_announcement.is_valid():
        raise IncompleteRegisterError("initial state lacks end-party signatures")
    return tx
