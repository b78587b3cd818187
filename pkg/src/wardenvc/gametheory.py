"""Extensive-form games for the closing protocol and their equilibria.

Games are finite trees. Every decision node belongs to an information set;
a pure strategy fixes one action per information set. Three independent
solvers are provided:

* `backward_induction` for perfect-information games (recursive, exact),
* `to_nfg` + `pure_nash` for the strategic form (plain Python loops),
* `brute_force_spne`, which enumerates every joint strategy through the
  compiled kernels and checks the equilibrium condition in every subgame.

Payoffs are exact `Fraction`s. Leaf payoffs of the unilateral closing game
come from `chainsim.settlement`, so the model and the simulator share one
set of settlement rules.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .chainsim import decide_ws, settlement
from .core import ActorId, ChannelState, party, warden

try:  # compiled kernels when the extension was built
    from . import _kernels as kernels
except ImportError:  # pragma: no cover - exercised when the build is skipped
    from . import _kernels_py as kernels

KERNEL_BACKEND = kernels.BACKEND
BRUTE_FORCE_CAP = 10**6


# ---------------------------------------------------------------------------
# game trees


@dataclass(eq=False)
class Node:
    player: int | None = None
    infoset: str | None = None
    actions: tuple[str, ...] = ()
    children: tuple["Node", ...] = ()
    payoff: tuple[Fraction, ...] | None = None

    @property
    def terminal(self) -> bool:
        return self.player is None


def leaf(*payoff) -> Node:
    return Node(payoff=tuple(Fraction(p) for p in payoff))


def decide(player: int, infoset: str, branches: Sequence[tuple[str, Node]]) -> Node:
    acts = tuple(a for a, _ in branches)
    kids = tuple(n for _, n in branches)
    return Node(player=player, infoset=infoset, actions=acts, children=kids)


@dataclass(frozen=True)
class InfoSet:
    name: str
    player: int
    actions: tuple[str, ...]
    histories: tuple[tuple[str, ...], ...]


class Efg:
    """(N, H, P, u) plus an information partition."""

    def __init__(self, players: Sequence[str], root: Node, name: str = "game"):
        self.players = tuple(players)
        self.root = root
        self.name = name
        self._walk = list(self._preorder())
        self.validate()

    def _preorder(self):
        stack = [((), self.root)]
        while stack:
            h, n = stack.pop()
            yield h, n
            for a, c in reversed(list(zip(n.actions, n.children))):
                stack.append((h + (a,), c))

    def nodes(self) -> list[tuple[tuple[str, ...], Node]]:
        return list(self._walk)

    def histories(self) -> set[tuple[str, ...]]:
        return {h for h, _ in self._walk}

    def terminals(self) -> list[tuple[tuple[str, ...], Node]]:
        return [(h, n) for h, n in self._walk if n.terminal]

    def infosets(self) -> dict[str, InfoSet]:
        out: dict[str, list] = {}
        for h, n in self._walk:
            if not n.terminal:
                out.setdefault(n.infoset, []).append((h, n))
        return {
            name: InfoSet(name, items[0][1].player, items[0][1].actions, tuple(h for h, _ in items))
            for name, items in out.items()
        }

    @property
    def perfect_information(self) -> bool:
        return all(len(i.histories) == 1 for i in self.infosets().values())

    def validate(self):
        hs = self.histories()
        for h in hs:
            if h and h[:-1] not in hs:
                raise ValueError(f"history {h} has no parent")
        groups: dict[str, tuple[int, tuple[str, ...]]] = {}
        for h, n in self._walk:
            if n.terminal:
                if n.payoff is None or len(n.payoff) != len(self.players):
                    raise ValueError(f"terminal {h} needs one payoff per player")
                continue
            if not n.actions or len(n.actions) != len(n.children) or len(set(n.actions)) != len(n.actions):
                raise ValueError(f"decision node {h} needs distinct actions")
            if not 0 <= n.player < len(self.players) or n.infoset is None:
                raise ValueError(f"decision node {h} has a bad player or information set")
            key = (n.player, n.actions)
            if groups.setdefault(n.infoset, key) != key:
                raise ValueError(f"information set {n.infoset} mixes players or action sets")

    def movers(self) -> set[int]:
        return {n.player for _, n in self._walk if not n.terminal}


@dataclass(frozen=True, order=True)
class JointStrategy:
    """One action per information set."""

    choices: tuple[tuple[str, str], ...]

    @classmethod
    def of(cls, mapping: dict[str, str]) -> "JointStrategy":
        return cls(tuple(sorted(mapping.items())))

    def __getitem__(self, infoset: str) -> str:
        return dict(self.choices)[infoset]

    def get(self, infoset: str, default=None):
        return dict(self.choices).get(infoset, default)

    def restrict(self, infosets: Iterable[str]) -> "JointStrategy":
        keep = set(infosets)
        return JointStrategy(tuple(c for c in self.choices if c[0] in keep))

    def __str__(self):
        return "{" + ", ".join(f"{i}:{a}" for i, a in self.choices) + "}"


def play(g: Efg, sigma: JointStrategy | dict, node: Node | None = None) -> tuple[Fraction, ...]:
    choice = dict(sigma.choices) if isinstance(sigma, JointStrategy) else sigma
    n = node or g.root
    while not n.terminal:
        n = n.children[n.actions.index(choice[n.infoset])]
    return n.payoff


# ---------------------------------------------------------------------------
# backward induction (perfect information)


def backward_induction(g: Efg) -> tuple[set[JointStrategy], dict[JointStrategy, tuple[Fraction, ...]]]:
    """All pure SPNE of a perfect-information game. Ties at a node keep every
    maximizing action, so the result is a set."""
    if not g.perfect_information:
        raise ValueError("backward induction needs perfect information; use to_nfg")

    def solve(n: Node) -> list[tuple[dict, tuple]]:
        if n.terminal:
            return [({}, n.payoff)]
        subs = [solve(c) for c in n.children]
        out = []
        for combo in itertools.product(*subs):
            merged: dict = {}
            for s, _ in combo:
                merged.update(s)
            best = max(val[n.player] for _, val in combo)
            for a, (_, val) in zip(n.actions, combo):
                if val[n.player] == best:
                    out.append(({**merged, n.infoset: a}, val))
        return out

    values = {JointStrategy.of(s): v for s, v in solve(g.root)}
    return set(values), values


def undominated_spne(g: Efg) -> set[JointStrategy]:
    """SPNE whose action at every node is not weakly dominated by another
    action there, comparing across all SPNE continuations below the node."""
    spne, _ = backward_induction(g)
    keep = set(spne)
    below: dict[int, list[str]] = {}

    def collect(n: Node) -> list[str]:
        if n.terminal:
            return []
        out = []
        for c in n.children:
            out += ([c.infoset] if not c.terminal else []) + collect(c)
        below[id(n)] = out
        return out

    collect(g.root)
    for _, n in g.nodes():
        if n.terminal:
            continue
        conts = sorted({s.restrict(below[id(n)]) for s in spne})
        vec = {
            a: [play(g, dict(c.choices), child)[n.player] for c in conts] for a, child in zip(n.actions, n.children)
        }
        dominated = set()
        for a in n.actions:
            for b in n.actions:
                if a != b and all(x >= y for x, y in zip(vec[b], vec[a])) and vec[b] != vec[a]:
                    dominated.add(a)
        keep = {s for s in keep if s[n.infoset] not in dominated}
    return keep


# ---------------------------------------------------------------------------
# strategic form


@dataclass
class Nfg:
    players: tuple[str, ...]
    strategies: list[list[JointStrategy]]
    payoffs: dict[tuple[int, ...], tuple[Fraction, ...]]

    def __post_init__(self):
        want = math.prod(len(s) for s in self.strategies)
        if len(self.payoffs) != want:
            raise ValueError("payoff table does not match the strategy lists")

    def labels(self, p: int) -> list[str]:
        return ["/".join(a for _, a in s.choices) for s in self.strategies[p]]

    def matrix(self) -> list[list[tuple[Fraction, ...]]]:
        if len(self.strategies) != 2:
            raise ValueError("matrix view needs exactly two movers")
        return [[self.payoffs[(i, j)] for j in range(len(self.strategies[1]))] for i in range(len(self.strategies[0]))]

    def cell(self, *labels: str) -> tuple[Fraction, ...]:
        idx = tuple(self.labels(p).index(l) for p, l in enumerate(labels))
        return self.payoffs[idx]

    def joint(self, profile: tuple[int, ...]) -> JointStrategy:
        merged: dict = {}
        for p, i in enumerate(profile):
            merged.update(dict(self.strategies[p][i].choices))
        return JointStrategy.of(merged)


def to_nfg(g: Efg) -> Nfg:
    """Strategic form over information-set-measurable pure strategies. Rows
    are indexed by moving players in player order; non-movers still receive
    payoffs."""
    isets = g.infosets()
    movers = sorted(g.movers())
    strategies = []
    for p in movers:
        mine = sorted(name for name, i in isets.items() if i.player == p)
        opts = [isets[name].actions for name in mine]
        strategies.append([JointStrategy(tuple(zip(mine, combo))) for combo in itertools.product(*opts)])
    payoffs = {}
    for profile in itertools.product(*(range(len(s)) for s in strategies)):
        merged: dict = {}
        for p, i in enumerate(profile):
            merged.update(dict(strategies[p][i].choices))
        payoffs[profile] = play(g, merged)
    nfg = Nfg(tuple(g.players[p] for p in movers), strategies, payoffs)
    nfg.mover_index = movers
    return nfg


def pure_nash(nfg: Nfg) -> set[tuple[int, ...]]:
    """Cells where no mover gains by a unilateral deviation."""
    movers = getattr(nfg, "mover_index", list(range(len(nfg.strategies))))
    out = set()
    for profile, pay in nfg.payoffs.items():
        stable = True
        for p, who in enumerate(movers):
            for alt in range(len(nfg.strategies[p])):
                dev = profile[:p] + (alt,) + profile[p + 1 :]
                if nfg.payoffs[dev][who] > pay[who]:
                    stable = False
                    break
            if not stable:
                break
        if stable:
            out.add(profile)
    return out


def nash_strategies(g: Efg) -> set[JointStrategy]:
    nfg = to_nfg(g)
    return {nfg.joint(p) for p in pure_nash(nfg)}


# ---------------------------------------------------------------------------
# brute force oracle


@dataclass
class Compiled:
    infosets: list[str]
    owner: np.ndarray
    radices: np.ndarray
    child_start: np.ndarray
    children: np.ndarray
    node_infoset: np.ndarray
    terminal_payoff: np.ndarray
    scale: int
    nodes: list[Node]
    subtree_infosets: list[set[int]]


def compile_game(g: Efg) -> Compiled:
    isets = g.infosets()
    names = sorted(isets)
    index = {n: i for i, n in enumerate(names)}
    nodes = [n for _, n in g.nodes()]
    pos = {id(n): i for i, n in enumerate(nodes)}
    child_start = np.zeros(len(nodes), dtype=np.int64)
    children: list[int] = []
    node_infoset = np.full(len(nodes), -1, dtype=np.int64)
    for i, n in enumerate(nodes):
        child_start[i] = len(children)
        children += [pos[id(c)] for c in n.children]
        if not n.terminal:
            node_infoset[i] = index[n.infoset]
    dens = [p.denominator for n in nodes if n.terminal for p in n.payoff]
    scale = math.lcm(*dens) if dens else 1
    pay = np.zeros((len(nodes), len(g.players)), dtype=np.int64)
    for i, n in enumerate(nodes):
        if n.terminal:
            ints = [int(p * scale) for p in n.payoff]
            if max(abs(x) for x in ints) >= 2**62:
                raise OverflowError("payoffs too large for the int64 kernels")
            pay[i] = ints
    subtree: list[set[int]] = [set() for _ in nodes]
    for i in range(len(nodes) - 1, -1, -1):
        n = nodes[i]
        if not n.terminal:
            subtree[i].add(index[n.infoset])
            for c in n.children:
                subtree[i] |= subtree[pos[id(c)]]
    return Compiled(
        names,
        np.array([isets[n].player for n in names], dtype=np.int64),
        np.array([len(isets[n].actions) for n in names], dtype=np.int64),
        child_start,
        np.array(children or [0], dtype=np.int64),
        node_infoset,
        pay,
        scale,
        nodes,
        subtree,
    )


def brute_force_spne(g: Efg, cap: int = BRUTE_FORCE_CAP) -> set[JointStrategy]:
    """Exact SPNE by enumeration: the NE condition in every subgame for
    perfect-information games, NE of the whole game otherwise."""
    cg = compile_game(g)
    n_profiles = int(np.prod(cg.radices)) if len(cg.radices) else 1
    if n_profiles > cap:
        raise ValueError(f"{n_profiles} joint strategies exceed the brute-force cap of {cap}")
    if not cg.infosets:
        return {JointStrategy(())}
    roots = [i for i, n in enumerate(cg.nodes) if not n.terminal] if g.perfect_information else [0]
    mask = np.ones(n_profiles, dtype=bool)
    for r in roots:
        term = kernels.reach_terminals(cg.child_start, cg.children, cg.node_infoset, cg.radices, r)
        values = cg.terminal_payoff[term]
        for p in range(len(g.players)):
            axes = np.array(sorted(i for i in cg.subtree_infosets[r] if cg.owner[i] == p), dtype=np.int64)
            if len(axes):
                mask &= kernels.best_response_mask(np.ascontiguousarray(values[:, p]), cg.radices, axes)
    digits = _digits(cg.radices, np.flatnonzero(mask))
    return {
        JointStrategy(tuple((cg.infosets[i], _actions(g, cg, i)[d]) for i, d in enumerate(row))) for row in digits
    }


def _digits(radices: np.ndarray, idx: np.ndarray) -> np.ndarray:
    strides = np.ones(len(radices), dtype=np.int64)
    for i in range(len(radices) - 2, -1, -1):
        strides[i] = strides[i + 1] * radices[i + 1]
    return (idx[:, None] // strides[None, :]) % radices[None, :]


def _actions(g: Efg, cg: Compiled, i: int) -> tuple[str, ...]:
    return g.infosets()[cg.infosets[i]].actions


def solve(g: Efg) -> set[JointStrategy]:
    """Reference solver: backward induction with perfect information, pure
    NE of the strategic form otherwise."""
    if g.perfect_information:
        return backward_induction(g)[0]
    return nash_strategies(g)


# ---------------------------------------------------------------------------
# parameters


@dataclass(frozen=True)
class GameParams:
    alpha: Fraction
    eps: Fraction
    d: int
    k: int
    c: int
    f: int
    v: int
    p1: Fraction = Fraction(1)

    def __post_init__(self):
        object.__setattr__(self, "alpha", Fraction(self.alpha))
        object.__setattr__(self, "eps", Fraction(self.eps))
        object.__setattr__(self, "p1", Fraction(self.p1))
        if not 0 < self.eps < self.alpha:
            raise ValueError("need 0 < eps < alpha")
        if not 0 < self.d <= self.v:
            raise ValueError("need 0 < d <= v")
        if self.k <= 0 or self.c <= 0 or self.f < 1:
            raise ValueError("need k > 0, c > 0, f >= 1")
        if not 0 <= self.p1 <= 1:
            raise ValueError("p1 must lie in [0, 1]")

    @property
    def in_regime(self) -> bool:
        return (self.f + 1) * self.c > self.v >= self.d


def sample_params(rng, f: int | None = None, regime: bool | None = True) -> GameParams:
    """Random integer-valued parameters; `regime` True forces (f+1)c > v >= d,
    False forces d > (f+1)c, None leaves it to chance."""
    while True:
        ff = f if f is not None else rng.randint(1, 4)
        alpha = Fraction(rng.randint(2, 50))
        eps = Fraction(rng.randint(1, int(alpha) * 4 - 1), 4)
        k = rng.randint(1, 10)
        if regime is False:
            c = rng.randint(1, 10)
            v = rng.randint((ff + 1) * c + 1, (ff + 1) * c + 40)
            d = rng.randint((ff + 1) * c + 1, v)
        else:
            v = rng.randint(1, 60)
            c = rng.randint(v // (ff + 1) + 1, v + 5) if regime else rng.randint(1, v + 5)
            d = rng.randint(1, v)
        p = GameParams(alpha, eps, d, k, c, ff, v, Fraction(rng.randint(1, 8), 8))
        if regime is None or p.in_regime == regime:
            return p


# ---------------------------------------------------------------------------
# unilateral closing game


@dataclass(frozen=True)
class _Pub:
    warden: ActorId
    state: ChannelState

    @property
    def seq(self) -> int:
        return self.state.seq


SUBGAME_PLAYERS = ("P", "Q", "W1", "W2", "W3")


def subgame1_leaf(params: GameParams, a: int, b: int, pf: int) -> tuple[Fraction, ...]:
    """Payoffs (P, Q, W1, W2, W3) when W2 publishes a latest and b stale
    states and P submits pf proofs-of-fraud. The latest state gives P nothing
    and the stale one gives P d, so P's gain from cheating is exactly d."""
    f = params.f
    if a + b != f + 1 or not 0 <= pf <= b:
        raise ValueError("need a + b = f + 1 and 0 <= pf <= b")
    P, Q = party(0, "P"), party(1, "Q")
    ws = [warden(i) for i in range(3 * f + 1)]
    w1, w2, w3 = ws[:f], ws[f : 2 * f + 1], ws[2 * f + 1 :]
    vc = "VC:game"
    latest = ChannelState.of(vc, 2, {P: 0, Q: params.v})
    stale = ChannelState.of(vc, 1, {P: params.d, Q: params.v - params.d})
    w2_latest, w2_stale = w2[:a], w2[a:]
    pubs = (
        [_Pub(w, stale) for w in w1]
        + [_Pub(w, latest) for w in w2_latest]
        + [_Pub(w, stale) for w in w2_stale]
        + [_Pub(w, latest) for w in w3]
    )
    proven = w2_stale[:pf]
    s = settlement(
        ws=decide_ws(pubs, proven, f),
        pubs=pubs,
        proven=proven,
        f=f,
        v=params.v,
        fee=(2 * f + 1) * params.k,
        collateral=params.c,
        submitter=P,
        left=P,
        right=Q,
        endpoints=(P, Q),
    )
    gain = sum(s.slashed.values())

    def group(ws_):
        return Fraction(sum(s.fees.get(w, 0) - s.slashed.get(w, 0) for w in ws_))

    return (
        params.alpha + s.vc[P] - latest.balance(P) + gain,
        params.alpha + s.vc[Q] - latest.balance(Q),
        group(w1),
        group(w2),
        group(w3),
    )


def bloc_action(a: int, b: int, f: int) -> str:
    return f"{f}Pl,{a}Pl+{b}Po"


def build_subgame1(params: GameParams) -> Efg:
    """The warden bloc picks the split (a, b) of its f+1 members, then the
    closer P picks how many proofs-of-fraud to submit."""
    f = params.f
    branches = []
    for b in range(f + 2):
        a = f + 1 - b
        kids = [(f"PF={j}", leaf(*subgame1_leaf(params, a, b, j))) for j in range(b + 1)]
        branches.append((bloc_action(a, b, f), decide(0, f"P|b={b}", kids)))
    return Efg(SUBGAME_PLAYERS, decide(3, "W", branches), name="subgame1")


def honest_bloc(f: int) -> str:
    return bloc_action(f + 1, 0, f)


def subgame_values(params: GameParams) -> set[tuple[Fraction, Fraction]]:
    """(closer, counterparty) utilities over all SPNE of the closing subgame."""
    _, values = backward_induction(build_subgame1(params))
    return {(v[0], v[1]) for v in values.values()}


def expected_warden_utility(params: GameParams, a: int, b: int) -> tuple[Fraction, Fraction]:
    """(u_dish, u_h) for the W2 bloc when it cannot tell whether the closer can
    prove fraud: with probability p1 it can and proves every stale signature."""
    f = params.f
    if a + b != f + 1 or a < 0 or b < 0:
        raise ValueError("need a + b = f + 1")
    p1, p2 = params.p1, 1 - params.p1
    u_dish = (a * p1 + (f + 1) * p2) * params.k - b * params.c * p1
    return u_dish, Fraction((f + 1) * params.k)


# ---------------------------------------------------------------------------
# closing game


CLOSING_PLAYERS = ("B", "I")
BOB_ACTIONS = ("Uni", "Old", "New")
INGRID_ACTIONS = ("Ignore", "Agree", "Disagree")


def _worst_value(params: GameParams) -> tuple[Fraction, Fraction]:
    return min(subgame_values(params), key=lambda v: (v[1], -v[0]))


def closing_tree(params: GameParams, ingrid_knows: bool, sub: tuple[Fraction, Fraction], bob: int = 0, ingrid: int = 1, n: int = 2, others=()):
    a, e, d = params.alpha, params.eps, params.d
    closer, counter = sub

    def pay(ub, ui):
        out = [a] * n
        for o in others:
            out[o] = a
        out[bob], out[ingrid] = ub, ui
        return leaf(*out)

    uni_b = pay(closer - e, counter)
    uni_i = pay(counter, closer - e)
    responses = {
        "Old": {"Agree": pay(a + d, a - d), "Disagree": uni_i, "Ignore": uni_b},
        "New": {"Agree": pay(a, a), "Disagree": uni_i, "Ignore": uni_b},
    }

    def ingrid_node(kind):
        iset = f"I|{kind}" if ingrid_knows else "I|request"
        return decide(ingrid, iset, [(r, responses[kind][r]) for r in INGRID_ACTIONS])

    return decide(bob, "B", [("Uni", uni_b), ("Old", ingrid_node("Old")), ("New", ingrid_node("New"))])


def build_closing_game(params: GameParams, ingrid_knows: bool, sub_value: tuple[Fraction, Fraction] | None = None) -> Efg:
    """Bob's closing game. Unilateral branches use the closing subgame's
    equilibrium value with eps charged to whoever closes unilaterally."""
    sub = sub_value if sub_value is not None else _worst_value(params)
    name = "closing_perfect" if ingrid_knows else "closing_imperfect"
    return Efg(CLOSING_PLAYERS, closing_tree(params, ingrid_knows, sub), name=name)


def build_multihop_closing_game(params: GameParams, hops: int, ingrid_knows: bool) -> Efg:
    """Closing game started by the last party P_n against its neighbour
    P_{n-1}. Every other party is a player whose channels are unaffected."""
    if hops < 2:
        raise ValueError("hops must be >= 2")
    players = tuple(f"P{i}" for i in range(hops + 1))
    bob, ingrid = hops, hops - 1
    others = tuple(i for i in range(hops + 1) if i not in (bob, ingrid))
    root = closing_tree(params, ingrid_knows, _worst_value(params), bob, ingrid, hops + 1, others)
    return Efg(players, root, name=f"closing_{hops}hop")


def reduce_dummies(g: Efg) -> Efg:
    """Drop players who never move and get the same payoff at every leaf."""
    movers = g.movers()
    terms = [n.payoff for _, n in g.terminals()]
    keep = [p for p in range(len(g.players)) if p in movers or len({t[p] for t in terms}) > 1]
    remap = {old: new for new, old in enumerate(keep)}

    def copy(n: Node) -> Node:
        if n.terminal:
            return Node(payoff=tuple(n.payoff[p] for p in keep))
        return Node(remap[n.player], n.infoset, n.actions, tuple(copy(c) for c in n.children))

    return Efg(tuple(g.players[p] for p in keep), copy(g.root), name=g.name + "/reduced")


def isomorphic(g1: Efg, g2: Efg) -> bool:
    """Same tree shape, action labels, payoffs and information partition, up
    to a renaming of players (by order of first move) and information sets."""
    if len(g1.players) != len(g2.players):
        return False
    pmap: dict[int, int] = {}
    imap: dict[str, str] = {}

    def order(g):
        seen = []
        for _, n in g.nodes():
            if not n.terminal and n.player not in seen:
                seen.append(n.player)
        rest = [p for p in range(len(g.players)) if p not in seen]
        return seen + rest

    for a, b in zip(order(g1), order(g2)):
        pmap[a] = b

    def same(x: Node, y: Node) -> bool:
        if x.terminal != y.terminal:
            return False
        if x.terminal:
            return all(x.payoff[p] == y.payoff[pmap[p]] for p in range(len(x.payoff)))
        if pmap[x.player] != y.player or x.actions != y.actions:
            return False
        if imap.setdefault(x.infoset, y.infoset) != y.infoset:
            return False
        return all(same(c, e) for c, e in zip(x.children, y.children))

    if not same(g1.root, g2.root):
        return False
    return len(set(imap.values())) == len(imap)


# ---------------------------------------------------------------------------
# security checks


def equilibria_with_values(g: Efg) -> dict[JointStrategy, tuple[Fraction, ...]]:
    return {s: play(g, s) for s in solve(g)}


def check_security(params: GameParams) -> bool:
    """Every main party gets at least alpha - eps under every equilibrium of
    the closing subgame and of both closing games built on each of its
    equilibrium values."""
    floor = params.alpha - params.eps
    for closer, counter in subgame_values(params):
        if closer < floor or counter < floor:
            return False
        for knows in (False, True):
            g = build_closing_game(params, knows, (closer, counter))
            for vals in equilibria_with_values(g).values():
                if min(vals) < floor:
                    return False
    return True


def bloc_honest_in_spne(params: GameParams) -> bool:
    """Every SPNE of the closing subgame has the bloc publishing honestly."""
    spne, _ = backward_induction(build_subgame1(params))
    return bool(spne) and all(s["W"] == honest_bloc(params.f) for s in spne)


def cheating_spne(params: GameParams) -> set[JointStrategy]:
    f = params.f
    spne, _ = backward_induction(build_subgame1(params))
    return {s for s in spne if s["W"] == bloc_action(0, f + 1, f) and s[f"P|b={f + 1}"] == "PF=0"}


# ---------------------------------------------------------------------------
# opening game


def opening_outcome(d: int, d_prime: int, t: int) -> dict[str, int]:
    """Nets when the second channel is locked with d_prime instead of d.

    The first channel moves min(t, d) from Alice to Ingrid and the second
    moves min(t, d_prime) from Ingrid to Bob, for a VC payment of t."""
    paid = min(t, d)
    delivered = min(t, d_prime)
    return {"alice": delivered - paid, "ingrid": paid - delivered}


def opening_worst_case(d: int, d_prime: int) -> dict[str, int]:
    top = max(d, d_prime)
    outs = [opening_outcome(d, d_prime, t) for t in range(top + 1)]
    return {who: min(o[who] for o in outs) for who in ("alice", "ingrid")}


def check_opening_game(params: GameParams, deviations: Iterable[int] | None = None) -> bool:
    """Honest opening is the only rational choice: every inconsistent lock
    leaves one of the colluders strictly worse off in the worst case, while the
    honest lock leaves both whole."""
    d = params.d
    devs = list(deviations) if deviations is not None else [x for x in range(0, 2 * d + 2)]
    honest = opening_worst_case(d, d)
    if min(honest.values()) < 0:
        return False
    for dp in devs:
        if dp == d:
            continue
        if min(opening_worst_case(d, dp).values()) >= 0:
            return False
    return True


# ---------------------------------------------------------------------------
# text dumps


def _fmt(x: Fraction) -> str:
    return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"


def dump_game(g: Efg) -> str:
    lines = [f"{g.name}: players {', '.join(g.players)}"]

    def walk(n: Node, depth: int, label: str):
        pad = "  " * depth
        if n.terminal:
            lines.append(f"{pad}{label} -> ({', '.join(_fmt(p) for p in n.payoff)})")
            return
        lines.append(f"{pad}{label}[{g.players[n.player]} @ {n.infoset}]")
        for a, c in zip(n.actions, n.children):
            walk(c, depth + 1, a)

    walk(g.root, 0, "root")
    return "\n".join(lines) + "\n"


def format_nfg(nfg: Nfg) -> str:
    rows, cols = nfg.labels(0), nfg.labels(1)
    table = [[""] + cols]
    for i, r in enumerate(rows):
        table.append([r] + ["(" + ", ".join(_fmt(x) for x in nfg.payoffs[(i, j)]) + ")" for j in range(len(cols))])
    widths = [max(len(row[c]) for row in table) for c in range(len(table[0]))]
    return "\n".join("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip() for row in table) + "\n"
