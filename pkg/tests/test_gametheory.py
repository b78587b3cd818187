import random
from fractions import Fraction as F

import pytest
from hypothesis import given, settings, strategies as st

from wardenvc import gametheory as gt

P = gt.GameParams(F(20), F(1), d=5, k=2, c=4, f=3, v=10)
NEG = gt.GameParams(F(20), F(1), d=15, k=2, c=2, f=2, v=20)


def closing_table(p):
    """The strategic form exactly as tabulated, entry by entry."""
    a, e, d = p.alpha, p.eps, p.d
    return {
        ("Uni", "Ignore"): (a - e, a),
        ("Uni", "Agree"): (a - e, a),
        ("Uni", "Disagree"): (a - e, a),
        ("Old", "Ignore"): (a - e, a),
        ("Old", "Agree"): (a + d, a - d),
        ("Old", "Disagree"): (a, a - e),
        ("New", "Ignore"): (a - e, a),
        ("New", "Agree"): (a, a),
        ("New", "Disagree"): (a, a - e),
    }


def leaf_oracle(p, a, b, j):
    """Hand-derived leaf of the closing subgame. Publications arrive W1
    (stale), W2 latest, W2 stale, W3 (latest); the j proven wardens drop
    out, so the first 2f+1 eligible are W1, the unproven W2 and the first j
    members of W3 (all f of them when j > f)."""
    f = p.f
    stale_ws = a == 0 and j == 0
    if j >= f + 1:
        up, uq = p.alpha + j * p.c, p.alpha
    else:
        up = p.alpha + (p.d if stale_ws else 0) + j * p.c
        uq = p.alpha - (p.d if stale_ws else 0)
    return (up, uq, F(f * p.k), F((f + 1 - j) * p.k - j * p.c), F(min(j, f) * p.k))


def test_closing_table_entries():
    nfg = gt.to_nfg(gt.build_closing_game(P, ingrid_knows=False))
    assert len(nfg.strategies[0]) == len(nfg.strategies[1]) == 3
    for (r, c), want in closing_table(P).items():
        assert nfg.cell(r, c) == want


def test_subgame_leaf_examples():
    c, k = P.c, P.k
    assert gt.subgame1_leaf(P, 0, 4, 4)[3] == -4 * c
    assert gt.subgame1_leaf(P, 0, 4, 4)[0] == P.alpha + 4 * c
    assert gt.subgame1_leaf(P, 4, 0, 0)[3] == 4 * k
    assert gt.subgame1_leaf(P, 2, 2, 2)[3] == 2 * k - 2 * c <= 4 * k


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 4), st.integers(0, 10**6))
def test_subgame_leaves_match_oracle(f, seed):
    p = gt.sample_params(random.Random(seed), f=f, regime=None)
    for b in range(f + 2):
        for j in range(b + 1):
            assert gt.subgame1_leaf(p, f + 1 - b, b, j) == leaf_oracle(p, f + 1 - b, b, j)


def test_subgame_leaf_rejects_bad_split():
    with pytest.raises(ValueError):
        gt.subgame1_leaf(P, 1, 1, 0)
    with pytest.raises(ValueError):
        gt.subgame1_leaf(P, 2, 2, 3)


def test_subgame_spne_regime():
    spne, _ = gt.backward_induction(gt.build_subgame1(P))
    assert P.in_regime
    assert {s["W"] for s in spne} == {gt.honest_bloc(3)}
    s = next(iter(spne))
    assert all(s[f"P|b={b}"] == f"PF={b}" for b in range(1, 5))


def test_negative_regime_admits_cheating():
    assert NEG.d > (NEG.f + 1) * NEG.c
    assert gt.cheating_spne(NEG)
    assert not gt.bloc_honest_in_spne(NEG)
    assert not gt.check_security(NEG)


def test_single_leaf_game():
    g = gt.Efg(("X",), gt.leaf(3))
    spne, values = gt.backward_induction(g)
    assert spne == {gt.JointStrategy(())}
    assert values[gt.JointStrategy(())] == (3,)
    assert gt.brute_force_spne(g) == spne


def test_backward_induction_rejects_imperfect_info():
    with pytest.raises(ValueError):
        gt.backward_induction(gt.build_closing_game(P, False))


def test_imperfect_info_old_ignore_is_equilibrium():
    eq = gt.nash_strategies(gt.build_closing_game(P, False))
    old_ignore = gt.JointStrategy.of({"B": "Old", "I|request": "Ignore"})
    assert old_ignore in eq
    g = gt.build_closing_game(P, False)
    assert gt.play(g, old_ignore) == (P.alpha - P.eps, P.alpha)


def test_ignore_weakly_dominates_for_ingrid():
    nfg = gt.to_nfg(gt.build_closing_game(P, False))
    cols = nfg.labels(1)
    ig = cols.index("Ignore")
    for j in range(3):
        column = [nfg.payoffs[(i, j)][1] for i in range(3)]
        ignore = [nfg.payoffs[(i, ig)][1] for i in range(3)]
        assert all(x >= y for x, y in zip(ignore, column))


def test_closing_perfect_information():
    g = gt.build_closing_game(P, True)
    und = gt.undominated_spne(g)
    assert {(s["B"], s["I|New"]) for s in und} == {("New", "Agree"), ("New", "Ignore")}
    values = {gt.play(g, s) for s in und}
    assert values == {(P.alpha, P.alpha), (P.alpha - P.eps, P.alpha)}
    # the full SPNE set also holds Bob's ties at (alpha - eps, alpha)
    spne, vals = gt.backward_induction(g)
    assert und < spne
    assert all(v == (P.alpha - P.eps, P.alpha) for s, v in vals.items() if s not in und)


def test_new_agree_payoff():
    g = gt.build_closing_game(P, True)
    assert gt.play(g, {"B": "New", "I|New": "Agree", "I|Old": "Ignore"}) == (P.alpha, P.alpha)


def test_brute_force_matches_solvers():
    for g in (gt.build_subgame1(P), gt.build_closing_game(P, True), gt.build_closing_game(P, False)):
        assert gt.brute_force_spne(g) == gt.solve(g)


def _pennies():
    def resp(a):
        return [(b, gt.leaf(1, -1) if a == b else gt.leaf(-1, 1)) for b in ("H", "T")]

    return gt.Efg(("X", "Y"), gt.decide(0, "x", [(a, gt.decide(1, "y", resp(a))) for a in ("H", "T")]))


def test_matching_pennies_has_no_pure_equilibrium():
    g = _pennies()
    assert not g.perfect_information
    assert gt.brute_force_spne(g) == set()
    assert gt.nash_strategies(g) == set()


def test_brute_force_cap():
    with pytest.raises(ValueError, match="cap"):
        gt.brute_force_spne(gt.build_subgame1(P), cap=10)


def test_expected_warden_utility_examples():
    assert gt.expected_warden_utility(P, 4, 0) == (8, 8)
    p0 = gt.GameParams(F(20), F(1), 5, 2, 4, 3, 10, p1=0)
    for a in range(5):
        assert gt.expected_warden_utility(p0, a, 4 - a)[0] == 4 * p0.k


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 4), st.integers(0, 10**6))
def test_expected_warden_utility_matches_leaves(f, seed):
    p = gt.sample_params(random.Random(seed), f=f, regime=None)
    for b in range(f + 2):
        a = f + 1 - b
        knows = gt.subgame1_leaf(p, a, b, b)[3]
        blind = gt.subgame1_leaf(p, a, b, 0)[3]
        u_dish, u_h = gt.expected_warden_utility(p, a, b)
        assert u_dish == p.p1 * knows + (1 - p.p1) * blind
        assert u_h == gt.subgame1_leaf(p, f + 1, 0, 0)[3]


def test_params_validation():
    with pytest.raises(ValueError):
        gt.GameParams(F(1), F(1), 1, 1, 1, 1, 1)
    with pytest.raises(ValueError):
        gt.GameParams(F(5), F(1), 0, 1, 1, 1, 1)
    with pytest.raises(ValueError):
        gt.GameParams(F(5), F(1), 2, 1, 1, 1, 1)
    with pytest.raises(ValueError):
        gt.GameParams(F(5), F(1), 1, 0, 1, 1, 1)
    with pytest.raises(ValueError):
        gt.GameParams(F(5), F(1), 1, 1, 1, 1, 1, p1=F(2))


def test_check_security_regime():
    assert gt.check_security(P)


def test_opening_game():
    d = 5
    assert gt.opening_worst_case(d, d) == {"alice": 0, "ingrid": 0}
    assert gt.opening_worst_case(d, d + 2)["ingrid"] < 0
    assert gt.opening_worst_case(d, d - 2)["alice"] < 0
    assert gt.check_opening_game(P)


def test_multihop_reduces_to_two_hop():
    two = gt.build_closing_game(P, False)
    for hops in (3, 4, 5):
        g = gt.build_multihop_closing_game(P, hops, False)
        assert len(g.players) == hops + 1
        red = gt.reduce_dummies(g)
        assert len(red.players) == 2
        assert gt.isomorphic(red, two)
    assert not gt.isomorphic(gt.build_closing_game(P, True), two)


def test_isomorphism_sees_payoffs():
    other = gt.GameParams(F(21), F(1), 5, 2, 4, 3, 10)
    assert not gt.isomorphic(gt.build_closing_game(other, False), gt.build_closing_game(P, False))


def test_constructed_games_are_well_formed():
    games = [gt.build_subgame1(P), gt.build_closing_game(P, True), gt.build_closing_game(P, False)]
    games.append(gt.build_multihop_closing_game(P, 3, True))
    for g in games:
        hs = g.histories()
        assert all(h[:-1] in hs for h in hs if h)
        for iset in g.infosets().values():
            acts = {g_node.actions for h, g_node in g.nodes() if h in iset.histories}
            assert len(acts) == 1


def test_malformed_games_rejected():
    bad = gt.Node(player=0, infoset="x", actions=("a", "a"), children=(gt.leaf(1), gt.leaf(2)))
    with pytest.raises(ValueError):
        gt.Efg(("X",), bad)
    mixed = gt.decide(0, "r", [("l", gt.decide(1, "s", [("a", gt.leaf(0, 0))])), ("r", gt.decide(0, "s", [("a", gt.leaf(0, 0))]))])
    with pytest.raises(ValueError):
        gt.Efg(("X", "Y"), mixed)
    with pytest.raises(ValueError):
        gt.Efg(("X", "Y"), gt.leaf(1))


def test_dumps():
    text = gt.dump_game(gt.build_closing_game(P, False))
    assert "I|request" in text and text.endswith("\n")
    table = gt.format_nfg(gt.to_nfg(gt.build_closing_game(P, False)))
    assert table.splitlines()[0].split() == ["Ignore", "Agree", "Disagree"]
