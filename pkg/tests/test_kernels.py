import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wardenvc import _kernels_py as py
from wardenvc import gametheory as gt

cy = pytest.importorskip("wardenvc._kernels")


def _random_game(draw_ints):
    """Perfect-information tree with up to a few hundred joint strategies."""
    rng = np.random.default_rng(draw_ints)
    counter = iter(range(10**6))

    def node(depth):
        if depth == 0 or rng.random() < 0.3:
            return gt.leaf(*rng.integers(-5, 6, size=2))
        acts = [f"a{i}" for i in range(rng.integers(1, 4))]
        return gt.decide(int(rng.integers(0, 2)), f"n{next(counter)}", [(a, node(depth - 1)) for a in acts])

    return gt.Efg(("X", "Y"), node(3))


def test_backend_selected():
    assert gt.KERNEL_BACKEND in ("cython", "numpy")
    assert cy.BACKEND == "cython" and py.BACKEND == "numpy"


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31))
def test_backends_agree(seed):
    g = _random_game(seed)
    cg = gt.compile_game(g)
    if not cg.infosets or int(np.prod(cg.radices)) > 5000:
        return
    for start in range(len(cg.nodes)):
        if cg.nodes[start].terminal:
            continue
        t_py = py.reach_terminals(cg.child_start, cg.children, cg.node_infoset, cg.radices, start)
        t_cy = cy.reach_terminals(cg.child_start, cg.children, cg.node_infoset, cg.radices, start)
        assert np.array_equal(t_py, t_cy)
        vals = np.ascontiguousarray(cg.terminal_payoff[t_py][:, 0])
        for axes in ([], [0], list(range(len(cg.radices)))):
            ax = np.array(axes, dtype=np.int64)
            assert np.array_equal(py.best_response_mask(vals, cg.radices, ax), cy.best_response_mask(vals, cg.radices, ax))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31))
def test_brute_force_equals_backward_induction_on_random_trees(seed):
    g = _random_game(seed)
    assert gt.brute_force_spne(g) == gt.backward_induction(g)[0]


def test_profile_digits():
    d = py.profile_digits(np.array([2, 3]))
    assert d.tolist() == [[0, 0], [0, 1], [0, 2], [1, 0], [1, 1], [1, 2]]
