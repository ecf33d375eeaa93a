import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lobtree.measures import JumpDistribution, OrderBook
from lobtree.trees import (GREEN, Capped, ColoredTree, barrier_tree, clamp_labels, contour,
                           explore, explore_forest, exploration_to_book_path, hits, killed_set,
                           sample_barrier_tree, sample_conditioned, sample_forest, sample_tree,
                           visits, BudgetExhausted, acceptance_rate)

REF = JumpDistribution.parse("-1:0.3,1:0.7")
UP = JumpDistribution.degenerate_up()
DEEP = JumpDistribution.parse("-3:0.1,-1:0.2,0:0.1,1:0.6")


def tree(parents, labels):
    return ColoredTree.from_parents(parents, labels)


def brute_explore(t: ColoredTree):
    """Recoloring map applied literally, one step at a time (oracle)."""
    n = len(t)
    color = ["white"] * n
    color[0] = "green"
    kids = {v: [int(c) for c in t.children(v)] for v in range(n)}
    steps = []
    while True:
        greens = [v for v in range(n) if color[v] == "green"]
        if not greens:
            break
        top = max(t.label[v] for v in greens)
        gamma = max(v for v in greens if t.label[v] == top)  # last in depth-first order
        if t.label[gamma] < t.root_label:
            break
        white = [c for c in kids[gamma] if color[c] == "white"]
        if white:
            color[white[0]] = "green"
            steps.append((white[0], 1))
        else:
            color[gamma] = "red"
            steps.append((gamma, 2))
    return steps


def test_hand_traces():
    assert explore(tree([-1], [1])).tau == 1
    tr = explore(tree([-1, 0], [1, 2]))
    assert tr.tau == 3 and list(tr.kinds) == [1, 2, 2] and list(tr.nodes) == [1, 1, 0]
    tr = explore(tree([-1, 0], [1, 0]))
    assert tr.tau == 2 and list(tr.kinds) == [1, 2] and tr.n_killed == 1


def test_killed_examples():
    assert list(killed_set(tree([-1, 0], [1, 0]))) == [1]
    assert list(killed_set(tree([-1, 0, 1], [1, 0, -1]))) == [1]
    t = sample_tree(1, UP, 3)
    assert killed_set(t).size == 0
    assert np.array_equal(t.label, t.depth)


def test_barrier_examples():
    t = sample_tree(1, UP, 4)
    b = barrier_tree(t)
    assert np.array_equal(b.label, t.label) and np.array_equal(b.parent, t.parent)
    b = barrier_tree(tree([-1, 0, 1], [1, 0, 5]))
    assert len(b) == 2
    assert list(clamp_labels(tree([-1, 0], [1, -2])).label) == [1, 0]


def test_offspring_law():
    # children of the root across many trees: P(k) = 2^-(k+1)
    kids = np.array([len(sample_tree(1, UP, k, max_depth=2).children(0)) for k in range(20000)])
    for k, p in [(0, 0.5), (1, 0.25), (2, 0.125)]:
        est = np.mean(kids == k)
        assert abs(est - p) <= 4 * math.sqrt(p * (1 - p) / kids.size)
    assert abs(kids.mean() - 1.0) <= 4 * math.sqrt(2.0 / kids.size)


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 2**63 - 1), st.sampled_from([REF, DEEP]), st.integers(1, 3))
def test_explore_matches_brute_force(key, jumps, x):
    t = sample_barrier_tree(x, jumps, key, node_cap=400)
    if isinstance(t, Capped):
        return
    tr = explore(t)
    assert [(int(v), int(k)) for v, k in zip(tr.nodes, tr.kinds)] == brute_explore(t)
    assert tr.tau == 2 * tr.size_barrier - tr.n_killed - 1


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**63 - 1), st.sampled_from([REF, DEEP]))
def test_lazy_equals_eager(key, jumps):
    eager = sample_tree(1, jumps, key, node_cap=5000)
    lazy = sample_barrier_tree(1, jumps, key, node_cap=5000)
    if isinstance(eager, Capped) or isinstance(lazy, Capped):
        return
    b = barrier_tree(eager)
    assert np.array_equal(b.label, lazy.label) and np.array_equal(b.parent, lazy.parent)
    assert b.psi_star() <= eager.psi_star() <= eager.label[0] + eager.height() - 1


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**63 - 1))
def test_snapshots_differ_by_one_atom(key):
    t = sample_barrier_tree(2, REF, key, node_cap=300)
    if isinstance(t, Capped):
        return
    snaps = explore(t, record=True).snapshots
    assert len(snaps) == explore(t).tau + 1
    for a, b in zip(snaps, snaps[1:]):
        assert abs(a.mass() - b.mass()) == 1


def test_book_path_smallest():
    p = exploration_to_book_path(tree([-1], [1]), 1.0, np.random.default_rng(0))
    assert list(p.kinds) == [1, 2] and p.jump_count == 2 and p.height() == 1
    assert p.books()[-1].is_empty()


def test_book_path_deposits_match_killed():
    for key in range(200):
        t = sample_barrier_tree(1, REF, key, node_cap=2000)
        if isinstance(t, Capped):
            continue
        p = exploration_to_book_path(clamp_labels(t), 1.0, np.random.default_rng(key))
        assert p.deposited_below() == killed_set(t).size
        assert p.books()[-1].mass() == killed_set(t).size


def test_contour():
    c = contour(tree([-1], [1]))
    assert list(c) == [1, 0] and visits(c, 1) == 1 and not hits(c, 2)
    c = contour(tree([-1, 0, 0], [1, 2, 2]))
    assert list(c) == [1, 2, 1, 2, 1, 0]
    t = sample_tree(1, UP, 17)
    assert hits(contour(t), t.height()) and not hits(contour(t), t.height() + 1)


def test_forest():
    f = sample_forest(OrderBook(), REF, 1)
    assert f.roots.size == 0 and explore_forest(f)[0].size == 0
    f = sample_forest(OrderBook({1: 1}), REF, 1)
    assert f.roots.size == 1 and f.root_levels[0] == 1
    f = sample_forest(OrderBook({1: 2, 4: 1}), REF, 3)
    kinds, labels = explore_forest(f)
    assert np.count_nonzero(kinds == 2) - np.count_nonzero(kinds == 1) == 3
    assert labels.min() >= 0


def test_conditioned():
    s = sample_conditioned("psi_star", 0, REF, 1)
    assert s.acceptance_rate == 1.0
    rate, _ = acceptance_rate("psi_star", 0, REF, 1, 500)
    assert rate == 1.0
    s = sample_conditioned("height", 5, REF, 2)
    assert s.tree.height() > 5
    with pytest.raises(BudgetExhausted):
        sample_conditioned("height", 10**6, REF, 3, budget=100)
    # P(tau > u) decays no faster than u^-1/2: sqrt(u) * rate does not collapse
    r100, _ = acceptance_rate("tau", 100, REF, 4, 20000)
    r400, _ = acceptance_rate("tau", 400, REF, 5, 20000)
    assert math.sqrt(400) * r400 >= 0.5 * math.sqrt(100) * r100 > 0


def test_trace_csv():
    tr = explore(tree([-1, 0], [1, 2]))
    assert tr.to_csv().splitlines() == ["k,event,node_label", "1,green,2", "2,red,2", "3,red,1"]


def test_dump():
    assert tree([-1, 0], [1, 2]).dump() == "1 1 green\n  2 2 white"
