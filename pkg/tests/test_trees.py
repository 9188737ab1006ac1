import math
import random

import numpy as np
import pytest

from treepack import (
    EnumerationCapError,
    InfeasibleError,
    IncidenceView,
    Network,
    OracleScaleError,
    Tree,
    enumerate_trees,
    exact_min_steiner,
    min_arborescence,
    tree_cost,
    validate_tree,
)
from treepack.net import Overlay
from treepack.gen import random_scenario

from conftest import brute_force_min_cost, brute_force_trees


def star_overlay():
    net = Network([
        ("s", "r1", 5.0, 0.0),
        ("s", "r2", 5.0, 0.0),
        ("r1", "r2", 5.0, 0.0),
        ("r2", "r1", 5.0, 0.0),
    ])
    return Overlay.mirror(net)


def test_validate_tree_cases():
    ov = star_overlay()
    good = Tree(ov, [0, 1])
    assert validate_tree(good, "s", {"r1", "r2"}, ov)

    two_parents = Tree(ov, [0, 1, 3])  # r1 fed by both s and r2
    rep = validate_tree(two_parents, "s", {"r1", "r2"}, ov)
    assert not rep and any("in-degree" in p for p in rep.problems)

    missing = Tree(ov, [0])
    rep = validate_tree(missing, "s", {"r1", "r2"}, ov)
    assert not rep and any("receiver unreachable" in p for p in rep.problems)

    rep = validate_tree([0, 99], "s", {"r1"}, ov)
    assert not rep and any("dangling" in p for p in rep.problems)


def test_leaf_must_be_receiver(toy_session):
    toy, s, ov = toy_session
    # 1->2, 1->3 plus a dead-end branch to the relay node 4
    rep = validate_tree(Tree(ov, [0, 1, 2]), s.source, s.receivers, ov)
    assert not rep and any("leaf" in p for p in rep.problems)


def test_tree_cost_examples(toy_session):
    toy, s, ov = toy_session
    t = Tree(ov, [2, 3, 4])
    assert tree_cost(t, np.ones(5)) == 3.0
    assert tree_cost(t, np.zeros(5)) == 0.0
    rng = random.Random(0)
    for _ in range(50):
        prices = np.array([rng.uniform(0, 2) for _ in range(5)])
        expected = sum(prices[list(ov.edges[eid].path)].sum() for eid in t.key)
        assert tree_cost(t, prices) == pytest.approx(expected)
    with pytest.raises(KeyError):
        tree_cost(t, {0: 1.0})  # missing link prices


def test_canonical_keys_injective(toy_session):
    toy, s, ov = toy_session
    trees = enumerate_trees(ov, s.source, s.receivers)
    keys = {t.key for t in trees}
    assert len(keys) == len(trees)
    assert all(t.key == tuple(sorted(t.edge_ids)) for t in trees)


def test_enumerate_toy_and_counts(toy_session):
    toy, s, ov = toy_session
    trees = enumerate_trees(ov, s.source, s.receivers)
    assert len(trees) == 4  # the four distribution trees of the toy
    assert {t.key for t in trees} == {(0, 1), (0, 2, 4), (1, 2, 3), (2, 3, 4)}


def test_enumerate_single_receiver():
    net = Network([("s", "r", 1.0, 0.0)])
    ov = Overlay.mirror(net)
    trees = enumerate_trees(ov, "s", {"r"})
    assert len(trees) == 1


@pytest.mark.parametrize("n_recv", [2, 3])
def test_enumerate_complete_overlay_count(n_recv):
    # spanning arborescences of a complete digraph on L+1 nodes: (L+1)^(L-1)
    nodes = ["s"] + [f"r{i}" for i in range(n_recv)]
    links = [
        (a, b, 1.0, 0.0) for a in nodes for b in nodes if a != b and b != "s"
    ]
    ov = Overlay.mirror(Network(links))
    trees = enumerate_trees(ov, "s", set(nodes) - {"s"})
    assert len(trees) == (n_recv + 1) ** (n_recv - 1)


def test_enumerate_cap_is_loud(toy_session):
    toy, s, ov = toy_session
    with pytest.raises(EnumerationCapError):
        enumerate_trees(ov, s.source, s.receivers, cap=2)


def test_enumerate_matches_subset_bruteforce():
    for seed in range(6):
        sc = random_scenario(seed, n_nodes=6, edge_prob=0.3, max_receivers=3,
                             tree_cap=2000)
        s = sc.sessions[0]
        ov = sc.overlays[s.id]
        if ov.n_edges > 14:
            continue
        ours = {t.key for t in enumerate_trees(ov, s.source, s.receivers)}
        brute = set(brute_force_trees(ov, s.source, s.receivers))
        assert ours == brute


def test_exact_min_steiner_star_and_ties(toy_session):
    toy, s, ov = toy_session
    # direct edges cheap: the two-edge star wins
    t = exact_min_steiner(ov, s.source, s.receivers, np.array([0.1, 0.1, 1, 1, 1]))
    assert t.key == (0, 1)
    # all zero: lexicographically smallest valid tree
    t0 = exact_min_steiner(ov, s.source, s.receivers, np.zeros(5))
    assert t0.key == (0, 1)
    assert tree_cost(t0, np.zeros(5)) == 0.0
    # relaying through node 4 cheaper: Steiner-node tree wins
    t4 = exact_min_steiner(ov, s.source, s.receivers, np.array([1.0, 1.0, 0.1, 0.1, 0.1]))
    assert t4.key == (2, 3, 4)


def test_exact_min_steiner_matches_bruteforce():
    checked = 0
    for seed in range(30):
        sc = random_scenario(seed, n_nodes=6, edge_prob=0.3, max_receivers=3,
                             tree_cap=2000)
        s = sc.sessions[0]
        ov = sc.overlays[s.id]
        if ov.n_edges > 14:
            continue
        rng = random.Random(seed)
        prices = np.array(
            [rng.choice([0.0, rng.uniform(0, 2)]) for _ in range(sc.network.n_links)]
        )
        want_cost, want_key = brute_force_min_cost(ov, s.source, s.receivers, prices)
        got = exact_min_steiner(ov, s.source, s.receivers, prices)
        assert tree_cost(got, prices) == pytest.approx(want_cost, abs=1e-9)
        assert got.key == want_key  # exact lexicographic tie-breaking
        checked += 1
    assert checked >= 10


def test_exact_min_steiner_guards():
    nodes = [f"n{i}" for i in range(14)]
    links = [(nodes[i], nodes[i + 1], 1.0, 0.0) for i in range(13)]
    links += [(nodes[0], nodes[i], 1.0, 0.0) for i in range(2, 13)]
    ov = Overlay.mirror(Network(links))
    with pytest.raises(OracleScaleError):
        exact_min_steiner(ov, "n0", {"n13"}, np.zeros(len(links)))
    net = Network([("a", "b", 1.0, 0.0), ("c", "d", 1.0, 0.0)])
    ov2 = Overlay.mirror(net)
    with pytest.raises(InfeasibleError):
        exact_min_steiner(ov2, "a", {"d"}, np.zeros(2))


def test_min_arborescence_uniform_and_zero():
    nodes = ["s", "a", "b"]
    links = [(x, y, 1.0, 0.0) for x in nodes for y in nodes if x != y]
    ov = Overlay.mirror(Network(links))
    t = min_arborescence(ov, "s", np.full(len(links), 0.7))
    assert len(t.key) == 2
    assert tree_cost(t, np.full(len(links), 0.7)) == pytest.approx(1.4)
    t0 = min_arborescence(ov, "s", np.zeros(len(links)))
    assert tree_cost(t0, np.zeros(len(links))) == 0.0


def test_min_arborescence_matches_enumeration():
    rng = random.Random(9)
    nodes = ["s", "a", "b", "c", "d"]
    links = [(x, y, 1.0, 0.0) for x in nodes for y in nodes if x != y and y != "s"]
    net = Network(links)
    ov = Overlay.mirror(net)
    spanning = enumerate_trees(ov, "s", set(nodes) - {"s"}, cap=50_000)
    for _ in range(25):
        prices = np.array([rng.uniform(0, 3) for _ in range(net.n_links)])
        got = min_arborescence(ov, "s", prices)
        best = min(tree_cost(t, prices) for t in spanning)
        assert tree_cost(got, prices) == pytest.approx(best, abs=1e-9)
        assert validate_tree(got, "s", set(nodes) - {"s"}, ov)


def test_min_arborescence_unreachable():
    net = Network([("s", "a", 1.0, 0.0), ("b", "a", 1.0, 0.0)])
    ov = Overlay.mirror(net)
    with pytest.raises(InfeasibleError):
        min_arborescence(ov, "s", np.zeros(2))


def test_steiner_never_beaten_by_spanning(toy_session):
    toy, s, ov = toy_session
    rng = random.Random(11)
    trees = enumerate_trees(ov, s.source, s.receivers)
    for _ in range(40):
        prices = np.array([rng.uniform(0, 2) for _ in range(5)])
        opt = exact_min_steiner(ov, s.source, s.receivers, prices)
        span = min_arborescence(ov, s.source, prices)
        assert tree_cost(opt, prices) <= tree_cost(span, prices) + 1e-12
        for t in trees:
            assert tree_cost(t, prices) >= tree_cost(opt, prices) - 1e-12


def test_incidence_view(toy_session):
    toy, s, ov = toy_session
    trees = enumerate_trees(ov, s.source, s.receivers, session_id=s.id)
    view = IncidenceView(trees)
    for t in trees:
        for lid, _ in t.usage:
            assert (s.id, t.key) in view.trees_on(lid)
    rates = {(s.id, trees[0].key): 1.0, (s.id, trees[1].key): 0.5}
    flow = view.flow(rates, toy.network.n_links)
    manual = np.zeros(toy.network.n_links)
    for t, r in [(trees[0], 1.0), (trees[1], 0.5)]:
        for lid, cnt in t.usage:
            manual[lid] += cnt * r
    assert np.allclose(flow, manual)
