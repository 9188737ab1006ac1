"""Shared fixtures and independent brute-force oracles.

The brute-force helpers here deliberately avoid the package's own search
code: trees are found by filtering raw edge subsets, so oracle tests check
two unrelated routes against each other.
"""

import itertools

import numpy as np
import pytest

from treepack import fig_tree_toy
from treepack.gen import random_scenario


def subset_is_tree(overlay, edge_ids, source, receivers):
    """Validity check written from scratch over a raw edge id subset."""
    edges = [overlay.edges[i] for i in edge_ids]
    if not edges:
        return False
    heads = [e.head for e in edges]
    if len(set(heads)) != len(heads):  # duplicate in-edges
        return False
    if source in heads:
        return False
    nodes = {source}
    remaining = list(edges)
    ordered = []
    while remaining:  # peel edges outward from the source
        progress = False
        for e in list(remaining):
            if e.tail in nodes:
                nodes.add(e.head)
                ordered.append(e)
                remaining.remove(e)
                progress = True
        if not progress:
            return False  # disconnected or cyclic
    if not set(receivers) <= nodes:
        return False
    tails = {e.tail for e in edges}
    for v in nodes - tails - {source}:
        if v not in set(receivers):
            return False  # dead-end relay
    return source in tails


def brute_force_trees(overlay, source, receivers, max_edges=16):
    """Every valid tree by raw subset enumeration (tiny instances only)."""
    m = overlay.n_edges
    assert m <= max_edges, "instance too large for subset enumeration"
    found = []
    for r in range(1, m + 1):
        for combo in itertools.combinations(range(m), r):
            if subset_is_tree(overlay, combo, source, receivers):
                found.append(tuple(combo))
    return found


def brute_force_min_cost(overlay, source, receivers, prices):
    """(min cost, lexicographically smallest optimal key) by brute force."""
    w = overlay.edge_costs(np.asarray(prices, dtype=float))
    best_cost, best_key = None, None
    for key in brute_force_trees(overlay, source, receivers):
        cost = sum(w[i] for i in key)
        if best_cost is None or cost < best_cost - 1e-12 or (
            abs(cost - best_cost) <= 1e-12 and key < best_key
        ):
            best_cost, best_key = cost, key
    return best_cost, best_key


@pytest.fixture
def toy():
    return fig_tree_toy()


@pytest.fixture
def toy_session(toy):
    s = toy.sessions[0]
    return toy, s, toy.overlays[s.id]


def small_random_scenarios(count, start_seed=0, **kwargs):
    out = []
    seed = start_seed
    while len(out) < count:
        out.append(random_scenario(seed, **kwargs))
        seed += 1
    return out
