"""Distribution trees and the exact tree oracles.

A tree is a set of overlay edges forming an arborescence rooted at the
session source, reaching every receiver, with no dead-end branches (every
leaf is a receiver).  Out-of-session overlay nodes may appear as relays.

Oracles here are exact and guarded to desk-scale instances:

* ``enumerate_trees``      -- all valid trees (unique generation).
* ``exact_min_steiner``    -- optimal tree for given prices; ties broken by
                              lexicographically smallest canonical key.
* ``min_arborescence``     -- optimal *spanning* arborescence (contraction
                              algorithm), the separate-swarming oracle.
"""

from __future__ import annotations

import heapq
import itertools
import math
from collections import Counter

import numpy as np

from .errors import EnumerationCapError, InfeasibleError, OracleScaleError
from .net import Overlay

# exact_min_steiner / enumerate_trees refuse instances beyond this
NODE_GUARD = 12
EDGE_GUARD = 20
STATE_CAP = 1 << 20

_COST_EPS = 1e-9


class Tree:
    """Immutable edge set with cached incidence data."""

    __slots__ = ("session_id", "edge_ids", "key", "usage", "nodes", "pairs", "_out")

    def __init__(self, overlay: Overlay, edge_ids, session_id=None):
        ids = tuple(sorted(set(int(e) for e in edge_ids)))
        self.session_id = session_id
        self.edge_ids = frozenset(ids)
        self.key: tuple[int, ...] = ids
        counts = Counter()
        nodes = set()
        pairs = []
        out: dict[str, list[int]] = {}
        for eid in ids:
            e = overlay.edges[eid]
            counts.update(e.path)
            nodes.add(e.tail)
            nodes.add(e.head)
            pairs.append((e.tail, e.head))
            out.setdefault(e.tail, []).append(eid)
        self.usage: tuple[tuple[int, int], ...] = tuple(sorted(counts.items()))
        self.nodes = frozenset(nodes)
        self.pairs: tuple[tuple[str, str], ...] = tuple(sorted(pairs))
        self._out = {v: tuple(es) for v, es in out.items()}

    def out_edges(self, node: str) -> tuple[int, ...]:
        return self._out.get(node, ())

    def key_str(self) -> str:
        return "-".join(str(i) for i in self.key)

    def __eq__(self, other):
        return (
            isinstance(other, Tree)
            and self.key == other.key
            and self.session_id == other.session_id
        )

    def __hash__(self):
        return hash((self.session_id, self.key))

    def __repr__(self):
        return f"Tree({self.session_id!r}, {self.key})"


def tree_cost(tree: Tree, prices) -> float:
    """Total price of the physical links the tree occupies, with multiplicity.

    ``prices`` is either an array indexed by link id or a mapping; a missing
    price is an error.
    """
    total = 0.0
    if isinstance(prices, np.ndarray):
        for lid, cnt in tree.usage:
            if lid >= prices.shape[0]:
                raise KeyError(f"no price for link {lid}")
            total += cnt * prices[lid]
    else:
        for lid, cnt in tree.usage:
            if lid not in prices:
                raise KeyError(f"no price for link {lid}")
            total += cnt * prices[lid]
    return float(total)


def add_flow(flow: np.ndarray, tree: Tree, rate: float) -> None:
    """Accumulate the tree's link usage at the given rate into ``flow``.

    Single shared accumulation helper so the synchronous engine and the
    event simulator produce bit-identical flow vectors.
    """
    for lid, cnt in tree.usage:
        flow[lid] += cnt * rate


class ValidationReport:
    def __init__(self, problems):
        self.problems = list(problems)

    def __bool__(self):
        return not self.problems

    def __repr__(self):
        return f"ValidationReport(ok={bool(self)}, problems={self.problems})"


def validate_tree(tree, source: str, receivers, overlay: Overlay) -> ValidationReport:
    """Check the tree invariants; collects one message per violation.

    Accepts a Tree or a raw collection of edge ids (so unknown ids can be
    reported instead of failing construction).
    """
    problems = []
    n_edges = len(overlay.edges)
    ids = tree.key if isinstance(tree, Tree) else tuple(sorted(set(tree)))
    edges = []
    for eid in ids:
        if eid < 0 or eid >= n_edges:
            problems.append(f"dangling edge id {eid}")
        else:
            edges.append(overlay.edges[eid])
    if problems:
        return ValidationReport(problems)
    if not edges:
        return ValidationReport(["empty edge set"])
    indeg = Counter(e.head for e in edges)
    outdeg = Counter(e.tail for e in edges)
    nodes = set(indeg) | set(outdeg)
    if source not in nodes:
        problems.append("source not in tree")
        return ValidationReport(problems)
    if indeg.get(source, 0) != 0:
        problems.append("not a tree: source has an incoming edge")
    for v in sorted(nodes):
        if v != source and indeg.get(v, 0) != 1:
            problems.append(f"not a tree: node {v!r} has in-degree {indeg.get(v, 0)}")
    # reachability from the source along tree edges
    adj: dict[str, list[str]] = {}
    for e in edges:
        adj.setdefault(e.tail, []).append(e.head)
    seen = {source}
    stack = [source]
    while stack:
        for nxt in adj.get(stack.pop(), ()):
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    for v in sorted(nodes - seen):
        problems.append(f"not a tree: node {v!r} unreachable from source")
    recv = set(receivers)
    for r in sorted(recv - nodes):
        problems.append(f"receiver unreachable: {r!r}")
    for v in sorted(nodes):
        if outdeg.get(v, 0) == 0 and v not in recv:
            problems.append(f"dead-end branch: leaf {v!r} is not a receiver")
    return ValidationReport(problems)


# ---------------------------------------------------------------------------
# enumeration


def _scale_guard(overlay: Overlay) -> None:
    if overlay.n_nodes > NODE_GUARD and overlay.n_edges > EDGE_GUARD:
        raise OracleScaleError(
            f"oracle scale exceeded: {overlay.n_nodes} nodes / {overlay.n_edges} edges"
        )


def enumerate_trees(overlay: Overlay, source: str, receivers, cap: int = 100_000,
                    session_id=None) -> list[Tree]:
    """All distinct valid trees, or an explicit error when over ``cap``.

    Generation is unique by construction: pick the relay node set, then
    assign each non-source node its parent edge (pruning cycles early),
    and keep only assignments where every relay has a child.
    """
    _scale_guard(overlay)
    idx = overlay.node_index
    if source not in idx:
        raise InfeasibleError(f"source {source!r} not in overlay")
    recv = sorted(set(receivers))
    for r in recv:
        if r not in idx:
            raise InfeasibleError(f"receiver {r!r} not in overlay")
    src_i = idx[source]
    recv_i = [idx[r] for r in recv]
    others = [i for i in range(overlay.n_nodes) if i != src_i and i not in set(recv_i)]

    out: list[Tree] = []
    for k in range(len(others) + 1):
        for relays in itertools.combinations(others, k):
            member = [False] * overlay.n_nodes
            for i in (src_i, *recv_i, *relays):
                member[i] = True
            order = sorted(set(recv_i) | set(relays))
            choices = []
            feasible = True
            for v in order:
                opts = [e for e in overlay.in_edges[v] if member[idx[e.tail]]]
                if not opts:
                    feasible = False
                    break
                choices.append((v, opts))
            if not feasible:
                continue
            parent = {v: None for v in order}
            relay_set = set(relays)

            def assign(pos, acc):
                if pos == len(choices):
                    childless = relay_set - {idx[e.tail] for e in acc}
                    if childless:
                        return
                    out.append(Tree(overlay, [e.id for e in acc], session_id))
                    if len(out) > cap:
                        raise EnumerationCapError(
                            f"more than {cap} trees on this instance"
                        )
                    return
                v, opts = choices[pos]
                for e in opts:
                    u = idx[e.tail]
                    # walk up assigned parents from the tail; meeting v closes a cycle
                    w = u
                    while w is not None and w != v:
                        pe = parent.get(w)
                        w = idx[pe.tail] if pe is not None else None
                    if w == v:
                        continue
                    parent[v] = e
                    assign(pos + 1, acc + [e])
                    parent[v] = None

            assign(0, [])
    out.sort(key=lambda t: t.key)
    return out


# ---------------------------------------------------------------------------
# exact minimum-cost Steiner tree


def _dijkstra_to(overlay: Overlay, target: int, w) -> list[float]:
    """dist[v] = cheapest v -> target path cost (search on reversed edges)."""
    n = overlay.n_nodes
    dist = [math.inf] * n
    dist[target] = 0.0
    heap = [(0.0, target)]
    idx = overlay.node_index
    while heap:
        d, v = heapq.heappop(heap)
        if d > dist[v]:
            continue
        for e in overlay.in_edges[v]:
            u = idx[e.tail]
            nd = w[e.id] + d
            if nd < dist[u]:
                dist[u] = nd
                heapq.heappush(heap, (nd, u))
    return dist


def _dijkstra_relax(overlay: Overlay, labels: list[float], w) -> None:
    """In place: close labels under 'prepend one edge' (reversed Dijkstra)."""
    idx = overlay.node_index
    heap = [(d, v) for v, d in enumerate(labels) if d < math.inf]
    heapq.heapify(heap)
    while heap:
        d, v = heapq.heappop(heap)
        if d > labels[v]:
            continue
        for e in overlay.in_edges[v]:
            u = idx[e.tail]
            nd = w[e.id] + d
            if nd < labels[u]:
                labels[u] = nd
                heapq.heappush(heap, (nd, u))


def _min_steiner_cost(overlay: Overlay, src_i: int, term_is: list[int], w) -> float:
    """Optimal Steiner arborescence cost by DP over terminal subsets."""
    r = len(term_is)
    full = (1 << r) - 1
    f: list[list[float] | None] = [None] * (full + 1)
    for j, t in enumerate(term_is):
        f[1 << j] = _dijkstra_to(overlay, t, w)
    n = overlay.n_nodes
    for mask in range(1, full + 1):
        if mask & (mask - 1) == 0:
            continue
        low = mask & (-mask)
        best = [math.inf] * n
        sub = (mask - 1) & mask
        while sub:
            if sub & low:
                fa, fb = f[sub], f[mask ^ sub]
                for v in range(n):
                    c = fa[v] + fb[v]
                    if c < best[v]:
                        best[v] = c
            sub = (sub - 1) & mask
        _dijkstra_relax(overlay, best, w)
        f[mask] = best
    return f[full][src_i]


def _lexmin_tree_edges(overlay: Overlay, src_i: int, term_is, w, target: float,
                       state_cap: int) -> list[int]:
    """Lexicographically smallest valid tree whose cost equals ``target``.

    Edge ids are tried in ascending order, so candidate keys are visited in
    canonical order and the first complete hit wins.  Prices are
    non-negative, which makes partial cost monotone and lets the search cut
    on the known optimal value.
    """
    idx = overlay.node_index
    n = overlay.n_nodes
    edges = overlay.edges
    m = len(edges)
    terms = set(term_is)
    eps = _COST_EPS * max(1.0, abs(target))
    parent: list[int] = [-1] * n  # chosen in-edge id, -1 if none
    outdeg = [0] * n
    states = 0

    def fragment_roots():
        return [
            v for v in range(n)
            if v != src_i and outdeg[v] > 0 and parent[v] == -1
        ]

    def complete(cost):
        if abs(cost - target) > eps:
            return False
        if any(parent[t] == -1 for t in terms):
            return False
        if fragment_roots():
            return False
        for v in range(n):
            if parent[v] != -1 and outdeg[v] == 0 and v not in terms:
                return False
        return True

    def completion_possible(min_next_id):
        # every open terminal and fragment root must stay reachable from the
        # source using chosen edges plus unused higher-id edges into
        # still-parentless nodes
        seen = [False] * n
        seen[src_i] = True
        stack = [src_i]
        while stack:
            u = stack.pop()
            for e in overlay.out_edges[u]:
                v = idx[e.head]
                if seen[v]:
                    continue
                if parent[v] == e.id or (
                    e.id >= min_next_id and parent[v] == -1 and v != src_i
                ):
                    seen[v] = True
                    stack.append(v)
        for t in terms:
            if not seen[t]:
                return False
        for rt in fragment_roots():
            if not seen[rt]:
                return False
        return True

    def dfs(next_id, cost):
        nonlocal states
        states += 1
        if states > state_cap:
            raise OracleScaleError("oracle scale exceeded: tie search too large")
        if complete(cost):
            return [eid for eid in range(m) if any(parent[v] == eid for v in range(n))]
        if not completion_possible(next_id):
            return None
        for eid in range(next_id, m):
            e = edges[eid]
            ncost = cost + w[eid]
            if ncost > target + eps:
                continue
            v = idx[e.head]
            if v == src_i or parent[v] != -1:
                continue
            u = idx[e.tail]
            # cycle check: walk up from the tail through chosen parents
            x = u
            while x != -1 and x != v:
                pe = parent[x]
                x = idx[edges[pe].tail] if pe != -1 else -1
            if x == v:
                continue
            parent[v] = eid
            outdeg[u] += 1
            found = dfs(eid + 1, ncost)
            parent[v] = -1
            outdeg[u] -= 1
            if found is not None:
                return found
        return None

    found = dfs(0, 0.0)
    if found is None:
        raise InfeasibleError("no tree achieves the computed optimum")
    return found


def exact_min_steiner(overlay: Overlay, source: str, receivers, prices,
                      session_id=None, state_cap: int = STATE_CAP) -> Tree:
    """Globally cheapest valid tree under the given physical link prices.

    Exact (subset DP for the value), deterministic: among cost ties the
    tree with the lexicographically smallest canonical key is returned.
    """
    _scale_guard(overlay)
    idx = overlay.node_index
    if source not in idx:
        raise InfeasibleError(f"source {source!r} not in overlay")
    recv = sorted(set(receivers))
    missing = [r for r in recv if r not in idx]
    if missing:
        raise InfeasibleError(f"receivers not in overlay: {missing}")
    w = overlay.edge_costs(np.asarray(prices, dtype=float))
    if np.any(w < 0):
        raise ValueError("prices must be non-negative")
    src_i = idx[source]
    term_is = [idx[r] for r in recv]
    cost = _min_steiner_cost(overlay, src_i, term_is, w)
    if math.isinf(cost):
        raise InfeasibleError("a receiver is unreachable from the source")
    ids = _lexmin_tree_edges(overlay, src_i, term_is, w, cost, state_cap)
    return Tree(overlay, ids, session_id)


# ---------------------------------------------------------------------------
# minimum-cost spanning arborescence (contraction algorithm)


def _edmonds(n: int, edges, root: int):
    """edges: (orig_id, tail, head, weight). Returns chosen original ids."""
    best: list[tuple | None] = [None] * n
    for e in edges:
        _, u, v, w = e
        if v == root or u == v:
            continue
        b = best[v]
        if b is None or (w, e[0]) < (b[3], b[0]):
            best[v] = e
    for v in range(n):
        if v != root and best[v] is None:
            raise InfeasibleError("graph has an unreachable node")
    # find a cycle among chosen in-edges
    color = [0] * n  # 0 unvisited, 1 in progress, 2 done
    cycle = None
    for start in range(n):
        if color[start] or start == root:
            continue
        path = []
        v = start
        while v != root and color[v] == 0:
            color[v] = 1
            path.append(v)
            v = best[v][1]
        if v != root and color[v] == 1:
            cyc = path[path.index(v):]
            cycle = cyc
            for u in path:
                color[u] = 2
            break
        for u in path:
            color[u] = 2
    if cycle is None:
        return [best[v][0] for v in range(n) if v != root]

    in_cycle = [False] * n
    for v in cycle:
        in_cycle[v] = True
    remap = [0] * n
    nxt = 0
    for v in range(n):
        if not in_cycle[v]:
            remap[v] = nxt
            nxt += 1
    cyc_node = nxt
    for v in cycle:
        remap[v] = cyc_node
    new_edges = []
    entering: dict[int, tuple] = {}  # contracted edge orig_id -> replaced best edge
    for e in edges:
        oid, u, v, w = e
        nu, nv = remap[u], remap[v]
        if nu == nv:
            continue
        if in_cycle[v]:
            nw = w - best[v][3]
            entering[oid] = best[v]
            new_edges.append((oid, nu, nv, nw))
        else:
            new_edges.append((oid, nu, nv, w))
    chosen = _edmonds(nxt + 1, new_edges, remap[root])
    by_id = {e[0]: e for e in edges}
    result = []
    broken = None
    for oid in chosen:
        result.append(oid)
        if oid in entering:
            broken = entering[oid]
    for v in cycle:
        if best[v] is not broken:
            result.append(best[v][0])
    return result


def min_arborescence(overlay: Overlay, source: str, prices, session_id=None) -> Tree:
    """Cheapest arborescence rooted at the source spanning every overlay node.

    The separate-swarming oracle: the whole session overlay participates, so
    no Steiner choice is involved.
    """
    idx = overlay.node_index
    if source not in idx:
        raise InfeasibleError(f"source {source!r} not in overlay")
    if overlay.n_nodes < 2:
        raise InfeasibleError("overlay has no nodes to span")
    w = overlay.edge_costs(np.asarray(prices, dtype=float))
    edges = [(e.id, idx[e.tail], idx[e.head], float(w[e.id])) for e in overlay.edges]
    ids = _edmonds(overlay.n_nodes, edges, idx[source])
    return Tree(overlay, ids, session_id)


# ---------------------------------------------------------------------------
# link-tree incidence


class IncidenceView:
    """Link id -> set of tree columns using it (with cached usage counts)."""

    def __init__(self, trees):
        self.columns: dict[tuple, Tree] = {}
        self.by_link: dict[int, set[tuple]] = {}
        for t in trees:
            col = (t.session_id, t.key)
            if col in self.columns:
                continue
            self.columns[col] = t
            for lid, _ in t.usage:
                self.by_link.setdefault(lid, set()).add(col)

    def trees_on(self, link_id: int) -> set[tuple]:
        return self.by_link.get(link_id, set())

    def flow(self, rates, n_links: int) -> np.ndarray:
        """H @ y for a mapping (session_id, key) -> rate."""
        out = np.zeros(n_links)
        for col, rate in sorted(rates.items(), key=lambda kv: (str(kv[0][0]), kv[0][1])):
            tree = self.columns.get(col)
            if tree is None or rate == 0.0:
                continue
            add_flow(out, tree, rate)
        return out
