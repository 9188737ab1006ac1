"""Approximate min-cost directed Steiner tree oracle.

Charikar-style recursive density greedy: a level-i tree repeatedly attaches
the lowest-density level-(i-1) subtree reachable over the price metric
closure.  Level i >= 2 guarantees a cost within ``ratio_bound(i, |R|)`` of
the optimum, which is what the solver's certification bounds consume.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleError, ScenarioError
from .net import Overlay
from .trees import Tree


@dataclass(frozen=True)
class ApproxConfig:
    level: int = 2
    memoize: bool = True

    def __post_init__(self):
        if self.level < 2:
            raise ScenarioError("approximation level must be >= 2")


def ratio_bound(level: int, n_receivers: int) -> float:
    """Guaranteed cost ratio of the level-i oracle, floored at 1."""
    if level < 2 or n_receivers < 1:
        raise ScenarioError("need level >= 2 and at least one receiver")
    return max(1.0, level * (level - 1) * n_receivers ** (1.0 / level))


def _shortest_paths_from(overlay: Overlay, src_i: int, w):
    """Deterministic Dijkstra: labels ordered by (cost, hops, node index)."""
    n = overlay.n_nodes
    idx = overlay.node_index
    dist = [math.inf] * n
    hops = [math.inf] * n
    parent_edge = [-1] * n
    dist[src_i] = 0.0
    hops[src_i] = 0
    heap = [(0.0, 0, src_i)]
    while heap:
        d, h, v = heapq.heappop(heap)
        if (d, h) > (dist[v], hops[v]):
            continue
        for e in overlay.out_edges[v]:
            u = idx[e.head]
            nd, nh = d + w[e.id], h + 1
            if (nd, nh) < (dist[u], hops[u]):
                dist[u] = nd
                hops[u] = nh
                parent_edge[u] = e.id
                heapq.heappush(heap, (nd, nh, u))
    return dist, parent_edge


def _metric_closure(overlay: Overlay, w):
    dists = []
    parents = []
    for v in range(overlay.n_nodes):
        d, p = _shortest_paths_from(overlay, v, w)
        dists.append(d)
        parents.append(p)
    return dists, parents


def _path_edges(overlay: Overlay, parents, src_i: int, dst_i: int) -> list[int]:
    idx = overlay.node_index
    out = []
    v = dst_i
    while v != src_i:
        eid = parents[src_i][v]
        if eid < 0:
            raise InfeasibleError("unreachable node in metric closure")
        out.append(eid)
        v = idx[overlay.edges[eid].tail]
    out.reverse()
    return out


def approx_min_steiner(overlay: Overlay, source: str, receivers, prices,
                       cfg: ApproxConfig = ApproxConfig(), session_id=None) -> Tree:
    """A valid tree whose cost is within ratio_bound(level, |R|) of optimal."""
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
    dists, parents = _metric_closure(overlay, w)
    src_i = idx[source]
    term_all = [idx[r] for r in recv]
    for t in term_all:
        if math.isinf(dists[src_i][t]):
            raise InfeasibleError("a receiver is unreachable from the source")

    n = overlay.n_nodes
    memo: dict = {}

    def subtree(level, root, k, terms):
        """Best-effort level-limited cover of k of ``terms`` rooted at root.

        Returns (cost, covered frozenset, metric edge tuple) or None.
        """
        key = (level, root, k, terms)
        if cfg.memoize and key in memo:
            return memo[key]
        result = None
        if level == 1:
            ranked = sorted(
                (t for t in terms if not math.isinf(dists[root][t])),
                key=lambda t: (dists[root][t], t),
            )
            if len(ranked) >= k:
                take = ranked[:k]
                cost = sum(dists[root][t] for t in take)
                medges = tuple((root, t) for t in take if t != root)
                cov = frozenset(take)
                result = (cost, cov, medges)
        else:
            acc_cost = 0.0
            acc_cov: set = set()
            acc_edges: list = []
            remaining = tuple(terms)
            need = k
            ok = True
            while need > 0:
                best = None
                for v in range(n):
                    dv = dists[root][v]
                    if math.isinf(dv):
                        continue
                    for kk in range(1, need + 1):
                        sub = subtree(level - 1, v, kk, remaining)
                        if sub is None:
                            continue
                        c_sub, cov, med = sub
                        total = dv + c_sub
                        dens = total / len(cov)
                        cand = (dens, total, -len(cov), v, (root, v), med, cov)
                        if best is None or cand[:4] < best[:4]:
                            best = cand
                if best is None:
                    ok = False
                    break
                _, total, _, v, link, med, cov = best
                acc_cost += total
                if v != root:
                    acc_edges.append(link)
                acc_edges.extend(med)
                acc_cov |= cov
                need -= len(cov)
                remaining = tuple(t for t in remaining if t not in cov)
            if ok:
                result = (acc_cost, frozenset(acc_cov), tuple(acc_edges))
        if cfg.memoize:
            memo[key] = result
        return result

    top = subtree(cfg.level, src_i, len(term_all), tuple(term_all))
    if top is None:
        raise InfeasibleError("level recursion could not cover all receivers")
    _, _, metric_edges = top

    # expand metric edges to overlay paths and keep the cheapest-route
    # arborescence of the union that reaches every receiver
    union: set[int] = set()
    for u, v in metric_edges:
        union.update(_path_edges(overlay, parents, u, v))
    sub_overlay_edges = sorted(union)
    chosen = _extract_paths(overlay, w, sub_overlay_edges, src_i, term_all)
    return Tree(overlay, chosen, session_id)


def _extract_paths(overlay: Overlay, w, edge_ids, src_i, term_is) -> list[int]:
    """Cheapest in-union routes from the source to each terminal.

    Restricting to the union can only drop cost; the output is leaf-minimal
    because only nodes on some terminal route survive.
    """
    idx = overlay.node_index
    n = overlay.n_nodes
    adj: list[list] = [[] for _ in range(n)]
    for eid in edge_ids:
        e = overlay.edges[eid]
        adj[idx[e.tail]].append(e)
    dist = [math.inf] * n
    hops = [math.inf] * n
    parent = [-1] * n
    dist[src_i] = 0.0
    hops[src_i] = 0
    heap = [(0.0, 0, src_i)]
    while heap:
        d, h, v = heapq.heappop(heap)
        if (d, h) > (dist[v], hops[v]):
            continue
        for e in adj[v]:
            u = idx[e.head]
            nd, nh = d + w[e.id], h + 1
            if (nd, nh) < (dist[u], hops[u]):
                dist[u] = nd
                hops[u] = nh
                parent[u] = e.id
                heapq.heappush(heap, (nd, nh, u))
    chosen: set[int] = set()
    for t in term_is:
        if math.isinf(dist[t]):
            raise InfeasibleError("extraction lost a receiver route")
        v = t
        while v != src_i:
            eid = parent[v]
            chosen.add(eid)
            v = idx[overlay.edges[eid].tail]
    return sorted(chosen)
