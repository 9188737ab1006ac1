"""Deterministic random instance generator for property suites.

Instances are small plain-graph scenarios sized for the exact oracles: every
receiver reachable, tree counts under the enumeration guard, and strictly
feasible at zero rates so the dual machinery is well posed.
"""

from __future__ import annotations

import random

from .errors import EnumerationCapError, InfeasibleError, OracleScaleError
from .scenario import Scenario, scenario_from_dict
from .trees import enumerate_trees

MAX_ATTEMPTS = 200


def random_scenario(seed: int, n_nodes: int = 8, n_sessions: int = 1,
                    edge_prob: float = 0.35, max_receivers: int = 3,
                    tree_cap: int = 4000, mode: str = "universal",
                    utility_kinds=("log_shifted", "isoelastic")) -> Scenario:
    """A random connected digraph scenario; resamples until valid.

    Deterministic in ``seed``: attempt i draws from Random(seed * 1000 + i).
    """
    if n_nodes < 3 or n_nodes > 10:
        raise ValueError("n_nodes must be in [3, 10]")
    for attempt in range(MAX_ATTEMPTS):
        rng = random.Random(seed * 1000 + attempt)
        doc = _draw(rng, n_nodes, n_sessions, edge_prob, max_receivers,
                    mode, utility_kinds)
        if doc is None:
            continue
        try:
            sc = scenario_from_dict(doc, name=f"rand{seed}")
        except Exception:
            continue
        if _usable(sc, tree_cap):
            return sc
    raise RuntimeError(f"no valid instance for seed {seed}")


def _draw(rng, n_nodes, n_sessions, edge_prob, max_receivers, mode, kinds):
    names = [f"n{i}" for i in range(n_nodes)]
    links = []
    present = set()
    for a in names:
        for b in names:
            if a != b and rng.random() < edge_prob:
                links.append((a, b))
                present.add((a, b))
    # ring of low-capacity links keeps everything reachable
    for i in range(n_nodes):
        a, b = names[i], names[(i + 1) % n_nodes]
        if (a, b) not in present:
            links.append((a, b))
            present.add((a, b))
    link_docs = [
        {
            "tail": a,
            "head": b,
            "capacity": round(rng.uniform(0.5, 4.0), 3),
            "delay_ms": round(rng.uniform(1.0, 50.0), 2),
        }
        for a, b in sorted(links)
    ]
    sessions = []
    used_sources = set()
    for si in range(n_sessions):
        source = rng.choice([v for v in names if v not in used_sources])
        used_sources.add(source)
        others = [v for v in names if v != source]
        k = rng.randint(2, min(max_receivers, len(others)))
        receivers = rng.sample(others, k)
        kind = rng.choice(list(kinds))
        utility = {"kind": kind, "weight": round(rng.uniform(0.5, 2.0), 3)}
        if kind == "isoelastic":
            utility["beta"] = rng.choice([0.3, 0.5, 0.7])
        sessions.append(
            {
                "id": f"s{si}",
                "source": source,
                "receivers": sorted(receivers),
                "rate_min": 0.0,
                "rate_max": round(rng.uniform(2.0, 6.0), 3),
                "utility": utility,
            }
        )
    return {
        "name": "random",
        "mode": mode,
        "overlay": {"kind": "direct"},
        "links": link_docs,
        "sessions": sessions,
        "solver": {
            "oracle": "exact",
            "step_rule": "diminishing",
            "step_size": 0.05,
            "iterations": 4000,
        },
    }


def _usable(sc: Scenario, tree_cap: int) -> bool:
    for s in sc.sessions:
        ov = sc.overlays[s.id]
        try:
            trees = enumerate_trees(ov, s.source, s.receivers, cap=tree_cap,
                                    session_id=s.id)
        except (EnumerationCapError, OracleScaleError, InfeasibleError):
            return False
        if not trees:
            return False
    return True


def isp_like_scenario(seed: int = 7, n_nodes: int = 30, extra_links: int = 70,
                      n_receivers: int = 8, delay_ms: float = 100.0) -> Scenario:
    """A sparse ISP-flavored digraph for simulator runs: a random tree
    backbone plus shortcut links, one multicast session."""
    rng = random.Random(seed)
    names = [f"n{i:02d}" for i in range(n_nodes)]
    links = set()
    for i in range(1, n_nodes):
        j = rng.randrange(0, i)
        links.add((names[j], names[i]))
        links.add((names[i], names[j]))
    while len(links) < 2 * (n_nodes - 1) + extra_links:
        a, b = rng.sample(names, 2)
        links.add((a, b))
    link_docs = [
        {
            "tail": a,
            "head": b,
            # a few fat core links, the rest thinner
            "capacity": 5000.0 if rng.random() < 0.2 else 1000.0,
            "delay_ms": delay_ms,
        }
        for a, b in sorted(links)
    ]
    source = names[0]
    receivers = sorted(rng.sample(names[1:], n_receivers))
    doc = {
        "name": f"isp{n_nodes}",
        "mode": "universal",
        "overlay": {"kind": "direct"},
        "links": link_docs,
        "sessions": [
            {
                "id": "cast",
                "source": source,
                "receivers": receivers,
                "rate_max": 6000.0,
                "utility": {"kind": "log_shifted", "weight": 1.0},
            }
        ],
        "solver": {
            "oracle": "approx:2",
            "pricing_interval": 10,
            "step_rule": "constant",
            "step_size": 5e-7,
            "iterations": 2000,
        },
        "sim": {
            "slot_s": 1.0,
            "horizon_slots": 400,
            "oracle": "approx:2",
            "pricing_interval": 10,
            "control_packet_bytes": 400,
        },
    }
    return scenario_from_dict(doc, name=doc["name"])
