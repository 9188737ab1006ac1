"""Column generation around the subgradient engine.

The engine iterates on a restricted pool of trees per session.  Every
``pricing_interval`` iterations each source prices the global problem with
its configured oracle; a strictly cheaper new tree joins the pool and
carries the session this iteration, otherwise the cheapest pooled tree does.
Pools only grow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ScenarioError
from .net import Overlay
from .steiner import ApproxConfig, approx_min_steiner
from .subgradient import Engine, StepRule
from .trees import Tree, exact_min_steiner, min_arborescence, tree_cost, validate_tree

_ADMIT_EPS = 1e-12


@dataclass(frozen=True)
class ColGenConfig:
    oracle: str = "exact"  # "exact" | "approx:<level>" | "arborescence"
    pricing_interval: int = 1
    rule: StepRule = StepRule("diminishing", 1e-3)
    iterations: int = 5000
    window_start: int = 0
    detect_convergence: bool = True
    gap_tol: float = 1e-3
    gap_patience: int = 100
    feas_tol: float = 1e-2
    trace: bool = False
    record_flows: bool = False
    seed_trees: dict = field(default_factory=dict)  # session id -> [Tree]

    def __post_init__(self):
        if self.pricing_interval < 1:
            raise ScenarioError("pricing interval must be >= 1")
        if self.iterations < 1:
            raise ScenarioError("iteration budget must be >= 1")
        parse_oracle(self.oracle)


def parse_oracle(name: str):
    """-> (kind, approx level or None)."""
    if name == "exact" or name == "arborescence":
        return name, None
    if name.startswith("approx:"):
        level = int(name.split(":", 1)[1])
        if level < 2:
            raise ScenarioError("approximation level must be >= 2")
        return "approx", level
    raise ScenarioError(f"unknown oracle {name!r}")


def make_global_oracle(name: str, sessions, overlays):
    """callable(session_id, prices) -> Tree using the named pricing method."""
    kind, level = parse_oracle(name)
    by_id = {s.id: s for s in sessions}
    if kind == "arborescence":
        for s in sessions:
            if set(overlays[s.id].nodes) != set(s.nodes):
                raise ScenarioError(
                    "arborescence oracle requires a session-only overlay "
                    f"(session {s.id!r} overlay has extra nodes)"
                )
        return lambda sid, prices: min_arborescence(
            overlays[sid], by_id[sid].source, prices, session_id=sid
        )
    if kind == "approx":
        cfg = ApproxConfig(level=level)
        return lambda sid, prices: approx_min_steiner(
            overlays[sid], by_id[sid].source, by_id[sid].receivers, prices,
            cfg, session_id=sid,
        )
    return lambda sid, prices: exact_min_steiner(
        overlays[sid], by_id[sid].source, by_id[sid].receivers, prices,
        session_id=sid,
    )


def oracle_ratio(name: str, session) -> float:
    """Approximation ratio the named oracle guarantees for this session."""
    kind, level = parse_oracle(name)
    if kind == "approx":
        from .steiner import ratio_bound

        return ratio_bound(level, len(session.receivers))
    return 1.0


@dataclass
class Admission:
    iteration: int
    session_id: str
    key: tuple
    cost: float
    pool_size: int


class TreePool:
    """Per-session restricted tree sets; trees are never removed."""

    def __init__(self):
        self.trees: dict[str, list[Tree]] = {}
        self._keys: set[tuple] = set()
        self.admissions: list[Admission] = []

    @property
    def size(self) -> int:
        return len(self._keys)

    def session_trees(self, session_id: str) -> list[Tree]:
        return self.trees.get(session_id, [])

    def contains(self, session_id: str, key) -> bool:
        return (session_id, key) in self._keys

    def all_trees(self):
        for sid in sorted(self.trees):
            yield from self.trees[sid]

    def _insert(self, iteration: int, session_id: str, tree: Tree, cost: float):
        self.trees.setdefault(session_id, []).append(tree)
        self._keys.add((session_id, tree.key))
        self.admissions.append(
            Admission(iteration, session_id, tree.key, cost, self.size)
        )


def local_min_cost_tree(pool: TreePool, session_id: str, prices):
    """Cheapest pooled tree under the prices; ties go to the smaller key."""
    trees = pool.session_trees(session_id)
    if not trees:
        raise ScenarioError(f"empty tree pool for session {session_id!r}")
    best = None
    best_cost = math.inf
    for t in trees:
        c = tree_cost(t, prices)
        if c < best_cost - _ADMIT_EPS or (
            abs(c - best_cost) <= _ADMIT_EPS and (best is None or t.key < best.key)
        ):
            best, best_cost = t, c
    return best, best_cost


def maybe_admit(pool: TreePool, session, overlay: Overlay, candidate: Tree,
                prices, iteration: int = 0):
    """Admission rule: new canonical key and strictly cheaper than the pool.

    Returns (admitted, effective_tree, effective_cost) where the effective
    tree is the candidate when it wins and the pooled minimum otherwise --
    the pricing solution the engine should use this iteration.
    """
    report = validate_tree(candidate, session.source, session.receivers, overlay)
    if not report:
        raise ScenarioError(
            f"invalid candidate tree for session {session.id!r}: {report.problems}"
        )
    cost = tree_cost(candidate, prices)
    if not pool.session_trees(session.id):
        pool._insert(iteration, session.id, candidate, cost)
        return True, candidate, cost
    best, best_cost = local_min_cost_tree(pool, session.id, prices)
    if not pool.contains(session.id, candidate.key) and cost < best_cost - _ADMIT_EPS:
        pool._insert(iteration, session.id, candidate, cost)
        return True, candidate, cost
    return False, best, best_cost


@dataclass
class ColGenResult:
    x: dict
    x_avg: dict
    primal: float
    primal_avg: float
    dual: float
    prices: np.ndarray
    pool: TreePool
    iterations: int
    converged: bool
    pricing_agreement: dict  # session id -> (effective cost, pool cost)
    a3_flags: list  # sessions whose average rate sits at the floor
    engine: Engine
    trace: list | None
    oracle_name: str = "exact"


def colgen_run(network, sessions, overlays, cfg: ColGenConfig) -> ColGenResult:
    """Run the column generation loop to budget or convergence.

    Terminates early only when the engine's convergence detector fires and
    the latest pricing round admitted nothing.
    """
    by_id = {s.id: s for s in sessions}
    global_oracle = make_global_oracle(cfg.oracle, sessions, overlays)
    pool = TreePool()
    last_round_admissions = [0]

    for sid, extra in sorted(cfg.seed_trees.items()):
        s = by_id[sid]
        for t in extra:
            report = validate_tree(t, s.source, s.receivers, overlays[sid])
            if not report:
                raise ScenarioError(f"bad seed tree for {sid!r}: {report.problems}")
            if not pool.contains(sid, t.key):
                pool._insert(0, sid, t, math.nan)

    def provider(sid, prices, k):
        if k % cfg.pricing_interval == 0:
            if sid == min(by_id):
                last_round_admissions[0] = 0
            candidate = global_oracle(sid, prices)
            admitted, effective, _ = maybe_admit(
                pool, by_id[sid], overlays[sid], candidate, prices, k
            )
            if admitted:
                last_round_admissions[0] += 1
            return effective
        tree, _ = local_min_cost_tree(pool, sid, prices)
        return tree

    engine = Engine(
        network,
        sessions,
        provider,
        cfg.rule,
        window_start=cfg.window_start,
        trace=cfg.trace,
        record_flows=cfg.record_flows,
        gap_tol=cfg.gap_tol,
        gap_patience=cfg.gap_patience,
        feas_tol=cfg.feas_tol,
    )

    def stop(eng):
        return (
            cfg.detect_convergence
            and eng.converged
            and eng.k >= cfg.pricing_interval
            and last_round_admissions[0] == 0
        )

    engine.run(cfg.iterations - 1, stop=stop)

    agreement = {}
    for s in sorted(sessions, key=lambda s: s.id):
        candidate = global_oracle(s.id, engine.prices)
        cand_cost = tree_cost(candidate, engine.prices)
        _, pool_cost = local_min_cost_tree(pool, s.id, engine.prices)
        agreement[s.id] = (min(cand_cost, pool_cost), pool_cost)

    x_avg = engine.x_avg
    a3_flags = [
        s.id
        for s in sessions
        if abs(x_avg[s.id] - s.rate_min) <= 1e-9 * max(1.0, s.rate_max)
    ]
    from .subgradient import primal_value

    return ColGenResult(
        x=engine.x,
        x_avg=x_avg,
        primal=engine.primal,
        primal_avg=primal_value(sessions, x_avg),
        dual=engine.dual,
        prices=engine.prices.copy(),
        pool=pool,
        iterations=engine.k + 1,
        converged=engine.converged,
        pricing_agreement=agreement,
        a3_flags=a3_flags,
        engine=engine,
        trace=engine.trace_rows,
        oracle_name=cfg.oracle,
    )


def optimality_check(pool: TreePool, prices, sessions, overlays, oracle):
    """Per-session surplus gap between global and pool pricing.

    Zero gaps certify that the restricted solution is optimal for the
    unrestricted problem.
    """
    from .utility import surplus_at

    out = {}
    for s in sorted(sessions, key=lambda s: s.id):
        global_tree = oracle(s.id, prices)
        g_cost = tree_cost(global_tree, prices)
        _, l_cost = local_min_cost_tree(pool, s.id, prices)
        hg = surplus_at(s.utility, g_cost, s.rate_min, s.rate_max)
        hl = surplus_at(s.utility, l_cost, s.rate_min, s.rate_max)
        out[s.id] = {
            "global_cost": g_cost,
            "pool_cost": l_cost,
            "global_surplus": hg,
            "pool_surplus": hl,
            "gap": hg - hl,
        }
    return out
