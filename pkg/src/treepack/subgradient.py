"""Dual subgradient engine.

Each iteration: project link prices along the capacity subgradient using the
previous tree rates, then let every session pick a tree from its provider,
set its rate from the tree price, and place the whole session rate on that
single tree.  Instantaneous rates routinely overshoot capacities; the
running time averages are what converge to a feasible optimal allocation,
so the engine tracks those incrementally.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ScenarioError
from .trees import Tree, add_flow, tree_cost
from .utility import surplus_at


@dataclass(frozen=True)
class StepRule:
    """Price step-size schedule.

    ``constant``: delta(k) = delta0 for all k.
    ``diminishing``: delta(k) = delta0 / sqrt(k) for k >= 1 -- non-increasing,
    vanishing, with divergent partial sums.
    """

    kind: str
    delta0: float

    def __post_init__(self):
        if self.kind not in ("constant", "diminishing"):
            raise ScenarioError(f"unknown step rule {self.kind!r}")
        if self.delta0 <= 0:
            raise ScenarioError("step size must be positive")

    def at(self, k: int) -> float:
        if self.kind == "constant" or k <= 1:
            return self.delta0
        return self.delta0 / math.sqrt(k)


def step_size(rule: StepRule, k: int) -> float:
    return rule.at(k)


def update_prices(prices: np.ndarray, delta: float, capacities: np.ndarray,
                  flow: np.ndarray) -> np.ndarray:
    """One projected subgradient step on the link prices.

    Shared by the synchronous engine and the event simulator so both produce
    bit-identical trajectories when delays vanish.
    """
    return np.maximum(0.0, prices - delta * (capacities - flow))


def primal_value(sessions, x) -> float:
    return sum(s.utility.value(x[s.id]) for s in sorted(sessions, key=lambda s: s.id))


def dual_value(prices: np.ndarray, capacities: np.ndarray, sessions, gammas) -> float:
    """Dual objective at the given prices and per-session min tree costs."""
    total = float(np.dot(prices, capacities))
    for s in sorted(sessions, key=lambda s: s.id):
        total += surplus_at(s.utility, gammas[s.id], s.rate_min, s.rate_max)
    return total


def dual_value_with_oracle(network, sessions, prices, oracle) -> float:
    """Dual objective where ``oracle(session_id, prices) -> Tree`` supplies
    the minimum-cost tree (global or pool-restricted)."""
    gammas = {}
    for s in sessions:
        tree = oracle(s.id, prices)
        gammas[s.id] = tree_cost(tree, prices)
    return dual_value(prices, network.capacities, sessions, gammas)


@dataclass
class Allocation:
    """Snapshot of instantaneous and time-average rates."""

    x: dict
    y: dict  # (session_id, key) -> rate, single support per session
    x_avg: dict
    y_avg: dict
    window_start: int
    samples: int


class Engine:
    """Runs the price/rate/tree iteration against a tree provider.

    provider(session_id, prices, k) -> Tree decides which tree carries the
    session this iteration (exact oracle, approximation, or pool argmin).
    """

    def __init__(self, network, sessions, provider, rule: StepRule,
                 window_start: int = 0, trace: bool = False,
                 record_flows: bool = False, gap_tol: float = 1e-3,
                 gap_patience: int = 100, feas_tol: float = 1e-2):
        self.network = network
        self.sessions = sorted(sessions, key=lambda s: s.id)
        self.by_id = {s.id: s for s in self.sessions}
        self.provider = provider
        self.rule = rule
        self.window_start = window_start
        self.capacities = network.capacities
        self.prices = np.zeros(network.n_links)
        self.k = 0
        self.active: dict[str, tuple[Tree, float]] = {}
        self.gammas: dict[str, float] = {}
        self.trees: dict[tuple, Tree] = {}
        self.y_sums: dict[tuple, float] = {}
        self.flow_sum = np.zeros(network.n_links)
        self.samples = 0
        self.max_prices = np.zeros(network.n_links)
        self.gap_tol = gap_tol
        self.gap_patience = gap_patience
        self.feas_tol = feas_tol
        self._gap_streak = 0
        self.trace_rows: list[dict] | None = [] if trace else None
        self.flow_history: list[np.ndarray] | None = [] if record_flows else None
        self._decide()
        self._flow = self._current_flow()
        self._accumulate()

    # -- iteration ---------------------------------------------------------

    def _decide(self) -> None:
        for s in self.sessions:
            tree = self.provider(s.id, self.prices, self.k)
            gamma = tree_cost(tree, self.prices)
            rate = s.utility.rate_from_price(gamma, s.rate_min, s.rate_max)
            self.active[s.id] = (tree, rate)
            self.gammas[s.id] = gamma
            self.trees.setdefault((s.id, tree.key), tree)

    def _current_flow(self) -> np.ndarray:
        flow = np.zeros(self.network.n_links)
        for s in self.sessions:
            tree, rate = self.active[s.id]
            add_flow(flow, tree, rate)
        return flow

    def _accumulate(self) -> None:
        if self.k < self.window_start:
            return
        self.samples += 1
        for s in self.sessions:
            tree, rate = self.active[s.id]
            col = (s.id, tree.key)
            self.y_sums[col] = self.y_sums.get(col, 0.0) + rate
        self.flow_sum += self._flow
        if self.flow_history is not None:
            self.flow_history.append(self._flow.copy())
        np.maximum(self.max_prices, self.prices, out=self.max_prices)
        gap = self.relative_gap
        self._gap_streak = self._gap_streak + 1 if gap < self.gap_tol else 0
        if self.trace_rows is not None:
            self.trace_rows.append(self.trace_row())

    def step(self) -> None:
        delta = self.rule.at(self.k)
        self.prices = update_prices(self.prices, delta, self.capacities, self._flow)
        self.k += 1
        self._decide()
        self._flow = self._current_flow()
        self._accumulate()

    def run(self, iterations: int, stop=None) -> None:
        """Advance up to ``iterations`` more steps; ``stop(engine)`` may end
        the run early (checked after each step)."""
        for _ in range(iterations):
            self.step()
            if stop is not None and stop(self):
                break

    # -- values ------------------------------------------------------------

    @property
    def x(self) -> dict:
        return {sid: rate for sid, (_, rate) in self.active.items()}

    @property
    def primal(self) -> float:
        return primal_value(self.sessions, self.x)

    @property
    def dual(self) -> float:
        return dual_value(self.prices, self.capacities, self.sessions, self.gammas)

    @property
    def relative_gap(self) -> float:
        d = self.dual
        return abs(self.primal - d) / max(1e-12, abs(d))

    @property
    def y_avg(self) -> dict:
        if self.samples == 0:
            return {}
        return {col: s / self.samples for col, s in self.y_sums.items()}

    @property
    def x_avg(self) -> dict:
        """Derived from the tree-rate averages so A @ y_avg == x_avg exactly."""
        out = {s.id: 0.0 for s in self.sessions}
        for (sid, key), total in sorted(self.y_sums.items(), key=lambda kv: (kv[0][0], kv[0][1])):
            out[sid] += total / self.samples
        return out

    @property
    def avg_flow(self) -> np.ndarray:
        return self.flow_sum / max(1, self.samples)

    @property
    def max_relative_violation(self) -> float:
        if self.samples == 0:
            return math.inf
        over = (self.avg_flow - self.capacities) / self.capacities
        return float(np.max(over))

    @property
    def converged(self) -> bool:
        return (
            self._gap_streak >= self.gap_patience
            and self.max_relative_violation < self.feas_tol
        )

    def allocation(self) -> Allocation:
        y = {
            (sid, tree.key): rate
            for sid, (tree, rate) in self.active.items()
        }
        return Allocation(
            x=dict(self.x),
            y=y,
            x_avg=self.x_avg,
            y_avg=self.y_avg,
            window_start=self.window_start,
            samples=self.samples,
        )

    def trace_row(self) -> dict:
        row = {
            "k": self.k,
            "primal": self.primal,
            "dual": self.dual,
            "max_avg_violation": self.max_relative_violation,
        }
        for s in self.sessions:
            tree, rate = self.active[s.id]
            row[f"x:{s.id}"] = rate
            row[f"tree:{s.id}"] = tree.key_str()
        return row


def lagrangian_maximizer_check(session, overlay, prices, candidate, best_tree,
                               tol: float = 1e-9) -> bool:
    """True iff the single-tree structural maximizer dominates ``candidate``.

    ``candidate`` is a list of (tree, rate) pairs feasible for the session's
    rate window; ``best_tree`` is a minimum-cost tree at these prices.
    """
    u = session.utility
    total = sum(rate for _, rate in candidate)
    if not (session.rate_min - 1e-12 <= total <= session.rate_max + 1e-12):
        raise ValueError("candidate violates the session rate window")

    def gain(pairs):
        xs = sum(rate for _, rate in pairs)
        pay = sum(rate * tree_cost(tree, prices) for tree, rate in pairs)
        return u.value(xs) - pay

    gamma = tree_cost(best_tree, prices)
    star_rate = u.rate_from_price(gamma, session.rate_min, session.rate_max)
    star = [(best_tree, star_rate)]
    return gain(star) >= gain(candidate) - tol
