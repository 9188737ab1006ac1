"""Session utility functions and their price-side machinery.

Two strictly concave families are supported:

* ``log_shifted``:  U(x) = w * ln(x + e)
* ``isoelastic``:   U(x) = w / (1 - beta) * x**(1 - beta),  0 < beta < 1

Both are non-decreasing and strictly concave on [0, inf), so any
[rate_min, rate_max] window is admissible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ScenarioError

KINDS = ("log_shifted", "isoelastic")


@dataclass(frozen=True)
class UtilitySpec:
    kind: str
    weight: float = 1.0
    beta: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ScenarioError(f"unknown utility kind {self.kind!r}")
        if self.weight <= 0:
            raise ScenarioError("utility weight must be positive")
        if self.kind == "isoelastic":
            if self.beta is None or not (0.0 < self.beta < 1.0):
                raise ScenarioError("isoelastic utility needs beta in (0, 1)")
        elif self.beta is not None:
            raise ScenarioError("beta only applies to isoelastic utilities")

    def value(self, x: float) -> float:
        if x < 0:
            raise ValueError("rate must be non-negative")
        if self.kind == "log_shifted":
            return self.weight * math.log(x + math.e)
        return self.weight / (1.0 - self.beta) * x ** (1.0 - self.beta)

    def derivative(self, x: float) -> float:
        if x < 0:
            raise ValueError("rate must be non-negative")
        if self.kind == "log_shifted":
            return self.weight / (x + math.e)
        if x == 0.0:
            return math.inf  # marginal utility blows up at zero rate
        return self.weight * x ** (-self.beta)

    def inverse_derivative(self, g: float) -> float:
        """Rate at which marginal utility equals g (g > 0). May be negative
        for log_shifted; callers clamp."""
        if g <= 0:
            raise ValueError("marginal utility must be positive")
        if self.kind == "log_shifted":
            return self.weight / g - math.e
        return (g / self.weight) ** (-1.0 / self.beta)

    def rate_from_price(self, cost: float, lo: float, hi: float) -> float:
        """Demand at the given tree price, clamped into [lo, hi].

        Zero price means no congestion anywhere on the chosen tree, so the
        session asks for its maximum rate.
        """
        if cost <= 0:
            return hi
        if math.isinf(cost):
            return lo
        x = self.inverse_derivative(cost)
        return min(hi, max(lo, x))

    def surplus(self, price: float, lo: float, hi: float) -> float:
        """Maximized (utility - payment) at a per-unit price: the per-session
        term of the dual objective. Non-increasing in the price."""
        if price <= 0:
            raise ValueError("price must be positive")
        x = self.rate_from_price(price, lo, hi)
        return self.value(x) - x * price


def surplus_at(u: UtilitySpec, price: float, lo: float, hi: float) -> float:
    """surplus() extended by its one-sided limit at price 0 (demand pinned
    at the rate cap, payment vanishes)."""
    if price <= 0:
        return u.value(hi)
    return u.surplus(price, lo, hi)


def min_rate_surplus(u: UtilitySpec, lo: float) -> float:
    """U(m) - m * U'(m): must be non-negative for the certification bounds.

    At m = 0 the product term vanishes in the limit for both families.
    """
    if lo == 0.0:
        return u.value(0.0)
    return u.value(lo) - lo * u.derivative(lo)
