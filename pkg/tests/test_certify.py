import math

import numpy as np
import pytest

from treepack import (
    CertificateRefused,
    ColGenConfig,
    Network,
    ProfileSpec,
    StepRule,
    UtilitySpec,
    build_profile,
    certificate_rho,
    colgen_run,
    exact_reference,
    sandwich,
    separate_optimum,
)
from treepack.net import Overlay, Session, build_overlays
from treepack.scenario import fig_tree_toy
from treepack.gen import random_scenario


def test_single_tree_bottleneck():
    net = Network([("s", "r", 2.5, 0.0)])
    sessions = [Session("a", "s", frozenset({"r"}), 0.0, 10.0, UtilitySpec("log_shifted", 1.0))]
    overlays = build_overlays(net, sessions, "universal")
    x, obj = exact_reference(net, sessions, overlays)
    assert x["a"] == pytest.approx(2.5, abs=1e-6)
    assert obj == pytest.approx(sessions[0].utility.value(2.5), abs=1e-6)


def test_toy_universal_doubles_separate():
    toy = fig_tree_toy()
    x_uni, _ = exact_reference(toy.network, toy.sessions, toy.overlays)
    sep_overlays = build_overlays(toy.network, toy.sessions, "separate")
    x_sep, _ = exact_reference(toy.network, toy.sessions, sep_overlays)
    assert x_sep["a"] == pytest.approx(1.0, abs=1e-6)
    assert x_uni["a"] == pytest.approx(2.0 * x_sep["a"], rel=1e-5)


def test_reference_matches_closed_form_on_small_profile():
    # 3+1 receivers with the resource-poor bandwidth structure; small enough
    # for full enumeration
    spec = ProfileSpec(
        "mini",
        (("big", 3, 640.0, 360.0, 360.0), ("small", 1, 640.0, 36.0, 360.0)),
        "separate",
    )
    net, sessions, overlays = build_profile(spec, 1.0)
    x, _ = exact_reference(net, sessions, overlays)
    for s in sessions:
        n = len(s.receivers)
        name = s.id
        ui = 360.0 if name == "big" else 36.0
        want = separate_optimum(640.0, [ui] * n, [360.0] * n)
        assert x[name] == pytest.approx(want, rel=1e-5)


def test_reference_is_deterministic():
    sc = random_scenario(2, n_nodes=6, edge_prob=0.35, max_receivers=2)
    a = exact_reference(sc.network, sc.sessions, sc.overlays)
    b = exact_reference(sc.network, sc.sessions, sc.overlays)
    assert a[1] == b[1]
    assert all(abs(a[0][k] - b[0][k]) < 1e-9 for k in a[0])


def _converged_toy(oracle="exact", iterations=12_000):
    toy = fig_tree_toy()
    cfg = ColGenConfig(
        oracle=oracle, pricing_interval=1, rule=StepRule("diminishing", 0.02),
        iterations=iterations, detect_convergence=False,
    )
    return toy, colgen_run(toy.network, toy.sessions, toy.overlays, cfg)


def test_sandwich_exact_collapses_to_equalities():
    toy, res = _converged_toy()
    cert = sandwich(res, toy.network, toy.sessions, toy.overlays, rho=1.0)
    assert cert.ok and cert.settled and cert.certifying
    ref = cert.optimal_objective
    assert cert.dual_restricted == pytest.approx(ref, rel=1e-3)
    assert cert.dual_scaled == pytest.approx(ref, rel=1e-3)
    assert cert.primal_avg == pytest.approx(ref, rel=1e-3)


def test_sandwich_chain_with_approx_oracle():
    toy, res = _converged_toy(oracle="approx:2")
    rho = certificate_rho("approx:2", toy.sessions)
    assert rho == pytest.approx(2.0 * math.sqrt(2))
    cert = sandwich(res, toy.network, toy.sessions, toy.overlays, rho=rho)
    assert cert.ok and cert.settled
    # the price-only inequality is exactly computable
    assert cert.dual_scaled <= rho * cert.dual_restricted + 1e-9
    # terms through the solved optimum carry convergence/solver tolerance
    tol = 2e-3 * abs(cert.optimal_objective)
    assert cert.dual_restricted <= cert.optimal_objective + tol
    assert cert.optimal_objective <= cert.dual_scaled + tol
    assert cert.primal_avg <= cert.optimal_objective + tol
    assert cert.optimal_objective <= rho * cert.primal_avg + tol


def test_sandwich_zero_price_degenerate():
    # a network so overprovisioned that prices never lift: chain is tight at
    # the utility of the rate caps
    net = Network([("s", "r", 100.0, 0.0)])
    sessions = [Session("a", "s", frozenset({"r"}), 0.0, 1.0, UtilitySpec("log_shifted", 1.0))]
    overlays = build_overlays(net, sessions, "universal")
    cfg = ColGenConfig(oracle="exact", rule=StepRule("constant", 0.01),
                       iterations=200, detect_convergence=False)
    res = colgen_run(net, sessions, overlays, cfg)
    assert np.all(res.prices == 0.0)
    cert = sandwich(res, net, sessions, overlays, rho=1.0)
    want = sessions[0].utility.value(1.0)
    assert cert.dual_restricted == pytest.approx(want, abs=1e-9)
    assert cert.dual_scaled == pytest.approx(want, abs=1e-9)
    assert cert.ok


class _BadUtility:
    """Synthetic utility violating the minimum-rate surplus condition."""

    kind = "synthetic"
    weight = 1.0
    beta = None

    def value(self, x):
        return math.log(x + 0.1) if x > 0 else math.log(0.1)

    def derivative(self, x):
        return 1.0 / (x + 0.1)


def test_sandwich_refuses_bad_min_rate_surplus():
    toy, res = _converged_toy(iterations=300)
    bad = toy.sessions[0].__class__(
        id="a", source="1", receivers=frozenset({"2", "3"}),
        rate_min=0.0, rate_max=3.0, utility=_BadUtility(),
    )
    with pytest.raises(CertificateRefused):
        sandwich(res, toy.network, [bad], toy.overlays, rho=1.0)


def test_sandwich_rejects_rho_below_one():
    toy, res = _converged_toy(iterations=300)
    with pytest.raises(CertificateRefused):
        sandwich(res, toy.network, toy.sessions, toy.overlays, rho=0.5)
