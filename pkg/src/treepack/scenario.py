"""Scenario files: JSON documents describing a network, its sessions, the
swarming mode, and default solver/simulator parameters.

Two overlay kinds are supported:

* ``direct``: trees are drawn from the physical graph itself.
* ``hub``:    star topology; trees are drawn from the complete overlay among
              edge nodes, each overlay edge crossing two access links.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .colgen import ColGenConfig
from .errors import ScenarioError
from .net import (
    Network,
    ProfileSpec,
    Session,
    build_overlays,
    build_profile,
    check_sessions,
    standard_profile,
)
from .simulate import SimConfig
from .subgradient import StepRule
from .utility import UtilitySpec


@dataclass
class Scenario:
    name: str
    mode: str
    network: Network
    sessions: list
    overlays: dict
    hub: str | None = None
    solver: dict = field(default_factory=dict)
    sim: dict = field(default_factory=dict)

    def solver_config(self, **overrides) -> ColGenConfig:
        opts = dict(self.solver)
        opts.update({k: v for k, v in overrides.items() if v is not None})
        rule = StepRule(
            opts.pop("step_rule", "diminishing"), float(opts.pop("step_size", 1e-3))
        )
        known = {
            "oracle", "pricing_interval", "iterations", "window_start",
            "detect_convergence", "gap_tol", "gap_patience", "feas_tol",
            "trace", "record_flows", "seed_trees",
        }
        extra = {k: v for k, v in opts.items() if k in known}
        return ColGenConfig(rule=rule, **extra)

    def sim_config(self, **overrides) -> SimConfig:
        opts = dict(self.sim)
        opts.update({k: v for k, v in overrides.items() if v is not None})
        rule = StepRule(
            opts.pop("step_rule", self.solver.get("step_rule", "diminishing")),
            float(opts.pop("step_size", self.solver.get("step_size", 1e-3))),
        )
        known = {
            "slot_s", "horizon_slots", "oracle", "pricing_interval",
            "control_packet_bytes", "rate_unit_bps", "receiver_window",
            "data_plane",
        }
        extra = {k: v for k, v in opts.items() if k in known}
        return SimConfig(rule=rule, **extra)


def scenario_from_dict(doc: dict, name: str = "scenario") -> Scenario:
    try:
        links = [
            (
                ln["tail"],
                ln["head"],
                float(ln["capacity"]),
                float(ln.get("delay_ms", 0.0)),
            )
            for ln in doc["links"]
        ]
        network = Network(links)
        sessions = []
        for sd in doc["sessions"]:
            ud = sd.get("utility", {"kind": "log_shifted", "weight": 1.0})
            util = UtilitySpec(
                ud.get("kind", "log_shifted"),
                float(ud.get("weight", 1.0)),
                ud.get("beta"),
            )
            sessions.append(
                Session(
                    id=str(sd["id"]),
                    source=str(sd["source"]),
                    receivers=frozenset(str(r) for r in sd["receivers"]),
                    rate_min=float(sd.get("rate_min", 0.0)),
                    rate_max=float(sd["rate_max"]),
                    utility=util,
                )
            )
        check_sessions(network, sessions)
        mode = doc.get("mode", "universal")
        overlay_doc = doc.get("overlay", {"kind": "direct"})
        kind = overlay_doc.get("kind", "direct")
        if kind == "hub":
            hub = str(overlay_doc.get("hub", "hub"))
            if hub not in network.nodes:
                raise ScenarioError(f"hub node {hub!r} not in network")
            overlays = build_overlays(network, sessions, mode, hub=hub)
        elif kind == "direct":
            hub = None
            overlays = build_overlays(network, sessions, mode, hub=None)
        else:
            raise ScenarioError(f"unknown overlay kind {kind!r}")
    except KeyError as exc:
        raise ScenarioError(f"scenario missing field {exc}") from exc
    return Scenario(
        name=doc.get("name", name),
        mode=mode,
        network=network,
        sessions=sessions,
        overlays=overlays,
        hub=hub,
        solver=dict(doc.get("solver", {})),
        sim=dict(doc.get("sim", {})),
    )


def scenario_to_dict(sc: Scenario) -> dict:
    doc = {
        "name": sc.name,
        "mode": sc.mode,
        "overlay": {"kind": "hub", "hub": sc.hub} if sc.hub else {"kind": "direct"},
        "links": [
            {
                "tail": ln.tail,
                "head": ln.head,
                "capacity": ln.capacity,
                "delay_ms": ln.delay_ms,
            }
            for ln in sc.network.links
        ],
        "sessions": [
            {
                "id": s.id,
                "source": s.source,
                "receivers": sorted(s.receivers),
                "rate_min": s.rate_min,
                "rate_max": s.rate_max,
                "utility": {
                    "kind": s.utility.kind,
                    "weight": s.utility.weight,
                    **({"beta": s.utility.beta} if s.utility.beta is not None else {}),
                },
            }
            for s in sc.sessions
        ],
    }
    if sc.solver:
        doc["solver"] = sc.solver
    if sc.sim:
        doc["sim"] = sc.sim
    return doc


def load_scenario(path) -> Scenario:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(
            f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}"
        ) from exc
    return scenario_from_dict(doc, name=p.stem)


def save_scenario(sc: Scenario, path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(sc), indent=2) + "\n")


def packaged_scenario(name: str) -> Scenario:
    """Load one of the scenario files shipped with the package."""
    ref = resources.files("treepack").joinpath(f"scenarios/{name}.scn")
    if not ref.is_file():
        raise ScenarioError(f"no packaged scenario named {name!r}")
    doc = json.loads(ref.read_text())
    return scenario_from_dict(doc, name=name)


def resolve_scenario(ref: str) -> Scenario:
    """File path if it exists, else a packaged scenario name."""
    if Path(ref).is_file():
        return load_scenario(ref)
    return packaged_scenario(ref)


def profile_scenario(profile, scale: float = 1.0, mode: str | None = None,
                     solver: dict | None = None) -> Scenario:
    """Scenario wrapper around a hub profile at the given scale."""
    if isinstance(profile, str):
        spec = standard_profile(profile, mode or "separate")
    else:
        spec = profile
        if mode is not None:
            spec = ProfileSpec(spec.profile_id, spec.session_params, mode)
    network, sessions, overlays = build_profile(spec, scale)
    defaults = {
        "oracle": "arborescence" if spec.mode == "separate" else "approx:2",
        "step_rule": "constant",
        "step_size": 5e-7,
        "iterations": 20_000,
        "window_start": 10_000,
        "detect_convergence": False,
    }
    defaults.update(solver or {})
    return Scenario(
        name=f"{spec.profile_id}@{scale:g}",
        mode=spec.mode,
        network=network,
        sessions=sessions,
        overlays=overlays,
        hub="hub",
        solver=defaults,
    )


def fig_tree_toy(rate_max: float = 3.0) -> Scenario:
    """Four-node toy: source 1 serves 2 and 3; node 4 can relay.

    Unit capacities everywhere, so relaying through node 4 doubles the
    achievable rate over the direct two-edge tree.
    """
    doc = {
        "name": "toy4",
        "mode": "universal",
        "overlay": {"kind": "direct"},
        "links": [
            {"tail": "1", "head": "2", "capacity": 1.0},
            {"tail": "1", "head": "3", "capacity": 1.0},
            {"tail": "1", "head": "4", "capacity": 1.0},
            {"tail": "4", "head": "2", "capacity": 1.0},
            {"tail": "4", "head": "3", "capacity": 1.0},
        ],
        "sessions": [
            {
                "id": "a",
                "source": "1",
                "receivers": ["2", "3"],
                "rate_max": rate_max,
                "utility": {"kind": "log_shifted", "weight": 1.0},
            }
        ],
        "solver": {
            "oracle": "exact",
            "step_rule": "diminishing",
            "step_size": 0.05,
            "iterations": 5000,
        },
    }
    return scenario_from_dict(doc)
