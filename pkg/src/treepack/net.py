"""Network model: capacitated digraph, sessions, test profiles, overlays.

The solver prices and meters capacity on *physical* links.  Trees, however,
live on an overlay graph whose edges map to physical link paths.  For plain
graph scenarios the overlay mirrors the physical graph one-to-one; for the
hub-and-spoke access profiles every pair of participating edge nodes is
joined by an overlay edge that crosses the sender's upload link and the
recipient's download link.  This keeps shared access links as single
capacity constraints instead of double-counting them per overlay edge.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ScenarioError
from .utility import UtilitySpec


@dataclass(frozen=True)
class Link:
    id: int
    tail: str
    head: str
    capacity: float
    delay_ms: float = 0.0


class Network:
    """Directed capacitated graph. Immutable after construction."""

    def __init__(self, links):
        self.links: tuple[Link, ...] = tuple(
            Link(i, str(t), str(h), float(c), float(d))
            for i, (t, h, c, d) in enumerate(links)
        )
        seen = set()
        for ln in self.links:
            if ln.tail == ln.head:
                raise ScenarioError(f"self-loop on node {ln.tail!r}")
            if ln.capacity <= 0:
                raise ScenarioError(f"non-positive capacity on {ln.tail}->{ln.head}")
            if (ln.tail, ln.head) in seen:
                raise ScenarioError(f"duplicate link {ln.tail}->{ln.head}")
            seen.add((ln.tail, ln.head))
        self.nodes: tuple[str, ...] = tuple(
            sorted({ln.tail for ln in self.links} | {ln.head for ln in self.links})
        )
        self._by_ends = {(ln.tail, ln.head): ln for ln in self.links}
        self.capacities: np.ndarray = np.array(
            [ln.capacity for ln in self.links], dtype=float
        )
        self.out: dict[str, list[Link]] = {v: [] for v in self.nodes}
        self.inn: dict[str, list[Link]] = {v: [] for v in self.nodes}
        for ln in self.links:
            self.out[ln.tail].append(ln)
            self.inn[ln.head].append(ln)

    @property
    def n_links(self) -> int:
        return len(self.links)

    def link(self, tail: str, head: str) -> Link:
        return self._by_ends[(tail, head)]

    def has_link(self, tail: str, head: str) -> bool:
        return (tail, head) in self._by_ends


@dataclass(frozen=True)
class Session:
    id: str
    source: str
    receivers: frozenset[str]
    rate_min: float
    rate_max: float
    utility: UtilitySpec

    def __post_init__(self):
        if not self.receivers:
            raise ScenarioError(f"session {self.id!r} has no receivers")
        if self.source in self.receivers:
            raise ScenarioError(f"session {self.id!r}: source is a receiver")
        if not (0 <= self.rate_min < self.rate_max):
            raise ScenarioError(
                f"session {self.id!r}: need 0 <= rate_min < rate_max"
            )

    @property
    def nodes(self) -> frozenset[str]:
        return self.receivers | {self.source}


def check_sessions(network: Network, sessions) -> None:
    node_set = set(network.nodes)
    for s in sessions:
        missing = s.nodes - node_set
        if missing:
            raise ScenarioError(f"session {s.id!r}: unknown nodes {sorted(missing)}")


@dataclass(frozen=True)
class OverlayEdge:
    id: int
    tail: str
    head: str
    path: tuple[int, ...]  # physical link ids crossed, in order


class Overlay:
    """Graph a session's trees are drawn from.

    Each edge carries the physical link path it occupies, so tree link usage
    (the incidence column, with multiplicity) is derived mechanically.
    """

    def __init__(self, network: Network, nodes, edges):
        self.network = network
        self.nodes: tuple[str, ...] = tuple(nodes)
        self.edges: tuple[OverlayEdge, ...] = tuple(
            OverlayEdge(i, t, h, tuple(p)) for i, (t, h, p) in enumerate(edges)
        )
        self.node_index: dict[str, int] = {v: i for i, v in enumerate(self.nodes)}
        n = len(self.nodes)
        self.out_edges: list[list[OverlayEdge]] = [[] for _ in range(n)]
        self.in_edges: list[list[OverlayEdge]] = [[] for _ in range(n)]
        for e in self.edges:
            self.out_edges[self.node_index[e.tail]].append(e)
            self.in_edges[self.node_index[e.head]].append(e)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def edge_costs(self, prices: np.ndarray) -> np.ndarray:
        """Per-edge cost induced by physical link prices (path sums)."""
        w = np.empty(len(self.edges))
        for e in self.edges:
            acc = 0.0
            for lid in e.path:
                acc += prices[lid]
            w[e.id] = acc
        return w

    @classmethod
    def mirror(cls, network: Network, nodes=None) -> "Overlay":
        """Identity overlay: one overlay edge per physical link.

        With a node subset, only links between those nodes are kept (the
        induced subgraph used by separate swarming on plain graphs).
        """
        if nodes is None:
            keep = network.links
            node_list = network.nodes
        else:
            nodeset = set(nodes)
            keep = [
                ln
                for ln in network.links
                if ln.tail in nodeset and ln.head in nodeset
            ]
            node_list = tuple(sorted(nodeset))
        return cls(network, node_list, [(ln.tail, ln.head, (ln.id,)) for ln in keep])

    @classmethod
    def through_hub(cls, network: Network, participants, hub: str) -> "Overlay":
        """Complete overlay among participants, each edge routed via the hub.

        An overlay edge a->b exists when a has an upload link a->hub and b a
        download link hub->b.  Sources typically lack a download link and so
        never appear as overlay edge heads.
        """
        parts = sorted(participants)
        edges = []
        for a in parts:
            if not network.has_link(a, hub):
                continue
            up = network.link(a, hub)
            for b in parts:
                if b == a or not network.has_link(hub, b):
                    continue
                down = network.link(hub, b)
                edges.append((a, b, (up.id, down.id)))
        return cls(network, parts, edges)


@dataclass(frozen=True)
class ProfileSpec:
    """Hub-and-spoke test profile: per-session sizes and access bandwidths.

    Standard ids A1..C3 follow the published experiment grid: the letter
    selects the (large, small) receiver-count split and the digit selects the
    bandwidth set.  Custom profiles supply ``session_params`` directly.
    """

    profile_id: str
    # one entry per session: (name, receiver_count, u_source, u_receiver, d_receiver)
    session_params: tuple[tuple[str, int, float, float, float], ...]
    mode: str = "separate"

    def __post_init__(self):
        if self.mode not in ("separate", "universal"):
            raise ScenarioError(f"unknown mode {self.mode!r}")
        for name, size, us, ui, di in self.session_params:
            if size < 1:
                raise ScenarioError(f"profile session {name!r}: size must be >= 1")
            if us <= 0 or di <= 0 or (ui is not None and ui <= 0):
                raise ScenarioError(f"profile session {name!r}: bandwidths must be > 0")


# Published experiment grid.  Digit picks the bandwidth set (u_s, u_i, d_i)
# per session; letter picks the receiver-count split.
_BANDWIDTH_SETS = {
    "1": ((640.0, 360.0, 360.0), (640.0, 36.0, 360.0)),
    "2": ((280.0, 360.0, 360.0), (280.0, 36.0, 360.0)),
    "3": ((640.0, 200.0, 360.0), (640.0, 20.0, 360.0)),
}
_SIZE_SPLITS = {"A": (90, 10), "B": (50, 50), "C": (10, 90)}


def standard_profile(profile_id: str, mode: str = "separate") -> ProfileSpec:
    pid = profile_id.upper()
    if len(pid) != 2 or pid[0] not in _SIZE_SPLITS or pid[1] not in _BANDWIDTH_SETS:
        raise ScenarioError(f"unknown profile id {profile_id!r} (expected A1..C3)")
    sizes = _SIZE_SPLITS[pid[0]]
    bands = _BANDWIDTH_SETS[pid[1]]
    params = []
    for name, size, (us, ui, di) in zip(("rich", "poor"), sizes, bands):
        params.append((name, size, us, ui, di))
    return ProfileSpec(pid, tuple(params), mode)


def build_profile(spec: ProfileSpec, scale: float = 1.0, rate_max: float | None = None):
    """Materialize a profile: star network, sessions, per-session overlays.

    ``scale`` shrinks receiver counts proportionally (0.1 turns 90 into 9);
    a session scaled to zero receivers is rejected.  Returns
    ``(network, sessions, overlays)`` where overlays maps session id to its
    tree graph (one shared overlay object in universal mode).
    """
    if scale <= 0:
        raise ScenarioError("scale must be positive")
    links = []
    session_defs = []
    caps = []
    for name, size, us, ui, di in spec.session_params:
        n_recv = int(round(size * scale))
        if n_recv < 1:
            raise ScenarioError(
                f"scale {scale} leaves session {name!r} with zero receivers"
            )
        src = f"{name}.src"
        recvs = [f"{name}.r{i:02d}" for i in range(n_recv)]
        links.append((src, "hub", us, 0.0))
        for r in recvs:
            if ui is not None:  # receivers without upload never relay
                links.append((r, "hub", ui, 0.0))
            links.append(("hub", r, di, 0.0))
        caps += [us, di] + ([ui] if ui is not None else [])
        session_defs.append((name, src, recvs))
    # hub is modeled as a node rather than true infinity; see capacity factor
    network = Network(links)
    sessions = []
    for name, src, recvs in session_defs:
        sessions.append(
            Session(
                id=name,
                source=src,
                receivers=frozenset(recvs),
                rate_min=0.0,
                rate_max=float(rate_max) if rate_max is not None else 2.0 * max(caps),
                utility=UtilitySpec("log_shifted", 1.0),
            )
        )
    overlays = build_overlays(network, sessions, spec.mode, hub="hub")
    return network, sessions, overlays


def build_overlays(network, sessions, mode, hub=None) -> dict[str, Overlay]:
    """Per-session tree graphs for the given swarming mode.

    Universal mode shares one overlay across sessions (trees may relay
    through other sessions' nodes); separate mode restricts each session to
    its own nodes.
    """
    if mode == "universal":
        if hub is not None:
            participants = sorted(set().union(*(s.nodes for s in sessions)))
            shared = Overlay.through_hub(network, participants, hub)
        else:
            shared = Overlay.mirror(network)
        return {s.id: shared for s in sessions}
    if mode == "separate":
        out = {}
        for s in sessions:
            if hub is not None:
                out[s.id] = Overlay.through_hub(network, sorted(s.nodes), hub)
            else:
                out[s.id] = Overlay.mirror(network, s.nodes)
        return out
    raise ScenarioError(f"unknown mode {mode!r}")


def separate_optimum(u_source: float, u_receivers, d_receivers) -> float:
    """Closed-form peak rate of one session swarming on its own access links.

    min of: source upload, slowest receiver download, and aggregate upload
    spread over the receivers.
    """
    ups = list(u_receivers)
    downs = list(d_receivers)
    if not ups or len(ups) != len(downs):
        raise ScenarioError("need one upload and one download per receiver")
    if u_source <= 0 or min(ups) <= 0 or min(downs) <= 0:
        raise ScenarioError("bandwidths must be positive")
    n = len(ups)
    return min(u_source, min(downs), (u_source + sum(ups)) / n)


def profile_separate_optima(spec: ProfileSpec, scale: float = 1.0) -> dict[str, float]:
    """separate_optimum per session of a profile at the given scale."""
    out = {}
    for name, size, us, ui, di in spec.session_params:
        n_recv = int(round(size * scale))
        out[name] = separate_optimum(us, [ui] * n_recv, [di] * n_recv)
    return out
