"""Event-driven replay of the distributed control protocol.

Per slot every link damps its price against the flow registrations it has
heard about, every source picks a tree under its (possibly stale) view of
the prices and fans out signaling packets along hop-count shortest paths,
and every node feeds its outgoing link prices back to every source.
Control packets preempt data; real data queues are traced at burst level.

With zero propagation delay and per-slot pricing the trajectory is
bit-identical to the synchronous engine: both call the same price update,
flow accumulation, and rate map helpers in the same order.
"""

from __future__ import annotations

import heapq
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .colgen import TreePool, local_min_cost_tree, make_global_oracle, maybe_admit
from .errors import ScenarioError
from .subgradient import StepRule, update_prices
from .trees import tree_cost

HEADER_BITS = 20 * 8
FIELD_BITS = 32


def control_overhead(n_nodes: int, n_links: int, slot_s, data_rate_bps=None):
    """Exact per-slot control traffic arithmetic for one source.

    Returns a dict of Fractions: forward/feedback bits per slot, their
    rates in bits per second, and (given a data rate) the overhead share.
    """
    if n_nodes < 1 or n_links < 1:
        raise ScenarioError("need at least one node and one link")
    slot = Fraction(slot_s).limit_denominator(10**9) if not isinstance(slot_s, Fraction) else slot_s
    if slot <= 0:
        raise ScenarioError("slot must be positive")
    forward_bits = Fraction((HEADER_BITS + FIELD_BITS + FIELD_BITS) * n_nodes + FIELD_BITS * n_links)
    feedback_bits = Fraction((HEADER_BITS + FIELD_BITS) * n_nodes + 2 * FIELD_BITS * n_links)
    forward_rate = forward_bits / slot
    feedback_rate = feedback_bits / slot
    out = {
        "forward_bits_per_slot": forward_bits,
        "feedback_bits_per_slot": feedback_bits,
        "forward_bps": forward_rate,
        "feedback_bps": feedback_rate,
    }
    if data_rate_bps is not None:
        rate = Fraction(data_rate_bps)
        out["overhead_fraction"] = (forward_rate + feedback_rate) / rate
    return out


@dataclass(frozen=True)
class ControlPacket:
    kind: str            # "signaling" | "feedback"
    src: str
    dst: str
    send_time: float
    bits: int
    payload: tuple       # signaling: ((link id, multiplicity), ...) + rate + session
                         # feedback: ((link id, price), ...)


def signaling_bits(n_link_ids: int, fixed_bytes=None) -> int:
    if fixed_bytes is not None:
        return fixed_bytes * 8
    return HEADER_BITS + FIELD_BITS + FIELD_BITS + FIELD_BITS * n_link_ids


def feedback_bits(n_links_reported: int, fixed_bytes=None) -> int:
    if fixed_bytes is not None:
        return fixed_bytes * 8
    return HEADER_BITS + FIELD_BITS + 2 * FIELD_BITS * n_links_reported


@dataclass(frozen=True)
class SimConfig:
    slot_s: float = 1.0
    horizon_slots: int = 100
    oracle: str = "approx:2"
    pricing_interval: int = 1
    rule: StepRule = StepRule("diminishing", 1e-3)
    control_packet_bytes: int | None = 400  # None -> format-derived sizes
    rate_unit_bps: float = 1e6              # capacities/rates are in this unit
    receiver_window: int = 10               # slots per receiving-rate average
    data_plane: bool = True

    def __post_init__(self):
        if self.horizon_slots < 1 or self.slot_s <= 0:
            raise ScenarioError("bad horizon or slot size")
        if self.pricing_interval < 1:
            raise ScenarioError("pricing interval must be >= 1")


class LinkQueue:
    """Burst-level FIFO of (tree, edge id, path position, bits)."""

    __slots__ = ("backlog", "arrived", "served", "chunks")

    def __init__(self):
        self.backlog = 0.0
        self.arrived = 0.0
        self.served = 0.0
        self.chunks: deque = deque()

    def push(self, tree, edge_id, pos, bits):
        if bits <= 0:
            return
        self.chunks.append([tree, edge_id, pos, bits])
        self.backlog += bits
        self.arrived += bits

    def serve(self, budget: float):
        """Pop up to ``budget`` bits; returns [(tree, edge id, pos, bits)]."""
        out = []
        while budget > 0 and self.chunks:
            chunk = self.chunks[0]
            take = min(budget, chunk[3])
            if take == chunk[3]:
                self.chunks.popleft()
            else:
                chunk[3] -= take
            budget -= take
            self.backlog -= take
            self.served += take
            out.append((chunk[0], chunk[1], chunk[2], take))
        return out


def _hop_paths(network):
    """BFS shortest paths (hop count, deterministic neighbor order).

    Returns {src: {dst: (delay_s, (link ids))}}.
    """
    out = {}
    for src in network.nodes:
        parent = {src: None}
        order = deque([src])
        while order:
            v = order.popleft()
            for ln in sorted(network.out[v], key=lambda l: l.id):
                if ln.head not in parent:
                    parent[ln.head] = ln
                    order.append(ln.head)
        table = {}
        for dst in network.nodes:
            if dst == src:
                table[dst] = (0.0, ())
                continue
            if dst not in parent:
                continue
            path = []
            v = dst
            while v != src:
                ln = parent[v]
                path.append(ln.id)
                v = ln.tail
            path.reverse()
            delay = sum(network.links[l].delay_ms for l in path) / 1000.0
            table[dst] = (delay, tuple(path))
        out[src] = table
    return out


@dataclass
class SourceView:
    """What a source believes: stale prices, its tree pool, pending tree."""

    session_id: str
    prices: np.ndarray
    pending: tuple | None = None  # (tree, rate) decided last slot


@dataclass
class SimResult:
    rows: list
    trajectory: list  # (slot, prices copy, x dict, tree key dict)
    delivered_bits: dict  # session id -> {receiver: bits}
    final_prices: np.ndarray
    pools: dict
    control_forward_bits: float
    control_feedback_bits: float


def run_sim(network, sessions, overlays, cfg: SimConfig) -> SimResult:
    sessions = sorted(sessions, key=lambda s: s.id)
    by_id = {s.id: s for s in sessions}
    n_links = network.n_links
    caps = network.capacities
    slot = cfg.slot_s
    unit = cfg.rate_unit_bps
    paths = _hop_paths(network)
    oracle = make_global_oracle(cfg.oracle, sessions, overlays)

    prices = np.zeros(n_links)
    flow_reg = np.zeros(n_links)  # rate registrations heard by the links
    views = {
        s.id: SourceView(s.id, np.zeros(n_links)) for s in sessions
    }
    pools = {s.id: TreePool() for s in sessions}
    queues = [LinkQueue() for _ in range(n_links)]
    receivers_of = {s.id: sorted(s.receivers) for s in sessions}
    delivered = {s.id: {r: 0.0 for r in receivers_of[s.id]} for s in sessions}
    recent = {s.id: deque(maxlen=cfg.receiver_window) for s in sessions}

    events = []  # (arrival time, seq, packet)
    seq = 0
    rows = []
    trajectory = []
    total_fwd = 0.0
    total_fb = 0.0
    slot_fwd = 0.0
    slot_fb = 0.0

    def schedule(packet: ControlPacket, delay: float, link_path):
        nonlocal seq
        for lid in link_path:
            control_bits_now[lid] += packet.bits
        if delay <= 0.0:
            _deliver(packet)
        else:
            heapq.heappush(events, (packet.send_time + delay, seq, packet))
            seq += 1

    def _deliver(packet: ControlPacket):
        if packet.kind == "feedback":
            view = views[packet.dst]
            for lid, value in packet.payload:
                view.prices[lid] = value
        else:
            sid, rate, usage = packet.payload
            for lid, cnt in usage:
                flow_reg[lid] += cnt * rate

    for k in range(cfg.horizon_slots):
        now = k * slot
        control_bits_now = np.zeros(n_links)
        slot_fwd = 0.0
        slot_fb = 0.0

        # control packets in flight that land by this slot
        while events and events[0][0] <= now + 1e-12:
            _, _, packet = heapq.heappop(events)
            _deliver(packet)

        # links update their prices from registered flow, then forget it
        if k > 0:
            delta = cfg.rule.at(k - 1)
            prices = update_prices(prices, delta, caps, flow_reg)
            flow_reg = np.zeros(n_links)

        # every node reports its outgoing link prices to every source
        for node in network.nodes:
            outs = sorted(network.out[node], key=lambda l: l.id)
            if not outs:
                continue
            for s in sessions:
                if s.source == node or s.source not in paths[node]:
                    continue
                delay, lpath = paths[node][s.source]
                payload = tuple((ln.id, float(prices[ln.id])) for ln in outs)
                pkt = ControlPacket(
                    "feedback", node, s.id, now,
                    feedback_bits(len(outs), cfg.control_packet_bytes), payload,
                )
                total_fb += pkt.bits
                slot_fb += pkt.bits
                schedule(pkt, delay, lpath)

        # sources decide a tree and rate under their current view
        live = {}
        for s in sessions:
            view = views[s.id]
            # a source reads its own outgoing link prices locally
            for ln in network.out[s.source]:
                view.prices[ln.id] = prices[ln.id]
            if k % cfg.pricing_interval == 0:
                candidate = oracle(s.id, view.prices)
                _, tree, _ = maybe_admit(
                    pools[s.id], s, overlays[s.id], candidate, view.prices, k
                )
            else:
                tree, _ = local_min_cost_tree(pools[s.id], s.id, view.prices)
            gamma = tree_cost(tree, view.prices)
            rate = s.utility.rate_from_price(gamma, s.rate_min, s.rate_max)
            live[s.id] = (tree, rate)
            # one signaling packet toward every physical node on the tree,
            # carrying that node's tree out-links; arrival registers flow
            node_usage: dict[str, list] = {}
            for eid in tree.key:
                e = overlays[s.id].edges[eid]
                for lid in e.path:
                    ln = network.links[lid]
                    node_usage.setdefault(ln.tail, []).append(lid)
            for node in sorted(node_usage):
                ids = sorted(node_usage[node])
                grouped = tuple(
                    (lid, ids.count(lid)) for lid in sorted(set(ids))
                )
                if s.source not in paths or node not in paths[s.source]:
                    raise ScenarioError(f"no control route {s.source}->{node}")
                delay, lpath = paths[s.source][node]
                pkt = ControlPacket(
                    "signaling", s.source, node, now,
                    signaling_bits(len(ids), cfg.control_packet_bytes),
                    (s.id, rate, grouped),
                )
                total_fwd += pkt.bits
                slot_fwd += pkt.bits
                schedule(pkt, delay, lpath)

        # data plane: inject last slot's decision, then store-and-forward
        served_delivery = {s.id: 0.0 for s in sessions}
        if cfg.data_plane:
            for s in sessions:
                pend = views[s.id].pending
                if pend is not None:
                    tree, rate = pend
                    bits = rate * unit * slot
                    for eid in tree.out_edges(s.source):
                        e = overlays[s.id].edges[eid]
                        queues[e.path[0]].push(tree, eid, 0, bits)
            forwarded = []
            for lid in range(n_links):
                budget = max(0.0, caps[lid] * unit * slot - control_bits_now[lid])
                forwarded.extend(queues[lid].serve(budget))
            for tree, eid, pos, bits in forwarded:
                sid = tree.session_id
                e = overlays[sid].edges[eid]
                if pos + 1 < len(e.path):
                    queues[e.path[pos + 1]].push(tree, eid, pos + 1, bits)
                    continue
                head = e.head
                if head in delivered[sid]:
                    delivered[sid][head] += bits
                    served_delivery[sid] += bits
                for nxt in tree.out_edges(head):
                    ne = overlays[sid].edges[nxt]
                    queues[ne.path[0]].push(tree, nxt, 0, bits)
        for s in sessions:
            recent[s.id].append(served_delivery[s.id])
            views[s.id].pending = live[s.id]

        backlogs = [q.backlog for q in queues]
        row = {
            "slot": k,
            "agg_backlog_bits": float(sum(backlogs)),
            "max_backlog_bits": float(max(backlogs)) if backlogs else 0.0,
            "control_fwd_bits": slot_fwd,
            "control_fb_bits": slot_fb,
        }
        for s in sessions:
            tree, rate = live[s.id]
            row[f"x:{s.id}"] = rate
            row[f"tree:{s.id}"] = tree.key_str()
            window_bits = sum(recent[s.id])
            denom = len(recent[s.id]) * slot * unit * max(1, len(receivers_of[s.id]))
            row[f"recv_rate:{s.id}"] = window_bits / denom if denom else 0.0
        rows.append(row)
        trajectory.append(
            (k, prices.copy(), {sid: r for sid, (_, r) in live.items()},
             {sid: t.key for sid, (t, _) in live.items()})
        )

    return SimResult(
        rows=rows,
        trajectory=trajectory,
        delivered_bits=delivered,
        final_prices=prices,
        pools=pools,
        control_forward_bits=total_fwd,
        control_feedback_bits=total_fb,
    )
