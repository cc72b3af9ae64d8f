"""AODV route discovery and maintenance, with the density-driven RREQ gate.

Standard AODV rebroadcasts the first copy of every RREQ.  With the gate
enabled, an intermediate node that hears more than ``d`` neighbours forwards
only with probability ``(100 / beta) * d * c_f`` percent, compared against a
fresh draw on [0, 100).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import TYPE_CHECKING, Callable, Optional

from .mac import BROADCAST, CONTROL, DATA, Frame

if TYPE_CHECKING:
    from .simulation import Simulation
    from .traffic import DataPacket

# payload sizes in bytes (RFC 3561 layouts); every packet also carries IP+UDP
RREQ_BYTES = 24
RREP_BYTES = 20
HELLO_BYTES = 20
RERR_BASE_BYTES = 4
RERR_ENTRY_BYTES = 8
IP_UDP_BYTES = 28

CONTROL_KINDS = ("RREQ", "RREP", "RERR", "HELLO")

# process_rreq outcomes
REPLIED = "replied"
FORWARDED = "forwarded"
SUPPRESSED_DUPLICATE = "suppressed-duplicate"
SUPPRESSED_BY_GATE = "suppressed-by-gate"
SUPPRESSED_TTL = "suppressed-ttl"
# process_rrep outcomes
CONSUMED_AT_SOURCE = "consumed-at-source"
FORWARDED_TOWARD_ORIGINATOR = "forwarded-toward-originator"
DROPPED_NO_REVERSE_ROUTE = "dropped-no-reverse-route"
IGNORED_STALE = "ignored-stale"
# send_data outcomes
SENT = "forwarded"
BUFFERED = "buffered-awaiting-route"
DROPPED_NO_ROUTE = "dropped-no-route"


@dataclass(frozen=True, slots=True)
class Rreq:
    originator: int
    originator_seq: int
    rreq_id: int
    destination: int
    dest_seq_known: int
    hop_count: int = 0

    def __str__(self):
        return f"o={self.originator} id={self.rreq_id} d={self.destination} hc={self.hop_count}"


@dataclass(frozen=True, slots=True)
class Rrep:
    originator: int
    destination: int
    dest_seq: int
    hop_count: int
    lifetime: float

    def __str__(self):
        return f"o={self.originator} d={self.destination} seq={self.dest_seq} hc={self.hop_count}"


@dataclass(frozen=True, slots=True)
class Rerr:
    unreachable: tuple[tuple[int, int], ...]

    def __str__(self):
        return " ".join(f"{d}/{s}" for d, s in self.unreachable)


@dataclass(frozen=True, slots=True)
class Hello:
    sender: int
    seq: int

    def __str__(self):
        return f"s={self.sender}"


@dataclass(frozen=True)
class AodvParams:
    hello_interval: float = 1.0
    neighbor_freshness: float = 2.5
    rreq_retries: int = 2
    rreq_wait: float = 1.0
    active_route_timeout: float = 10.0
    buffer_capacity: int = 64
    buffer_timeout: float = 30.0
    net_diameter: int = 30
    seen_lifetime: float = 10.0

    def __post_init__(self):
        for name in ("hello_interval", "neighbor_freshness", "rreq_wait",
                     "active_route_timeout", "buffer_timeout", "seen_lifetime"):
            if not getattr(self, name) > 0:
                raise ValueError(f"aodv.{name} must be positive")
        if self.rreq_retries < 0:
            raise ValueError("aodv.rreq_retries must be >= 0")
        if self.buffer_capacity < 1 or self.net_diameter < 1:
            raise ValueError("aodv.buffer_capacity and aodv.net_diameter must be >= 1")


@dataclass(frozen=True)
class ExtParams:
    enabled: bool = False
    d: int = 5
    c_f: float = 1.0

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("ext.d must be >= 1")
        if not 0 < self.c_f <= 1:
            raise ValueError("ext.c_f must lie in (0, 1]")


def forwarding_probability(beta: int, d: int, c_f: float) -> float:
    """Forwarding chance in percent for a node with ``beta > d`` neighbours."""
    if beta <= d:
        raise ValueError(f"beta={beta} <= d={d}: such nodes always forward")
    if not 0 < c_f <= 1:
        raise ValueError("c_f must lie in (0, 1]")
    return (100.0 / beta) * (d * c_f)


@dataclass(frozen=True)
class GateDecision:
    forward: bool
    beta: int
    p: Optional[float] = None  # percent; None when beta <= d
    r: Optional[float] = None  # the draw; None when none was taken


def gate_decision(beta: int, params: ExtParams, draw: Callable[[], float]) -> GateDecision:
    """Apply the density gate; ``draw`` is only called when ``beta > d``."""
    if beta <= params.d:
        return GateDecision(True, beta)
    p = forwarding_probability(beta, params.d, params.c_f)
    r = draw()
    return GateDecision(r < p, beta, p, r)


class RouteEntry:
    __slots__ = ("destination", "next_hop", "hop_count", "dest_seq", "seq_known", "expires_at",
                 "valid", "last_used")

    def __init__(self, destination, next_hop, hop_count, dest_seq, seq_known, expires_at):
        self.destination = destination
        self.next_hop = next_hop
        self.hop_count = hop_count
        self.dest_seq = dest_seq
        self.seq_known = seq_known
        self.expires_at = expires_at
        self.valid = True
        self.last_used = float("-inf")

    def usable(self, t: float) -> bool:
        return self.valid and self.expires_at > t

    def __repr__(self):
        state = "valid" if self.valid else "invalid"
        return (f"RouteEntry(dst={self.destination}, via={self.next_hop}, hops={self.hop_count}, "
                f"seq={self.dest_seq}, until={self.expires_at:.3f}, {state})")


class RoutingTable:
    def __init__(self):
        self.entries: dict[int, RouteEntry] = {}

    def get(self, dest: int) -> Optional[RouteEntry]:
        return self.entries.get(dest)

    def lookup(self, dest: int, t: float) -> Optional[RouteEntry]:
        e = self.entries.get(dest)
        if e is not None and e.valid and e.expires_at > t:
            return e
        return None

    def update(self, dest: int, next_hop: int, hops: int, seq: int, seq_known: bool,
               t: float, lifetime: float) -> bool:
        """Install or refresh a route under the AODV freshness rules.

        Newer sequence numbers win; equal numbers win when shorter or when the
        current entry is unusable.  Information without a sequence number only
        fills a missing or unusable entry.  Returns True if the entry changed.
        """
        e = self.entries.get(dest)
        if e is None:
            self.entries[dest] = RouteEntry(dest, next_hop, hops, seq if seq_known else 0,
                                            seq_known, t + lifetime)
            return True
        usable = e.valid and e.expires_at > t
        if not seq_known:
            take = not usable
        elif not e.seq_known or seq > e.dest_seq:
            take = True
        elif seq == e.dest_seq:
            take = not usable or hops < e.hop_count
        else:
            take = False
        if not take:
            return False
        e.next_hop = next_hop
        e.hop_count = hops
        if seq_known:
            e.dest_seq = seq
            e.seq_known = True
        e.expires_at = max(e.expires_at if usable else t, t + lifetime)
        e.valid = True
        return True


class NeighborTable:
    def __init__(self):
        self.last_heard: dict[int, float] = {}

    def heard(self, neighbour: int, t: float) -> None:
        self.last_heard[neighbour] = t

    def count(self, t: float, window: float) -> int:
        cutoff = t - window
        return sum(1 for h in self.last_heard.values() if h >= cutoff)

    def expire(self, t: float, window: float) -> list[int]:
        cutoff = t - window
        lost = [nb for nb, h in self.last_heard.items() if h < cutoff]
        for nb in lost:
            del self.last_heard[nb]
        return lost


class AodvAgent:
    """Routing state and message handling for one node."""

    def __init__(self, node: int, net: "Simulation"):
        self.node = node
        self.net = net
        self.params: AodvParams = net.aodv
        self.ext: ExtParams = net.ext
        self.seq = 0
        self.rreq_id = 0
        self.table = RoutingTable()
        self.neighbours = NeighborTable()
        self.seen: dict[tuple[int, int], float] = {}
        self.buffer: dict[int, deque] = {}
        self.buffered = 0
        self.discoveries: dict[int, list] = {}  # dest -> [timeout event, retries left]
        self.rerr_sent: dict[int, float] = {}
        self.hello_event = None

    # ------------------------------------------------------------------ frames

    def _control(self, dst: int, kind: str, msg, payload_bytes: int) -> str:
        net = self.net
        size = net.mac.params.header_bits + (payload_bytes + IP_UDP_BYTES) * 8
        return net.mac.enqueue(self.node, Frame(self.node, dst, kind, msg, size, CONTROL))

    def _data_frame(self, next_hop: int, packet: "DataPacket") -> str:
        net = self.net
        size = net.mac.params.header_bits + (net.traffic.packet_size + IP_UDP_BYTES) * 8
        return net.mac.enqueue(self.node, Frame(self.node, next_hop, "DATA", packet, size, DATA))

    def receive(self, frame: Frame, prev_hop: int) -> Optional[str]:
        t = self.net.engine.now
        self.neighbours.heard(prev_hop, t)
        kind = frame.kind
        if kind == "DATA":
            return self.receive_data(frame.payload, prev_hop)
        if kind == "RREQ":
            return self.process_rreq(frame.payload, prev_hop)
        if kind == "RREP":
            return self.process_rrep(frame.payload, prev_hop)
        if kind == "RERR":
            return self.process_rerr(frame.payload, prev_hop)
        return None

    # -------------------------------------------------------------------- data

    def send_data(self, packet: "DataPacket") -> str:
        t = self.net.engine.now
        route = self.table.lookup(packet.dst, t)
        if route is not None:
            self._forward(packet, route, t)
            return SENT
        if self.buffered >= self.params.buffer_capacity:
            self.net.drop(packet, "buffer-overflow")
            return DROPPED_NO_ROUTE
        self.buffer.setdefault(packet.dst, deque()).append((packet, t))
        self.buffered += 1
        if packet.dst not in self.discoveries:
            self._originate(packet.dst, self.params.rreq_retries)
        return BUFFERED

    def _forward(self, packet: "DataPacket", route: RouteEntry, t: float) -> None:
        route.last_used = t
        route.expires_at = max(route.expires_at, t + self.params.active_route_timeout)
        hop = self.table.lookup(route.next_hop, t)
        if hop is not None:
            hop.expires_at = max(hop.expires_at, t + self.params.active_route_timeout)
        self._data_frame(route.next_hop, packet)

    def receive_data(self, packet: "DataPacket", prev_hop: int) -> str:
        net = self.net
        t = net.engine.now
        packet.hops += 1
        if packet.dst == self.node:
            net.deliver(packet, t)
            return "delivered"
        if packet.hops >= self.params.net_diameter:
            net.drop(packet, "ttl")
            return "dropped-ttl"
        route = self.table.lookup(packet.dst, t)
        if route is None:
            net.drop(packet, "no-route")
            self._report_broken(packet.dst, t)
            return DROPPED_NO_ROUTE
        self._forward(packet, route, t)
        return SENT

    def _report_broken(self, dest: int, t: float) -> None:
        # at most one RERR per destination per second
        if t - self.rerr_sent.get(dest, -1e9) < 1.0:
            return
        e = self.table.get(dest)
        seq = e.dest_seq if e is not None else 0
        self.rerr_sent[dest] = t
        self._send_rerr(((dest, seq),))

    def flush_buffer(self, dest: int) -> int:
        q = self.buffer.pop(dest, None)
        if not q:
            return 0
        t = self.net.engine.now
        self.buffered -= len(q)
        sent = 0
        for packet, since in q:
            if t - since > self.params.buffer_timeout:
                self.net.drop(packet, "buffer-timeout")
                continue
            route = self.table.lookup(dest, t)
            if route is None:
                self.net.drop(packet, "no-route")
                continue
            self._forward(packet, route, t)
            sent += 1
        return sent

    def _expire_buffer(self, t: float) -> None:
        limit = self.params.buffer_timeout
        for dest in list(self.buffer):
            q = self.buffer[dest]
            while q and t - q[0][1] > limit:
                packet, _ = q.popleft()
                self.buffered -= 1
                self.net.drop(packet, "buffer-timeout")
            if not q:
                del self.buffer[dest]

    def held_packets(self) -> list["DataPacket"]:
        return [p for q in self.buffer.values() for p, _ in q]

    # --------------------------------------------------------------- discovery

    def _originate(self, dest: int, retries_left: int) -> Rreq:
        net = self.net
        self.seq += 1
        self.rreq_id += 1
        e = self.table.get(dest)
        known = e.dest_seq if e is not None and e.seq_known else 0
        rreq = Rreq(self.node, self.seq, self.rreq_id, dest, known, 0)
        self.seen[(self.node, self.rreq_id)] = net.engine.now
        net.log_route_decision(self.node, rreq, None, "originate")
        ev = net.engine.schedule_in(self.params.rreq_wait, "route-timeout",
                                    self._discovery_timeout, self.node, dest)
        self.discoveries[dest] = [ev, retries_left]
        self._control(BROADCAST, "RREQ", rreq, RREQ_BYTES)
        return rreq

    def _discovery_timeout(self, ev) -> None:
        dest = ev.payload
        entry = self.discoveries.get(dest)
        if entry is None or entry[0] is not ev:
            return
        t = self.net.engine.now
        if self.table.lookup(dest, t) is not None:
            del self.discoveries[dest]
            self.flush_buffer(dest)
            return
        if entry[1] > 0:
            self._originate(dest, entry[1] - 1)
            return
        del self.discoveries[dest]
        q = self.buffer.pop(dest, None)
        if q:
            self.buffered -= len(q)
            for packet, _ in q:
                self.net.drop(packet, "no-route")

    def neighbor_count(self, t: float) -> int:
        return self.neighbours.count(t, self.params.neighbor_freshness)

    def ext_forward_decision(self, t: float) -> GateDecision:
        beta = self.neighbor_count(t)
        return gate_decision(beta, self.ext, self.net.gate_draw)

    def process_rreq(self, rreq: Rreq, prev_hop: int) -> str:
        net = self.net
        t = net.engine.now
        key = (rreq.originator, rreq.rreq_id)
        if key in self.seen:
            return SUPPRESSED_DUPLICATE
        self.seen[key] = t
        p = self.params
        hops = rreq.hop_count + 1
        self.table.update(prev_hop, prev_hop, 1, 0, False, t, p.active_route_timeout)
        self.table.update(rreq.originator, prev_hop, hops, rreq.originator_seq, True,
                          t, p.active_route_timeout)

        if rreq.destination == self.node:
            self.seq = max(self.seq, rreq.dest_seq_known)
            rrep = Rrep(rreq.originator, self.node, self.seq, 0, p.active_route_timeout)
            self._control(prev_hop, "RREP", rrep, RREP_BYTES)
            net.log_route_decision(self.node, rreq, None, REPLIED)
            return REPLIED
        route = self.table.lookup(rreq.destination, t)
        if route is not None and route.seq_known and route.dest_seq >= rreq.dest_seq_known:
            rrep = Rrep(rreq.originator, rreq.destination, route.dest_seq, route.hop_count,
                        route.expires_at - t)
            self._control(prev_hop, "RREP", rrep, RREP_BYTES)
            net.log_route_decision(self.node, rreq, None, REPLIED)
            return REPLIED

        if hops >= p.net_diameter:
            return SUPPRESSED_TTL
        decision = None
        if self.ext.enabled:
            decision = self.ext_forward_decision(t)
            if not decision.forward:
                net.log_route_decision(self.node, rreq, decision, "drop")
                return SUPPRESSED_BY_GATE
        net.log_route_decision(self.node, rreq, decision, "forward")
        fwd = Rreq(rreq.originator, rreq.originator_seq, rreq.rreq_id, rreq.destination,
                   rreq.dest_seq_known, hops)
        self._control(BROADCAST, "RREQ", fwd, RREQ_BYTES)
        return FORWARDED

    def process_rrep(self, rrep: Rrep, prev_hop: int) -> str:
        net = self.net
        t = net.engine.now
        p = self.params
        lifetime = rrep.lifetime if rrep.lifetime > 0 else p.active_route_timeout
        self.table.update(prev_hop, prev_hop, 1, 0, False, t, p.active_route_timeout)
        updated = self.table.update(rrep.destination, prev_hop, rrep.hop_count + 1,
                                    rrep.dest_seq, True, t, lifetime)
        if rrep.originator == self.node:
            pending = self.discoveries.pop(rrep.destination, None)
            if pending is not None:
                net.engine.cancel(pending[0])
            self.flush_buffer(rrep.destination)
            return CONSUMED_AT_SOURCE
        if not updated:
            return IGNORED_STALE
        reverse = self.table.lookup(rrep.originator, t)
        if reverse is None:
            net.metrics.rrep_no_reverse += 1
            return DROPPED_NO_REVERSE_ROUTE
        reverse.expires_at = max(reverse.expires_at, t + p.active_route_timeout)
        fwd = Rrep(rrep.originator, rrep.destination, rrep.dest_seq, rrep.hop_count + 1, rrep.lifetime)
        self._control(reverse.next_hop, "RREP", fwd, RREP_BYTES)
        return FORWARDED_TOWARD_ORIGINATOR

    # ------------------------------------------------------------- maintenance

    def _send_rerr(self, unreachable: tuple[tuple[int, int], ...]) -> str:
        rerr = Rerr(unreachable)
        return self._control(BROADCAST, "RERR", rerr,
                             RERR_BASE_BYTES + RERR_ENTRY_BYTES * len(unreachable))

    def _in_use(self, e: RouteEntry, t: float) -> bool:
        # stands in for a precursor list: only routes that carried data lately
        return t - e.last_used <= self.params.active_route_timeout

    def on_neighbor_lost(self, lost: int, t: float) -> Optional[Rerr]:
        """Invalidate routes through ``lost``; RERR lists those still carrying data."""
        broken = []
        for dest, e in self.table.entries.items():
            if e.valid and e.next_hop == lost:
                e.valid = False
                if e.seq_known:
                    e.dest_seq += 1
                if self._in_use(e, t):
                    broken.append((dest, e.dest_seq))
        if not broken:
            return None
        unreachable = tuple(broken)
        self._send_rerr(unreachable)
        return Rerr(unreachable)

    def process_rerr(self, rerr: Rerr, prev_hop: int) -> Optional[Rerr]:
        t = self.net.engine.now
        broken = []
        for dest, seq in rerr.unreachable:
            e = self.table.get(dest)
            if e is not None and e.valid and e.next_hop == prev_hop:
                e.valid = False
                e.dest_seq = max(e.dest_seq, seq)
                e.seq_known = True
                if self._in_use(e, t):
                    broken.append((dest, e.dest_seq))
        if not broken:
            return None
        unreachable = tuple(broken)
        self._send_rerr(unreachable)
        return Rerr(unreachable)

    def on_hello_tick(self, ev) -> None:
        net = self.net
        if not net.ledger.alive[self.node]:
            return
        t = net.engine.now
        p = self.params
        net.ledger.accrue_idle(self.node, t)
        if not net.ledger.alive[self.node]:
            return
        for lost in self.neighbours.expire(t, p.neighbor_freshness):
            self.on_neighbor_lost(lost, t)
        horizon = t - p.seen_lifetime
        if self.seen and next(iter(self.seen.values())) < horizon:
            self.seen = {k: v for k, v in self.seen.items() if v >= horizon}
        if self.buffered:
            self._expire_buffer(t)
        self._control(BROADCAST, "HELLO", Hello(self.node, self.seq), HELLO_BYTES)
        gap = p.hello_interval * net.hello_stream.uniform(0.9, 1.1)
        self.hello_event = net.engine.schedule(t + gap, "hello-tick", self.on_hello_tick, self.node)

    def on_death(self) -> list["DataPacket"]:
        """Silence the node; returns the packets it was still buffering."""
        for ev, _ in self.discoveries.values():
            self.net.engine.cancel(ev)
        self.discoveries.clear()
        if self.hello_event is not None:
            self.net.engine.cancel(self.hello_event)
        held = self.held_packets()
        self.buffer.clear()
        self.buffered = 0
        return held


def next_hop_chain(agents: list[AodvAgent], start: int, dest: int, t: float) -> list[int]:
    """Follow valid next hops from ``start`` toward ``dest``.

    Stops at the destination, at a missing route, or at the first revisited
    node (which is then the last element, exposing the loop).
    """
    path = [start]
    seen = {start}
    node = start
    while node != dest:
        e = agents[node].table.lookup(dest, t)
        if e is None:
            break
        node = e.next_hop
        path.append(node)
        if node in seen:
            break
        seen.add(node)
    return path
