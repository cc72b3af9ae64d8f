"""CBR traffic sources, delivery tracking and the five headline metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

from .engine import RandomStream, SimulationError
from .mac import mac_load
from .radio import EnergyLedger

DROP_CAUSES = (
    "queue-full",
    "collision",
    "no-route",
    "buffer-timeout",
    "buffer-overflow",
    "ttl",
    "node-dead",
)


@dataclass(frozen=True)
class TrafficParams:
    flow_count: int = 10
    packet_size: int = 512  # payload bytes
    rate: float = 4.0  # packets per second per flow
    start: float = 10.0
    stop: float = 190.0

    def __post_init__(self):
        if self.flow_count < 0:
            raise ValueError("traffic.flow_count must be >= 0")
        if self.packet_size < 1:
            raise ValueError("traffic.packet_size must be >= 1")
        if not self.rate > 0:
            raise ValueError("traffic.rate must be positive")
        if not 0 <= self.start < self.stop:
            raise ValueError("traffic window needs 0 <= start < stop")

    @property
    def interval(self) -> float:
        return 1.0 / self.rate


@dataclass(frozen=True)
class CbrFlow:
    flow_id: int
    src: int
    dst: int
    packet_size: int
    interval: float
    start_at: float
    stop_at: float

    def __post_init__(self):
        if self.src == self.dst:
            raise ValueError("flow source and destination must differ")
        if not self.interval > 0 or not self.start_at < self.stop_at:
            raise ValueError("bad flow timing")

    def expected_packets(self) -> int:
        return math.ceil((self.stop_at - self.start_at) / self.interval)


class DataPacket:
    __slots__ = ("uid", "flow", "seq", "src", "dst", "created_at", "hops")

    def __init__(self, uid, flow, seq, src, dst, created_at):
        self.uid = uid
        self.flow = flow
        self.seq = seq
        self.src = src
        self.dst = dst
        self.created_at = created_at
        self.hops = 0

    def __str__(self):
        return f"f={self.flow} n={self.seq}"


def spawn_flows(n: int, params: TrafficParams, stream: RandomStream) -> list[CbrFlow]:
    """Distinct ordered (src, dst) pairs, drawn without replacement.

    Each flow's first packet is offset by a uniform fraction of the interval so
    that sources are not phase-locked.
    """
    if n < 2:
        raise ValueError("need at least 2 nodes for traffic")
    pairs = [(s, d) for s in range(n) for d in range(n) if s != d]
    k = params.flow_count
    if k > len(pairs):
        raise ValueError(f"{k} flows requested but only {len(pairs)} ordered pairs exist")
    for i in range(k):
        j = i + stream.randbelow(len(pairs) - i)
        pairs[i], pairs[j] = pairs[j], pairs[i]
    flows = []
    interval = params.interval
    for fid, (s, d) in enumerate(pairs[:k]):
        offset = stream.uniform(0.0, interval)
        flows.append(CbrFlow(fid, s, d, params.packet_size, interval,
                             params.start + offset, params.stop))
    return flows


@dataclass
class MetricsAccumulator:
    generated: int = 0
    delivered: int = 0
    dropped: dict = field(default_factory=lambda: dict.fromkeys(DROP_CAUSES, 0))
    mac_frames_tx: int = 0
    control_tx: dict = field(default_factory=lambda: {"RREQ": 0, "RREP": 0, "RERR": 0, "HELLO": 0})
    control_rx: int = 0
    rrep_no_reverse: int = 0
    delay_sum: float = 0.0
    _delivered_keys: set = field(default_factory=set)
    _outstanding: set = field(default_factory=set)

    def on_generated(self, packet: DataPacket) -> None:
        self.generated += 1
        self._outstanding.add(packet.uid)

    def on_delivered(self, packet: DataPacket, t: float) -> bool:
        """Count a delivery once per (flow, seq); returns False for duplicates."""
        key = (packet.flow, packet.seq)
        if key in self._delivered_keys:
            return False
        self._delivered_keys.add(key)
        self._outstanding.discard(packet.uid)
        self.delivered += 1
        self.delay_sum += t - packet.created_at
        return True

    def on_dropped(self, packet: DataPacket, cause: str) -> None:
        if cause not in self.dropped:
            raise SimulationError(f"unknown drop cause {cause!r}")
        if packet.uid not in self._outstanding:
            raise SimulationError(f"packet {packet.uid} dropped twice or after delivery")
        self._outstanding.remove(packet.uid)
        self.dropped[cause] += 1

    @property
    def dropped_total(self) -> int:
        return sum(self.dropped.values())

    @property
    def in_flight(self) -> int:
        return len(self._outstanding)

    def outstanding_uids(self) -> set:
        return set(self._outstanding)


@dataclass(frozen=True)
class MetricsReport:
    dropped_packets: int
    consumed_power: float  # joules, mean per node
    throughput: float  # delivered packets per millisecond
    mac_load: Optional[float]  # None -> NA
    control_overhead: int
    rreq_tx: int = 0
    rrep_tx: int = 0
    rerr_tx: int = 0
    hello_tx: int = 0
    ctrl_rx: int = 0
    generated: int = 0
    delivered: int = 0
    in_flight: int = 0
    mac_frames_tx: int = 0
    drop_queue: int = 0
    drop_collision: int = 0
    drop_noroute: int = 0
    drop_buffer: int = 0
    dead_nodes: int = 0

    @property
    def control_tx(self) -> int:
        return self.rreq_tx + self.rrep_tx + self.rerr_tx + self.hello_tx


def finalize(acc: MetricsAccumulator, duration: float, ledger: EnergyLedger,
             include_idle: Optional[bool] = None) -> MetricsReport:
    if include_idle is None:
        include_idle = ledger.params.count_idle_in_metric
    n = ledger.n
    power = math.fsum(ledger.consumed(i, include_idle) for i in range(n)) / n
    ctx = acc.control_tx
    d = acc.dropped
    return MetricsReport(
        dropped_packets=acc.dropped_total,
        consumed_power=power,
        throughput=acc.delivered / (duration * 1000.0),
        mac_load=mac_load(acc.mac_frames_tx, acc.delivered),
        control_overhead=sum(ctx.values()) + acc.control_rx,
        rreq_tx=ctx["RREQ"],
        rrep_tx=ctx["RREP"],
        rerr_tx=ctx["RERR"],
        hello_tx=ctx["HELLO"],
        ctrl_rx=acc.control_rx,
        generated=acc.generated,
        delivered=acc.delivered,
        in_flight=acc.in_flight,
        mac_frames_tx=acc.mac_frames_tx,
        drop_queue=d["queue-full"],
        drop_collision=d["collision"],
        drop_noroute=d["no-route"],
        drop_buffer=d["buffer-timeout"] + d["buffer-overflow"],
        dead_nodes=ledger.dead_count(),
    )
