"""One complete run: wires engine, mobility, radio, MAC, AODV agents and traffic."""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Optional, Sequence, TextIO

from .config import ScenarioConfig
from .engine import Engine, SimulationError
from .mac import BROADCAST, Frame, Mac
from .mobility import RandomWaypoint
from .radio import EnergyLedger, Radio, Transmission
from .routing import CONTROL_KINDS, AodvAgent, GateDecision, Rreq
from .traffic import CbrFlow, DataPacket, MetricsAccumulator, MetricsReport, finalize, spawn_flows

TRACE_KINDS = ("events", "routing", "waypoints")


class Simulation:
    """Run context owning every per-run object.

    ``positions`` pins initial node coordinates (combine with
    ``sim.v_max = 0`` for a static topology).  ``traces`` maps a trace kind
    from :data:`TRACE_KINDS` to a writable text stream.
    """

    def __init__(self, config: ScenarioConfig,
                 positions: Optional[Sequence[tuple[float, float]]] = None,
                 traces: Optional[dict[str, TextIO]] = None):
        traces = traces or {}
        unknown = set(traces) - set(TRACE_KINDS)
        if unknown:
            raise ValueError(f"unknown trace kinds {sorted(unknown)}")
        self.config = config
        s = config.sim
        self.n = s.node_count
        self.aodv = config.aodv
        self.ext = config.ext_params()
        self.traffic = config.traffic
        self.engine = Engine(s.seed, trace=traces.get("events"))
        self.routing_trace = traces.get("routing")
        self.mobility = RandomWaypoint(self.engine, self.n, s.width, s.height, s.v_min, s.v_max,
                                       s.pause, initial=positions, trace=traces.get("waypoints"))
        self.ledger = EnergyLedger(self.n, config.energy)
        self.radio = Radio(self.engine, self.mobility, config.radio, config.energy, self.ledger, self.n)
        self.mac = Mac(self.engine, self.radio, config.mac, self.n)
        self.metrics = MetricsAccumulator()
        self.agents = [AodvAgent(i, self) for i in range(self.n)]
        self.flows: list[CbrFlow] = []
        self.hello_stream = self.engine.stream("hello")
        self._gate_stream = self.engine.stream("ext-gate")
        self._traffic_stream = self.engine.stream("traffic")
        self._next_uid = 0
        self._flow_seq: list[int] = []
        self._started = False

        self.radio.on_receive = self._on_receive
        self.mac.on_tx_end = self._on_tx_end
        self.mac.on_queue_drop = self._on_queue_drop
        self.mac.on_transmit = self._on_transmit
        self.ledger.on_death = self._on_death

    # ----------------------------------------------------------------- plumbing

    @property
    def gate_draws(self) -> int:
        return self._gate_stream.draws

    def gate_draw(self) -> float:
        return self._gate_stream.uniform(0.0, 100.0)

    def log_route_decision(self, node: int, rreq: Rreq, decision: Optional[GateDecision],
                           outcome: str) -> None:
        out = self.routing_trace
        if out is None:
            return
        if decision is None:
            beta = self.agents[node].neighbor_count(self.engine.now)
            p = r = "-"
        else:
            beta = decision.beta
            p = "-" if decision.p is None else repr(decision.p)
            r = "-" if decision.r is None else repr(decision.r)
        out.write(f"{self.engine.now:.9f}\t{node}\t{rreq.originator}:{rreq.rreq_id}\t"
                  f"{beta}\t{p}\t{r}\t{outcome}\n")

    def deliver(self, packet: DataPacket, t: float) -> None:
        self.metrics.on_delivered(packet, t)

    def drop(self, packet: DataPacket, cause: str) -> None:
        self.metrics.on_dropped(packet, cause)

    def _on_receive(self, node: int, tx: Transmission) -> None:
        frame = tx.frame
        if frame.dst != BROADCAST and frame.dst != node:
            return
        if frame.kind != "DATA":
            self.metrics.control_rx += 1
        self.agents[node].receive(frame, tx.sender)

    def _on_transmit(self, node: int, frame: Frame, tx: Optional[Transmission]) -> None:
        if tx is None:
            if frame.kind == "DATA":
                self.drop(frame.payload, "node-dead")
            return
        self.metrics.mac_frames_tx += 1
        if frame.kind in CONTROL_KINDS:
            self.metrics.control_tx[frame.kind] += 1

    def _on_tx_end(self, tx: Transmission) -> None:
        frame = tx.frame
        if frame.kind != "DATA":
            return
        outcome = tx.outcome_for(frame.dst)
        if outcome is None:
            cause = "no-route" if self.ledger.alive[frame.dst] else "node-dead"
        elif outcome:
            cause = "collision"
        elif not self.ledger.alive[frame.dst]:
            cause = "node-dead"
        else:
            return
        self.drop(frame.payload, cause)

    def _on_queue_drop(self, node: int, frame: Frame) -> None:
        if frame.kind == "DATA":
            self.drop(frame.payload, "queue-full")

    def _on_death(self, node: int) -> None:
        for frame in self.mac.flush(node):
            if frame.kind == "DATA":
                self.drop(frame.payload, "node-dead")
        for packet in self.agents[node].on_death():
            self.drop(packet, "node-dead")

    # ------------------------------------------------------------------ traffic

    def _cbr_tick(self, ev) -> None:
        flow: CbrFlow = ev.payload
        if not self.ledger.alive[flow.src]:
            return
        t = self.engine.now
        packet = DataPacket(self._next_uid, flow.flow_id, self._flow_seq[flow.flow_id],
                            flow.src, flow.dst, t)
        self._next_uid += 1
        self._flow_seq[flow.flow_id] += 1
        self.metrics.on_generated(packet)
        self.agents[flow.src].send_data(packet)
        k = self._flow_seq[flow.flow_id]
        nxt = flow.start_at + k * flow.interval
        if nxt < flow.stop_at:
            self.engine.schedule(nxt, "cbr-tick", self._cbr_tick, flow.src, flow)

    # --------------------------------------------------------------------- runs

    def start(self, traffic: bool = True, hello: bool = True) -> None:
        if self._started:
            raise SimulationError("simulation already started")
        self._started = True
        eng = self.engine
        if hello:
            for agent in self.agents:
                first = self.hello_stream.uniform(0.0, self.aodv.hello_interval)
                agent.hello_event = eng.schedule(first, "hello-tick", agent.on_hello_tick, agent.node)
        if traffic and self.traffic.flow_count:
            self.flows = spawn_flows(self.n, self.traffic, self._traffic_stream)
            self._flow_seq = [0] * len(self.flows)
            for flow in self.flows:
                if flow.start_at < self.config.sim.duration:
                    eng.schedule(flow.start_at, "cbr-tick", self._cbr_tick, flow.src, flow)
        eng.schedule(self.config.sim.duration, "sim-end", _noop)

    def run(self) -> MetricsReport:
        if not self._started:
            self.start()
        duration = self.config.sim.duration
        self.engine.run_until(duration)
        self.ledger.accrue_idle_all(duration)
        report = finalize(self.metrics, duration, self.ledger)
        self.audit(report)
        return report

    def in_flight_observed(self) -> int:
        """Data packets physically held somewhere: queues, jitter wait, buffers, air."""
        held = set()
        for i in range(self.n):
            for f in self.mac.held_frames(i):
                if f.kind == "DATA":
                    held.add(f.payload.uid)
            for p in self.agents[i].held_packets():
                held.add(p.uid)
        for _, _, ev in self.engine._queue:
            if not ev.cancelled and ev.kind == "tx-complete" and ev.payload.frame.kind == "DATA":
                held.add(ev.payload.frame.payload.uid)
        return len(held)

    def audit(self, report: MetricsReport) -> None:
        """Accounting identities that must hold after every run."""
        if report.generated != report.delivered + report.dropped_packets + report.in_flight:
            raise SimulationError("packet accounting identity violated")
        if self.in_flight_observed() != report.in_flight:
            raise SimulationError("in-flight count disagrees with held packets")
        if report.mac_frames_tx != self.mac.frames_tx or self.mac.frames_tx != sum(self.mac.tx_count):
            raise SimulationError("MAC frame counts disagree")
        if report.control_overhead != report.control_tx + report.ctrl_rx:
            raise SimulationError("control overhead decomposition violated")
        if report.delivered > report.generated:
            raise SimulationError("more deliveries than packets generated")
        for i in range(self.n):
            if self.ledger.conservation_error(i) > 1e-9:
                raise SimulationError(f"energy not conserved at node {i}")


def _noop(ev) -> None:
    pass


@dataclass
class RunResult:
    report: MetricsReport
    traces: dict[str, str] = field(default_factory=dict)


def run_single(config: ScenarioConfig, trace_kinds: Sequence[str] = ()) -> RunResult:
    buffers = {k: io.StringIO() for k in trace_kinds}
    sim = Simulation(config, traces=buffers)
    report = sim.run()
    return RunResult(report, {k: b.getvalue() for k, b in buffers.items()})
