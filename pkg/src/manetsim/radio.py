"""Physical layer: two-ray received power, shared channel and energy ledger."""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .engine import Engine, SimulationError

PAPER_TWO_RAY = "paper-two-ray"
STANDARD_TWO_RAY = "standard-two-ray"
PROPAGATION_VARIANTS = (PAPER_TWO_RAY, STANDARD_TWO_RAY)

TX, RX, IDLE = "tx", "rx", "idle"


@dataclass(frozen=True)
class RadioParams:
    """Transmitter/receiver constants.

    ``p_t`` is radiated RF power and is unrelated to the electrical draw in
    :class:`EnergyParams`.  The default ``rx_thresh`` puts the decode range at
    250 m for the paper-two-ray variant; ``cs_thresh`` sets the interference
    (carrier) range.
    """

    p_t: float = 0.28183815
    g_t: float = 1.0
    g_r: float = 1.0
    h_t: float = 1.5
    h_r: float = 1.5
    wavelength: float = 0.1224
    rx_thresh: float = 3.4653562533e-14
    cs_thresh: float = 3.4653562533e-14
    bitrate: float = 2.0e6
    propagation: str = PAPER_TWO_RAY

    def __post_init__(self):
        for name in ("p_t", "g_t", "g_r", "h_t", "h_r", "wavelength", "rx_thresh", "cs_thresh", "bitrate"):
            if not getattr(self, name) > 0:
                raise ValueError(f"radio.{name} must be positive")
        if self.cs_thresh > self.rx_thresh:
            raise ValueError("radio.cs_thresh must not exceed radio.rx_thresh")
        if self.propagation not in PROPAGATION_VARIANTS:
            raise ValueError(f"radio.propagation must be one of {PROPAGATION_VARIANTS}")


def _gain_constant(p: RadioParams) -> float:
    # received power = constant / r**4 for both variants
    if p.propagation == PAPER_TWO_RAY:
        return p.p_t * p.g_t * p.g_r * (p.h_t * p.h_r * p.wavelength / (4.0 * math.pi)) ** 2
    return p.p_t * p.g_t * p.g_r * p.h_t**2 * p.h_r**2


def received_power(params: RadioParams, r: float) -> float:
    """Received power in watts at distance ``r`` metres.

    ``paper-two-ray`` evaluates Pt*Gt*Gr*(ht*hr*lambda / (4*pi*r^2))^2 as
    printed (wavelength included); ``standard-two-ray`` is the textbook
    Pt*Gt*Gr*ht^2*hr^2 / r^4.
    """
    if not r > 0:
        raise ValueError("distance must be positive")
    p = params
    # dividing by r twice keeps tiny distances from underflowing r*r to zero
    if p.propagation == PAPER_TWO_RAY:
        x = p.h_t * p.h_r * p.wavelength / (4.0 * math.pi) / r / r
    else:
        x = p.h_t * p.h_r / r / r
    return p.p_t * p.g_t * p.g_r * (x * x)


def range_for(params: RadioParams, threshold: float) -> float:
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    return (_gain_constant(params) / threshold) ** 0.25


def comm_range(params: RadioParams) -> float:
    """Largest distance at which ``received_power >= rx_thresh``."""
    return range_for(params, params.rx_thresh)


def carrier_range(params: RadioParams) -> float:
    return range_for(params, params.cs_thresh)


@dataclass(frozen=True)
class EnergyParams:
    p_tx: float = 0.1819
    p_rx: float = 0.0501
    p_idle: float = 0.0350
    initial_energy: float = 1000.0
    count_idle_in_metric: bool = False

    def __post_init__(self):
        for name in ("p_tx", "p_rx", "p_idle", "initial_energy"):
            if not getattr(self, name) > 0:
                raise ValueError(f"energy.{name} must be positive")


def tx_energy(bits: int, params: EnergyParams, bitrate: float) -> float:
    """Joules spent sending ``bits``: airtime times transmit draw."""
    if bits <= 0:
        raise ValueError("frame must carry at least one bit")
    return bits / bitrate * params.p_tx


def rx_energy(bits: int, params: EnergyParams, bitrate: float) -> float:
    if bits <= 0:
        raise ValueError("frame must carry at least one bit")
    return bits / bitrate * params.p_rx


class EnergyLedger:
    """Per-node battery accounting.

    Idle time is whatever part of the elapsed time the radio spent neither
    sending nor receiving; it is charged lazily by :meth:`accrue_idle`.
    """

    def __init__(self, n: int, params: EnergyParams):
        self.params = params
        self.n = n
        e0 = params.initial_energy
        self.residual = [e0] * n
        self.consumed_tx = [0.0] * n
        self.consumed_rx = [0.0] * n
        self.consumed_idle = [0.0] * n
        self.alive = [True] * n
        self._dead = 0
        self.on_death: Optional[Callable[[int], None]] = None
        # union of busy (tx/rx) intervals, for idle accounting
        self._busy_until = [0.0] * n
        self._busy_total = [0.0] * n
        self._idle_mark = [0.0] * n
        self._busy_at_mark = [0.0] * n

    def drain(self, node: int, joules: float, category: str) -> float:
        if joules < 0:
            raise SimulationError("negative drain")
        if not self.alive[node]:
            return 0.0
        take = min(joules, self.residual[node])
        if category == TX:
            self.consumed_tx[node] += take
        elif category == RX:
            self.consumed_rx[node] += take
        elif category == IDLE:
            self.consumed_idle[node] += take
        else:
            raise SimulationError(f"unknown energy category {category!r}")
        self.residual[node] -= take
        if take < joules or self.residual[node] <= 0.0:
            self.residual[node] = 0.0
            self.alive[node] = False
            self._dead += 1
            if self.on_death is not None:
                self.on_death(node)
        return self.residual[node]

    def mark_busy(self, node: int, start: float, end: float) -> None:
        """Record that the radio is occupied on [start, end); start is 'now'."""
        bu = self._busy_until[node]
        if end > bu:
            self._busy_total[node] += end - max(start, bu)
            self._busy_until[node] = end

    def _busy_upto(self, node: int, t: float) -> float:
        return self._busy_total[node] - max(0.0, self._busy_until[node] - t)

    def accrue_idle(self, node: int, t: float) -> None:
        if not self.alive[node]:
            return
        busy = self._busy_upto(node, t)
        idle = (t - self._idle_mark[node]) - (busy - self._busy_at_mark[node])
        self._idle_mark[node] = t
        self._busy_at_mark[node] = busy
        if idle > 0:
            self.drain(node, idle * self.params.p_idle, IDLE)

    def accrue_idle_all(self, t: float) -> None:
        for i in range(self.n):
            self.accrue_idle(i, t)

    def conservation_error(self, node: int) -> float:
        total = (self.residual[node] + self.consumed_tx[node]
                 + self.consumed_rx[node] + self.consumed_idle[node])
        return abs(total - self.params.initial_energy)

    def consumed(self, node: int, include_idle: bool = False) -> float:
        c = self.consumed_tx[node] + self.consumed_rx[node]
        if include_idle:
            c += self.consumed_idle[node]
        return c

    def dead_count(self) -> int:
        return self._dead


class Transmission:
    """One frame on the air and what became of it at each receiver.

    ``nodes`` lists the receivers in decode range (ascending); ``collided`` and
    ``charged`` are parallel lists of flags.  A receiver that was itself
    transmitting at the start is not charged and cannot decode.
    """

    __slots__ = ("sender", "frame", "start", "end", "nodes", "collided", "charged")

    def __init__(self, sender, frame, start, end, nodes, collided, charged):
        self.sender = sender
        self.frame = frame
        self.start = start
        self.end = end
        self.nodes = nodes
        self.collided = collided
        self.charged = charged

    def outcome_for(self, node: int) -> Optional[bool]:
        """None if ``node`` was out of range, else whether its copy collided."""
        i = bisect.bisect_left(self.nodes, node)
        if i < len(self.nodes) and self.nodes[i] == node:
            return self.collided[i]
        return None

    def decoded(self) -> list[int]:
        return [j for j, c in zip(self.nodes, self.collided) if not c]

    def __str__(self):
        marks = " ".join(f"{j}:{'x' if c else 'ok'}" for j, c in zip(self.nodes, self.collided))
        return f"{self.frame} rx=[{marks}]"


class Radio:
    """Shared broadcast channel.

    A signal reaches every alive node within carrier range; nodes within the
    decode range receive it.  Any two signals overlapping in time at a node
    corrupt every reception involved (no capture).  A node that is
    transmitting cannot receive.

    Because any overlap spoils everything involved, a node can hold at most one
    intact reception at a time, so the channel state per node is the end of
    the latest signal sensed plus that lone reception, if any.
    """

    def __init__(self, engine: Engine, mobility, params: RadioParams,
                 energy: EnergyParams, ledger: EnergyLedger, n: int):
        self.engine = engine
        self.mobility = mobility
        self.params = params
        self.energy = energy
        self.ledger = ledger
        self.n = n
        self.range = comm_range(params)
        self.cs_range = carrier_range(params)
        self._range2 = self.range * self.range
        self._cs2 = self.cs_range * self.cs_range
        self.signal_end = [0.0] * n
        self._owner: list[Optional[tuple]] = [None] * n  # (tx, index) of the intact reception
        self.tx_until = [0.0] * n
        self.dead_sends = 0
        # callbacks wired by the owning simulation
        self.on_receive: Optional[Callable[[int, Transmission], None]] = None
        self.on_tx_end: Optional[Callable[[Transmission], None]] = None

    def airtime(self, bits: int) -> float:
        return bits / self.params.bitrate

    def neighbours_at(self, node: int, t: float) -> tuple[list[int], list[int]]:
        """Alive nodes within decode range, and those only within carrier range."""
        x, y = self.mobility.positions(t)
        d2 = (x - x[node]) ** 2 + (y - y[node]) ** 2
        d2[node] = np.inf
        near = np.flatnonzero(d2 <= self._cs2)
        if self._cs2 > self._range2:
            inside = d2[near] <= self._range2
            rx, cs_only = near[inside].tolist(), near[~inside].tolist()
        else:
            rx, cs_only = near.tolist(), []
        if self.ledger.dead_count():
            alive = self.ledger.alive
            rx = [j for j in rx if alive[j]]
            cs_only = [j for j in cs_only if alive[j]]
        return rx, cs_only

    def broadcast(self, sender: int, frame, t: float) -> Optional[Transmission]:
        """Put ``frame`` on the air at ``t``; returns None for a dead sender."""
        ledger = self.ledger
        if not ledger.alive[sender]:
            self.dead_sends += 1
            return None
        bits = frame.size
        end = t + bits / self.params.bitrate
        tx_until = self.tx_until
        if tx_until[sender] > t:
            raise SimulationError(f"node {sender} is already transmitting")
        tx_until[sender] = end
        ledger.mark_busy(sender, t, end)
        signal_end = self.signal_end
        owner = self._owner
        # half duplex: whatever the sender was receiving is lost
        o = owner[sender]
        if o is not None:
            if signal_end[sender] > t:
                o[0].collided[o[1]] = True
            owner[sender] = None
        ledger.drain(sender, tx_energy(bits, self.energy, self.params.bitrate), TX)

        rx, cs_only = self.neighbours_at(sender, t)
        collided = []
        charged = []
        tx = Transmission(sender, frame, t, end, rx, collided, charged)
        busy_until = ledger._busy_until
        busy_total = ledger._busy_total
        for i, j in enumerate(rx):
            hit = False
            if signal_end[j] > t:
                hit = True
                o = owner[j]
                if o is not None:
                    o[0].collided[o[1]] = True
                signal_end[j] = max(signal_end[j], end)
            else:
                signal_end[j] = end
            listening = tx_until[j] <= t
            if listening:
                # inlined EnergyLedger.mark_busy
                bu = busy_until[j]
                if end > bu:
                    busy_total[j] += end - (t if t > bu else bu)
                    busy_until[j] = end
            else:
                hit = True
            collided.append(hit)
            charged.append(listening)
            owner[j] = None if hit else (tx, i)
        for j in cs_only:
            if signal_end[j] > t:
                o = owner[j]
                if o is not None:
                    o[0].collided[o[1]] = True
                if end > signal_end[j]:
                    signal_end[j] = end
            else:
                signal_end[j] = end
            owner[j] = None
        self.engine.schedule(end, "tx-complete", self._complete, sender, tx)
        return tx

    def _complete(self, ev) -> None:
        tx: Transmission = ev.payload
        ledger = self.ledger
        e_rx = rx_energy(tx.frame.size, self.energy, self.params.bitrate)
        alive = ledger.alive
        residual = ledger.residual
        consumed = ledger.consumed_rx
        for j, c in zip(tx.nodes, tx.charged):
            if c and alive[j]:
                if residual[j] > e_rx:
                    residual[j] -= e_rx
                    consumed[j] += e_rx
                else:
                    ledger.drain(j, e_rx, RX)
        on_receive = self.on_receive
        if on_receive is not None:
            for j, c in zip(tx.nodes, tx.collided):
                if not c and alive[j]:
                    on_receive(j, tx)
        if self.on_tx_end is not None:
            self.on_tx_end(tx)
