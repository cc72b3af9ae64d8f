"""Discrete-event core: virtual clock, event queue and labelled random streams.

Events are ordered by ``(fire_at, sequence)`` so that ties dispatch in
insertion order.  Random numbers come from PCG64 generators (numpy's
implementation of the published PCG-XSL-RR 128/64 algorithm), one per stream
label, keyed through ``SeedSequence`` so a stream's output depends only on the
run seed and its label.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Any, Callable, Optional, TextIO

import numpy as np

STREAM_LABELS = ("mobility", "traffic", "ext-gate", "mac-jitter", "hello")

_SEED_MASK = (1 << 64) - 1


class SimulationError(RuntimeError):
    """Internal logic error in the simulator (never a scenario condition)."""


class RandomStream:
    """Deterministic uniform stream for one (seed, label, key) triple.

    Values are pulled from the generator in blocks; PCG64 produces the same
    doubles whether they are requested one at a time or in bulk, so blocking
    does not change the sequence.
    """

    _BLOCK = 256

    def __init__(self, seed: int, label: str, key: tuple[int, ...] = ()):
        if label not in STREAM_LABELS:
            raise ValueError(f"unknown stream label {label!r}")
        seq = np.random.SeedSequence(
            entropy=int(seed) & _SEED_MASK,
            spawn_key=(STREAM_LABELS.index(label), *key),
        )
        self.label = label
        self.key = key
        self._gen = np.random.Generator(np.random.PCG64(seq))
        self._buf: list[float] = []
        self._pos = 0
        self.draws = 0

    def random(self) -> float:
        """Next value on [0, 1)."""
        if self._pos == len(self._buf):
            self._buf = self._gen.random(self._BLOCK).tolist()
            self._pos = 0
        u = self._buf[self._pos]
        self._pos += 1
        self.draws += 1
        return u

    def uniform(self, lo: float, hi: float) -> float:
        """Next value on the half-open interval [lo, hi)."""
        if not lo < hi:
            raise SimulationError(f"empty interval [{lo}, {hi})")
        v = lo + (hi - lo) * self.random()
        if v >= hi:
            # rounding can land exactly on hi for some (lo, hi)
            v = math.nextafter(hi, lo)
        return v

    def randbelow(self, n: int) -> int:
        """Uniform integer on [0, n)."""
        if n <= 0:
            raise SimulationError("randbelow needs n > 0")
        return min(int(self.random() * n), n - 1)


class Event:
    __slots__ = ("fire_at", "seq", "kind", "target", "handler", "payload", "cancelled")

    def __init__(self, fire_at, seq, kind, target, handler, payload):
        self.fire_at = fire_at
        self.seq = seq
        self.kind = kind
        self.target = target
        self.handler = handler
        self.payload = payload
        self.cancelled = False

    def __repr__(self):
        return f"Event({self.fire_at!r}, #{self.seq}, {self.kind}, target={self.target})"


@dataclass(frozen=True)
class RunSummary:
    dispatched: int
    clock: float
    exhausted: bool  # queue emptied before t_end


class Engine:
    """Single-run event loop.

    ``trace`` is an optional text stream; when given, every dispatched event
    is written as ``time<TAB>node<TAB>kind<TAB>detail``.
    """

    def __init__(self, seed: int = 0, trace: Optional[TextIO] = None):
        self.seed = int(seed)
        self.now = 0.0
        self.trace = trace
        self.dispatched = 0
        self._queue: list[tuple[float, int, Event]] = []
        self._seq = 0
        self._streams: dict[tuple, RandomStream] = {}

    def schedule(
        self,
        fire_at: float,
        kind: str,
        handler: Callable[[Event], Any],
        target: Any = None,
        payload: Any = None,
    ) -> Event:
        if fire_at < self.now:
            raise SimulationError(f"cannot schedule {kind} at {fire_at} < now={self.now}")
        if not math.isfinite(fire_at):
            raise SimulationError(f"non-finite event time for {kind}")
        ev = Event(fire_at, self._seq, kind, target, handler, payload)
        self._seq += 1
        heapq.heappush(self._queue, (fire_at, ev.seq, ev))
        return ev

    def schedule_in(self, delay: float, kind: str, handler, target=None, payload=None) -> Event:
        return self.schedule(self.now + delay, kind, handler, target, payload)

    @staticmethod
    def cancel(event: Event) -> None:
        event.cancelled = True

    def pending(self) -> int:
        return sum(1 for _, _, ev in self._queue if not ev.cancelled)

    def run_until(self, t_end: float) -> RunSummary:
        if not t_end > 0:
            raise SimulationError("t_end must be positive")
        queue = self._queue
        trace = self.trace
        count = 0
        pop = heapq.heappop
        while queue and queue[0][0] <= t_end:
            fire_at, _, ev = pop(queue)
            if ev.cancelled:
                continue
            self.now = fire_at
            count += 1
            if trace is not None:
                target = "*" if ev.target is None else ev.target
                detail = "" if ev.payload is None else str(ev.payload)
                trace.write(f"{fire_at:.9f}\t{target}\t{ev.kind}\t{detail}\n")
            ev.handler(ev)
        self.dispatched += count
        exhausted = not any(not ev.cancelled for _, _, ev in queue)
        if not exhausted:
            self.now = t_end
        return RunSummary(count, self.now, exhausted)

    def stream(self, label: str, *key: int) -> RandomStream:
        k = (label, *key)
        s = self._streams.get(k)
        if s is None:
            s = self._streams[k] = RandomStream(self.seed, label, key)
        return s

    def draw_uniform(self, label: str, lo: float, hi: float) -> float:
        return self.stream(label).uniform(lo, hi)
