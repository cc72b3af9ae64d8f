"""Per-node interface queue and serialized channel access.

There is no backoff state machine: each frame waits a uniform jitter on
[0, jitter_max] before going on the air.  Unicast frames are broadcast on the
channel and decoded only by the addressed node.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Callable, Optional

from .engine import Engine, Event
from .radio import Radio, Transmission

BROADCAST = -1
CONTROL, DATA = 0, 1

ACCEPTED = "accepted"
DROPPED_QUEUE_FULL = "dropped-queue-full"


@dataclass(frozen=True)
class MacParams:
    queue_capacity: int = 50
    jitter_max: float = 0.002
    header_bytes: int = 58

    def __post_init__(self):
        if self.queue_capacity < 1:
            raise ValueError("mac.queue_capacity must be >= 1")
        if self.jitter_max < 0:
            raise ValueError("mac.jitter_max must be >= 0")
        if self.header_bytes < 0:
            raise ValueError("mac.header_bytes must be >= 0")

    @property
    def header_bits(self) -> int:
        return self.header_bytes * 8


class Frame:
    """One MAC frame; ``kind`` is RREQ, RREP, RERR, HELLO or DATA."""

    __slots__ = ("src", "dst", "kind", "payload", "size", "enqueued_at", "priority")

    def __init__(self, src, dst, kind, payload, size, priority, enqueued_at=0.0):
        if size <= 0:
            raise ValueError("frame size must be positive")
        self.src = src
        self.dst = dst
        self.kind = kind
        self.payload = payload
        self.size = size
        self.priority = priority
        self.enqueued_at = enqueued_at

    @property
    def is_broadcast(self) -> bool:
        return self.dst == BROADCAST

    def __str__(self):
        dst = "*" if self.dst == BROADCAST else self.dst
        return f"{self.kind} {self.src}->{dst} {self.payload}"


class MacQueue:
    """DropTail queue with strict control-over-data priority, FIFO per class."""

    def __init__(self, capacity: int = 50):
        self.capacity = capacity
        self._control: deque[Frame] = deque()
        self._data: deque[Frame] = deque()

    def __len__(self):
        return len(self._control) + len(self._data)

    def push(self, frame: Frame) -> bool:
        if len(self) >= self.capacity:
            return False
        (self._control if frame.priority == CONTROL else self._data).append(frame)
        return True

    def pop(self) -> Optional[Frame]:
        if self._control:
            return self._control.popleft()
        if self._data:
            return self._data.popleft()
        return None

    def frames(self) -> list[Frame]:
        return [*self._control, *self._data]

    def clear(self) -> list[Frame]:
        out = self.frames()
        self._control.clear()
        self._data.clear()
        return out


class Mac:
    def __init__(self, engine: Engine, radio: Radio, params: MacParams, n: int):
        self.engine = engine
        self.radio = radio
        self.params = params
        self.n = n
        self.queues = [MacQueue(params.queue_capacity) for _ in range(n)]
        self.busy = [False] * n
        self.pending: list[Optional[tuple[Event, Frame]]] = [None] * n
        self.tx_count = [0] * n
        self.frames_tx = 0
        self.tx_by_kind: dict[str, int] = {}
        self.queue_drops: dict[str, int] = {}
        self._jitter = engine.stream("mac-jitter")
        # hooks for the simulation
        self.on_queue_drop: Optional[Callable[[int, Frame], None]] = None
        self.on_transmit: Optional[Callable[[int, Frame, Optional[Transmission]], None]] = None
        self.on_tx_end: Optional[Callable[[Transmission], None]] = None
        radio.on_tx_end = self._tx_end

    def enqueue(self, node: int, frame: Frame) -> str:
        frame.enqueued_at = self.engine.now
        if not self.queues[node].push(frame):
            self.queue_drops[frame.kind] = self.queue_drops.get(frame.kind, 0) + 1
            if self.on_queue_drop is not None:
                self.on_queue_drop(node, frame)
            return DROPPED_QUEUE_FULL
        if not self.busy[node]:
            self.dispatch(node, self.engine.now)
        return ACCEPTED

    def dispatch(self, node: int, t: float) -> bool:
        """Start the next transmission if the node is idle; True if one started."""
        if self.busy[node] or not self.radio.ledger.alive[node]:
            return False
        frame = self.queues[node].pop()
        if frame is None:
            return False
        self.busy[node] = True
        jmax = self.params.jitter_max
        delay = self._jitter.uniform(0.0, jmax) if jmax > 0 else 0.0
        ev = self.engine.schedule(t + delay, "tx-start", self._tx_start, node, frame)
        self.pending[node] = (ev, frame)
        return True

    def _tx_start(self, ev: Event) -> None:
        node = ev.target
        frame = ev.payload
        self.pending[node] = None
        tx = self.radio.broadcast(node, frame, ev.fire_at)
        if tx is None:
            self.busy[node] = False
            if self.on_transmit is not None:
                self.on_transmit(node, frame, None)
            return
        self.tx_count[node] += 1
        self.frames_tx += 1
        self.tx_by_kind[frame.kind] = self.tx_by_kind.get(frame.kind, 0) + 1
        if self.on_transmit is not None:
            self.on_transmit(node, frame, tx)

    def _tx_end(self, tx: Transmission) -> None:
        node = tx.sender
        if self.on_tx_end is not None:
            self.on_tx_end(tx)
        self.busy[node] = False
        self.dispatch(node, self.engine.now)

    def flush(self, node: int) -> list[Frame]:
        """Discard everything the node still holds (queued or waiting on jitter)."""
        out = self.queues[node].clear()
        pend = self.pending[node]
        if pend is not None:
            Engine.cancel(pend[0])
            out.insert(0, pend[1])
            self.pending[node] = None
            self.busy[node] = False
        return out

    def held_frames(self, node: int) -> list[Frame]:
        out = self.queues[node].frames()
        if self.pending[node] is not None:
            out.insert(0, self.pending[node][1])
        return out


def mac_load(frames_tx: int, delivered: int) -> Optional[float]:
    """MAC frames sent per delivered data packet; None when nothing arrived."""
    if delivered <= 0:
        return None
    return frames_tx / delivered
