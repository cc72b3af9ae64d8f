"""Random-waypoint mobility over a rectangular area.

Each node owns its own ``mobility`` stream (keyed by node id), so its whole
waypoint sequence depends only on the run seed and the node id, no matter in
which order positions are queried.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from typing import Optional, Sequence, TextIO

import numpy as np

from .engine import Engine, SimulationError


@dataclass(frozen=True)
class Position:
    x: float
    y: float


@dataclass(frozen=True)
class WaypointLeg:
    origin: Position
    destination: Position
    speed: float
    depart_at: float
    pause: float = 0.0

    @property
    def length(self) -> float:
        return math.hypot(self.destination.x - self.origin.x, self.destination.y - self.origin.y)

    @property
    def arrive_at(self) -> float:
        if self.speed <= 0:
            return math.inf
        return self.depart_at + self.length / self.speed

    @property
    def resume_at(self) -> float:
        """Time the next leg departs (arrival plus pause)."""
        return self.arrive_at + self.pause

    def position_at(self, t: float) -> Position:
        travel = self.arrive_at - self.depart_at
        if travel <= 0 or t >= self.arrive_at:
            return self.destination
        frac = max(0.0, (t - self.depart_at) / travel)
        o, d = self.origin, self.destination
        return Position(o.x + (d.x - o.x) * frac, o.y + (d.y - o.y) * frac)


def init_positions(engine: Engine, n: int, width: float, height: float) -> list[Position]:
    """Uniform independent placement; node ``i`` draws from its own stream."""
    if n < 2:
        raise ValueError(f"need at least 2 nodes, got {n}")
    if width <= 0 or height <= 0:
        raise ValueError("area dimensions must be positive")
    out = []
    for i in range(n):
        s = engine.stream("mobility", i)
        out.append(Position(s.uniform(0.0, width), s.uniform(0.0, height)))
    return out


class RandomWaypoint:
    """Lazily realised random-waypoint motion for ``n`` nodes.

    With ``v_max == 0`` the nodes are static.  ``initial`` overrides the random
    placement (used for scripted topologies).
    """

    def __init__(
        self,
        engine: Engine,
        n: int,
        width: float = 800.0,
        height: float = 800.0,
        v_min: float = 1.0,
        v_max: float = 40.0,
        pause: float = 0.0,
        initial: Optional[Sequence[tuple[float, float]]] = None,
        trace: Optional[TextIO] = None,
    ):
        if v_min < 0 or v_max < v_min:
            raise ValueError(f"bad speed range [{v_min}, {v_max}]")
        if v_max > 0 and v_min == 0:
            raise ValueError("v_min must be positive for mobile nodes")
        if pause < 0:
            raise ValueError("pause must be nonnegative")
        self.engine = engine
        self.n = n
        self.width = float(width)
        self.height = float(height)
        self.v_min = float(v_min)
        self.v_max = float(v_max)
        self.pause = float(pause)
        self.trace = trace
        if initial is None:
            start = init_positions(engine, n, width, height)
        else:
            if len(initial) != n:
                raise ValueError("initial positions do not match node count")
            start = [Position(float(x), float(y)) for x, y in initial]
            for p in start:
                if not (0 <= p.x <= width and 0 <= p.y <= height):
                    raise ValueError(f"initial position {p} outside the area")
        self._streams = [engine.stream("mobility", i) for i in range(n)]
        self._legs: list[list[WaypointLeg]] = []
        self._departs: list[list[float]] = []
        for i, p in enumerate(start):
            leg = self._draw_leg(i, p, 0.0)
            self._legs.append([leg])
            self._departs.append([0.0])
        self._cur = [0] * n
        # vectorised view of each node's current leg
        self._ox = np.empty(n)
        self._oy = np.empty(n)
        self._dx = np.empty(n)
        self._dy = np.empty(n)
        self._ex = np.empty(n)
        self._ey = np.empty(n)
        self._t0 = np.empty(n)
        self._travel = np.empty(n)
        self._arrive = np.empty(n)
        self._resume = np.empty(n)
        for i in range(n):
            self._load(i, self._legs[i][0])
        self._next_resume = float(self._resume.min())
        self._cache_t = -1.0
        self._cache_xy: tuple[np.ndarray, np.ndarray] = (self._ox, self._oy)

    def _draw_leg(self, node: int, origin: Position, depart: float) -> WaypointLeg:
        if self.v_max == 0:
            return WaypointLeg(origin, origin, 0.0, depart, 0.0)
        s = self._streams[node]
        dest = Position(s.uniform(0.0, self.width), s.uniform(0.0, self.height))
        if self.v_max > self.v_min:
            speed = s.uniform(self.v_min, self.v_max)
        else:
            speed = self.v_min
        leg = WaypointLeg(origin, dest, speed, depart, self.pause)
        if self.trace is not None:
            self.trace.write(
                f"{depart:.9f}\t{node}\t{origin.x!r},{origin.y!r}\t"
                f"{dest.x!r},{dest.y!r}\t{speed!r}\n"
            )
        return leg

    def _load(self, i: int, leg: WaypointLeg) -> None:
        self._ox[i] = leg.origin.x
        self._oy[i] = leg.origin.y
        self._dx[i] = leg.destination.x - leg.origin.x
        self._dy[i] = leg.destination.y - leg.origin.y
        self._ex[i] = leg.destination.x
        self._ey[i] = leg.destination.y
        self._t0[i] = leg.depart_at
        travel = leg.arrive_at - leg.depart_at
        # zero-length and static legs sit at their endpoint; inf keeps the division quiet
        self._travel[i] = travel if 0 < travel < math.inf else math.inf
        self._arrive[i] = leg.arrive_at if leg.speed > 0 else -math.inf
        self._resume[i] = leg.resume_at

    def _extend(self, node: int, t: float) -> None:
        legs = self._legs[node]
        while legs[-1].resume_at <= t:
            last = legs[-1]
            leg = self._draw_leg(node, last.destination, last.resume_at)
            legs.append(leg)
            self._departs[node].append(leg.depart_at)

    def _check(self, node: int) -> None:
        if not 0 <= node < self.n:
            raise SimulationError(f"unknown node {node}")

    def legs(self, node: int) -> list[WaypointLeg]:
        self._check(node)
        return list(self._legs[node])

    def leg_at(self, node: int, t: float) -> WaypointLeg:
        self._check(node)
        if t < 0:
            raise SimulationError(f"negative time {t}")
        self._extend(node, t)
        k = bisect.bisect_right(self._departs[node], t) - 1
        return self._legs[node][k]

    def position_at(self, node: int, t: float) -> Position:
        return self.leg_at(node, t).position_at(t)

    def distance(self, a: int, b: int, t: float) -> float:
        pa = self.position_at(a, t)
        pb = self.position_at(b, t)
        return math.hypot(pa.x - pb.x, pa.y - pb.y)

    def positions(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        """All node coordinates at time ``t`` (non-decreasing across calls)."""
        if t == self._cache_t:
            return self._cache_xy
        if t < self._cache_t:
            raise SimulationError("positions() queried backwards in time")
        if t >= self._next_resume:
            resume = self._resume
            for i in np.flatnonzero(resume <= t).tolist():
                self._extend(i, t)
                k = self._cur[i]
                legs = self._legs[i]
                while legs[k].resume_at <= t:
                    k += 1
                self._cur[i] = k
                self._load(i, legs[k])
            self._next_resume = float(resume.min())
        # same arithmetic as WaypointLeg.position_at, so both paths agree exactly
        frac = (t - self._t0) / self._travel
        done = t >= self._arrive
        x = np.where(done, self._ex, self._ox + self._dx * frac)
        y = np.where(done, self._ey, self._oy + self._dy * frac)
        self._cache_t = t
        self._cache_xy = (x, y)
        return x, y
