import math
from bisect import bisect_right
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from td_dispatch.core.exceptions import (
    ConfigurationError,
    FifoViolationError,
    GraphValidationError,
    MalformedFunctionError,
)
from td_dispatch.shared.utils.numeric import Tolerance

Point = Tuple[float, float]


@dataclass(frozen=True)
class TravelTimeFunction:
    """
    Periodic, continuous, piecewise-linear arc travel time.

    Attributes:
        period (float): Horizon T in seconds
        breakpoints (Tuple[Tuple[float, float], ...]): (t, value) pairs with t in [0, T)
    """

    period: float
    breakpoints: Tuple[Tuple[float, float], ...]
    _times: Tuple[float, ...] = field(init=False, repr=False, compare=False)
    _values: Tuple[float, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        points = tuple((float(t), float(v)) for t, v in self.breakpoints)
        object.__setattr__(self, 'breakpoints', points)
        object.__setattr__(self, 'period', float(self.period))
        object.__setattr__(self, '_times', tuple(t for t, _ in points))
        object.__setattr__(self, '_values', tuple(v for _, v in points))

    @classmethod
    def constant(cls, value: float, period: float = 86400.0) -> 'TravelTimeFunction':
        return cls(period, ((0.0, value),))

    def evaluate(self, t: float) -> float:
        """
        Evaluate the function at departure time t, reduced modulo the period.

        Raises:
            MalformedFunctionError: If there are no breakpoints
        """
        times, values = self._times, self._values
        n = len(times)
        if n == 0:
            raise MalformedFunctionError('travel-time function has no breakpoints')
        if n == 1:
            return values[0]

        x = t % self.period
        k = bisect_right(times, x) - 1
        if k < 0:
            t0, v0 = times[-1] - self.period, values[-1]
            t1, v1 = times[0], values[0]
        elif k == n - 1:
            t0, v0 = times[-1], values[-1]
            t1, v1 = times[0] + self.period, values[0]
        else:
            t0, v0 = times[k], values[k]
            t1, v1 = times[k + 1], values[k + 1]
        return v0 + (v1 - v0) * (x - t0) / (t1 - t0)

    def segments(self) -> List[Tuple[float, float, float, float]]:
        """Linear pieces (t0, v0, t1, v1), the wrap-around piece last."""
        points = self.breakpoints
        if len(points) < 2:
            return []
        pieces = [
            (t0, v0, t1, v1) for (t0, v0), (t1, v1) in zip(points, points[1:])
        ]
        (tl, vl), (tf, vf) = points[-1], points[0]
        pieces.append((tl, vl, tf + self.period, vf))
        return pieces

    @property
    def min_value(self) -> float:
        return min(self._values)

    @property
    def is_constant(self) -> bool:
        return len(set(self._values)) <= 1

    def validate(self, label: str = 'travel-time function') -> None:
        """
        Check the breakpoint invariants and the FIFO slope bound of every piece.

        Args:
            label (str): Name used in diagnostics, e.g. the arc

        Raises:
            MalformedFunctionError: If the breakpoints are empty or out of order
            FifoViolationError: If some piece has slope below -1
        """
        if not self.breakpoints:
            raise MalformedFunctionError(f'{label}: empty breakpoint list')
        if not self.period > 0:
            raise MalformedFunctionError(f'{label}: period must be positive')
        previous = -math.inf
        for t, value in self.breakpoints:
            if not 0 <= t < self.period:
                raise MalformedFunctionError(
                    f'{label}: breakpoint time {t} outside [0, {self.period})'
                )
            if t <= previous:
                raise MalformedFunctionError(
                    f'{label}: breakpoint times must be strictly increasing'
                )
            if not value > 0:
                raise MalformedFunctionError(
                    f'{label}: travel time {value} at t={t} must be positive'
                )
            previous = t

        for index, (t0, v0, t1, v1) in enumerate(self.segments()):
            slope = (v1 - v0) / (t1 - t0)
            if slope < -1 - Tolerance.SLOPE:
                raise FifoViolationError(
                    f'{label}: segment {index} from t={t0} to t={t1} has slope {slope:.6f} < -1'
                )


class LegMetric(str, Enum):
    """Which optimal road path interconnects two consecutive service events"""

    DISTANCE = 'distance-optimal'
    TIME = 'time-optimal'


@dataclass(frozen=True)
class Vertex:
    id: int
    x: Optional[float] = None
    y: Optional[float] = None

    @property
    def point(self) -> Optional[Point]:
        if self.x is None or self.y is None:
            return None
        return (self.x, self.y)


@dataclass(frozen=True)
class Arc:
    tail: int
    head: int
    length: float
    ttfs: Mapping[str, TravelTimeFunction]

    def travel_time(self, vehicle_type: str, departure: float) -> float:
        return self.ttfs[vehicle_type].evaluate(departure)


class RoadGraph:
    """
    Directed road graph with static lengths and per-vehicle-type travel-time functions.

    Attributes:
        vertices (Dict[int, Vertex]): Declared vertices by id
        arcs (List[Arc]): Arcs in declaration order
        vehicle_types (frozenset): Vehicle types every arc carries a function for
    """

    def __init__(
        self,
        vertices: Iterable[Vertex],
        arcs: Iterable[Arc],
        vehicle_types: Optional[Iterable[str]] = None,
    ) -> None:
        self.vertices: Dict[int, Vertex] = {}
        for vertex in vertices:
            if vertex.id in self.vertices:
                raise GraphValidationError(f'vertex {vertex.id} declared twice')
            self.vertices[vertex.id] = vertex
        self.arcs: List[Arc] = list(arcs)

        if vehicle_types is None:
            vehicle_types = self.arcs[0].ttfs.keys() if self.arcs else ()
        self.vehicle_types = frozenset(vehicle_types)

        self._out: Dict[int, List[Arc]] = {v: [] for v in self.vertices}
        self._between: Dict[Tuple[int, int], List[Arc]] = {}
        for index, arc in enumerate(self.arcs):
            self._validate_arc(index, arc)
            self._out[arc.tail].append(arc)
            self._between.setdefault((arc.tail, arc.head), []).append(arc)
        for out_arcs in self._out.values():
            out_arcs.sort(key=lambda a: a.head)

        self._time_per_meter: Dict[str, float] = {}

    def _validate_arc(self, index: int, arc: Arc) -> None:
        label = f'arc #{index} ({arc.tail}->{arc.head})'
        if arc.tail not in self.vertices or arc.head not in self.vertices:
            raise GraphValidationError(f'{label}: endpoint is not a declared vertex')
        if not arc.length > 0:
            raise GraphValidationError(f'{label}: length must be positive')
        missing = self.vehicle_types - set(arc.ttfs)
        if missing:
            raise GraphValidationError(
                f'{label}: no travel-time function for vehicle types {sorted(missing)}'
            )
        for vehicle_type, ttf in arc.ttfs.items():
            ttf.validate(f'{label} [{vehicle_type}]')

    def out_arcs(self, vertex: int) -> Sequence[Arc]:
        return self._out.get(vertex, ())

    def arcs_between(self, tail: int, head: int) -> Sequence[Arc]:
        return self._between.get((tail, head), ())

    def require_vertex(self, vertex: int) -> None:
        if vertex not in self.vertices:
            raise ConfigurationError(f'unknown vertex {vertex}')

    def require_vehicle_type(self, vehicle_type: str) -> None:
        if vehicle_type not in self.vehicle_types:
            raise ConfigurationError(f'unknown vehicle type {vehicle_type!r}')

    @property
    def has_coordinates(self) -> bool:
        return bool(self.vertices) and all(
            v.point is not None for v in self.vertices.values()
        )

    def euclidean(self, u: int, v: int) -> float:
        pu, pv = self.vertices[u].point, self.vertices[v].point
        return math.hypot(pu[0] - pv[0], pu[1] - pv[1])

    def time_per_meter_bound(self, vehicle_type: str) -> float:
        """
        Largest k with tau(e) >= k * euclid(e) on every arc, so that
        k * euclid(v, target) never overestimates a remaining travel time.
        """
        if vehicle_type not in self._time_per_meter:
            bound = 0.0
            if self.has_coordinates:
                ratios = [
                    arc.ttfs[vehicle_type].min_value / span
                    for arc in self.arcs
                    if (span := self.euclidean(arc.tail, arc.head)) > 0
                ]
                bound = min(ratios) if ratios else 0.0
            self._time_per_meter[vehicle_type] = bound
        return self._time_per_meter[vehicle_type]


@dataclass(frozen=True)
class PathCostPair:
    """
    A road path with its static length; its arrival-time map is evaluated by
    composing the arc functions rather than materialised.
    """

    path: Tuple[int, ...]
    arcs: Tuple[Arc, ...]
    length: float

    def arrival(self, vehicle_type: str, departure: float) -> float:
        t = departure
        for arc in self.arcs:
            t += arc.travel_time(vehicle_type, t)
        return t


@dataclass(frozen=True)
class Leg:
    """Realisation of one PD arc on the road graph"""

    source: int
    target: int
    path: Tuple[int, ...]
    length: float
    departure: float
    arrival: float
    metric: LegMetric

    @property
    def travel_time(self) -> float:
        return self.arrival - self.departure
