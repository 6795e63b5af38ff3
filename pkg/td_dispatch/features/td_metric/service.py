import heapq
import logging
import math
from functools import lru_cache
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from td_dispatch.core.exceptions import ConfigurationError, InvalidPathError
from td_dispatch.features.td_metric.data import (
    Arc,
    Leg,
    LegMetric,
    PathCostPair,
    Point,
    RoadGraph,
    TravelTimeFunction,
)

logger = logging.getLogger(__name__)

Label = Tuple[float, Optional[int]]


def evaluate_ttf(f: TravelTimeFunction, t: float) -> float:
    """
    Evaluate a travel-time function at departure time t

    Args:
        f (TravelTimeFunction): The function
        t (float): Departure time in seconds, reduced modulo the period

    Returns:
        float: Travel time in seconds
    """
    return f.evaluate(t)


def _search(
    g: RoadGraph,
    origin: int,
    start: float,
    step: Callable[[Arc, float], float],
    target: Optional[int] = None,
    potential: Optional[Callable[[int], float]] = None,
) -> Tuple[Dict[int, float], Dict[int, Arc]]:
    """
    Label-setting search keyed on (label + potential, vertex id).

    `step(arc, label)` returns the label at the arc head. Exact whenever the
    step is non-decreasing in the label and the potential is consistent.
    """
    labels: Dict[int, float] = {origin: start}
    parents: Dict[int, Arc] = {}
    settled = set()
    heap = [(start, origin)]
    while heap:
        _, u = heapq.heappop(heap)
        if u in settled:
            continue
        settled.add(u)
        if u == target:
            break
        label_u = labels[u]
        for arc in g.out_arcs(u):
            v = arc.head
            if v in settled:
                continue
            label_v = step(arc, label_u)
            if label_v < labels.get(v, math.inf):
                labels[v] = label_v
                parents[v] = arc
                key = label_v + potential(v) if potential else label_v
                heapq.heappush(heap, (key, v))
    return labels, parents


def earliest_arrival(
    g: RoadGraph, h: str, origin: int, departure: float
) -> Dict[int, Label]:
    """
    One-to-all time-dependent Dijkstra; exact under FIFO travel times.

    Returns:
        Dict[int, Label]: Reachable vertex -> (arrival time, predecessor)

    Raises:
        ConfigurationError: If the vehicle type or the origin is unknown
    """
    g.require_vehicle_type(h)
    g.require_vertex(origin)
    labels, parents = _search(
        g, origin, departure, lambda arc, t: t + arc.travel_time(h, t)
    )
    return {
        v: (t, parents[v].tail if v in parents else None) for v, t in labels.items()
    }


def shortest_distance(g: RoadGraph, origin: int) -> Dict[int, Label]:
    """
    One-to-all static Dijkstra on arc lengths.

    Returns:
        Dict[int, Label]: Reachable vertex -> (distance in meters, predecessor)
    """
    g.require_vertex(origin)
    labels, parents = _search(g, origin, 0.0, lambda arc, d: d + arc.length)
    return {
        v: (d, parents[v].tail if v in parents else None) for v, d in labels.items()
    }


def _resolve_arcs(g: RoadGraph, h: str, path: Sequence[int], departure: float):
    arcs: List[Arc] = []
    t = departure
    for u, v in zip(path, path[1:]):
        candidates = g.arcs_between(u, v)
        if not candidates:
            raise InvalidPathError(f'no arc from {u} to {v}')
        arc = min(candidates, key=lambda a: t + a.travel_time(h, t))
        t += arc.travel_time(h, t)
        arcs.append(arc)
    return arcs, t


def compose_arrival(
    path: Sequence[int], g: RoadGraph, h: str, departure: float
) -> Tuple[float, float]:
    """
    Fold the arrival-time recurrence along a vertex path.

    Parallel arcs between the same pair resolve to the one arriving first.

    Returns:
        Tuple[float, float]: (arrival time, length)

    Raises:
        InvalidPathError: If two consecutive vertices are not joined by an arc
        ConfigurationError: If the vehicle type is unknown
    """
    g.require_vehicle_type(h)
    arcs, arrival = _resolve_arcs(g, h, path, departure)
    return arrival, sum(arc.length for arc in arcs)


def snap_to_graph(g: RoadGraph, location: Point) -> int:
    """
    Nearest vertex to a planar location, smallest id on ties.

    Raises:
        ConfigurationError: If no vertex has coordinates
    """
    ids = sorted(v.id for v in g.vertices.values() if v.point is not None)
    if not ids:
        raise ConfigurationError('graph has no vertex coordinates to snap to')
    coords = np.array([g.vertices[v].point for v in ids], dtype=float)
    d2 = ((coords - np.asarray(location, dtype=float)) ** 2).sum(axis=1)
    return ids[int(np.argmin(d2))]


def _unpack(origin: int, target: int, parents: Dict[int, Arc]) -> Tuple[Arc, ...]:
    arcs: List[Arc] = []
    v = target
    while v != origin:
        arc = parents[v]
        arcs.append(arc)
        v = arc.tail
    return tuple(reversed(arcs))


class Router:
    """
    Memoised road queries used when realising routes

    Attributes:
        graph (RoadGraph): The immutable road graph
    """

    def __init__(self, graph: RoadGraph, cache_size: int = 200_000) -> None:
        self.graph = graph
        self.time_optimal_leg = lru_cache(maxsize=cache_size)(self._time_optimal_leg)
        self.distance_optimal_leg = lru_cache(maxsize=cache_size)(
            self._distance_optimal_leg
        )
        self._distance_trees: Dict[int, Tuple[Dict[int, float], Dict[int, Arc]]] = {}
        self._bound_trees: Dict[Tuple[str, int], Dict[int, float]] = {}
        self.leg_queries = 0

    def leg(
        self, h: str, u: int, v: int, departure: float, metric: LegMetric
    ) -> Leg:
        if metric is LegMetric.TIME:
            return self.time_optimal_leg(h, u, v, departure)
        return self.distance_optimal_leg(h, u, v, departure)

    def _time_optimal_leg(self, h: str, u: int, v: int, departure: float) -> Leg:
        self.graph.require_vehicle_type(h)
        self.leg_queries += 1
        if u == v:
            return Leg(u, v, (u,), 0.0, departure, departure, LegMetric.TIME)

        potential = None
        bound = self.graph.time_per_meter_bound(h)
        if bound > 0:
            potential = lambda x: bound * self.graph.euclidean(x, v)  # noqa: E731
        labels, parents = _search(
            self.graph,
            u,
            departure,
            lambda arc, t: t + arc.travel_time(h, t),
            target=v,
            potential=potential,
        )
        if v not in labels:
            return self._unreachable(u, v, departure, LegMetric.TIME)
        arcs = _unpack(u, v, parents)
        return Leg(
            u,
            v,
            (u,) + tuple(arc.head for arc in arcs),
            sum(arc.length for arc in arcs),
            departure,
            labels[v],
            LegMetric.TIME,
        )

    def distance_path(self, u: int, v: int) -> Optional[PathCostPair]:
        """Static shortest path from u to v, None when unreachable."""
        if u not in self._distance_trees:
            self.graph.require_vertex(u)
            self._distance_trees[u] = _search(
                self.graph, u, 0.0, lambda arc, d: d + arc.length
            )
        labels, parents = self._distance_trees[u]
        if v not in labels:
            return None
        arcs = _unpack(u, v, parents)
        return PathCostPair((u,) + tuple(a.head for a in arcs), arcs, labels[v])

    def _distance_optimal_leg(self, h: str, u: int, v: int, departure: float) -> Leg:
        self.graph.require_vehicle_type(h)
        self.leg_queries += 1
        pair = self.distance_path(u, v)
        if pair is None:
            return self._unreachable(u, v, departure, LegMetric.DISTANCE)
        return Leg(
            u,
            v,
            pair.path,
            pair.length,
            departure,
            pair.arrival(h, departure),
            LegMetric.DISTANCE,
        )

    def shortest_length(self, u: int, v: int) -> float:
        pair = self.distance_path(u, v)
        return math.inf if pair is None else pair.length

    def travel_time_lower_bound(self, h: str, u: int, v: int) -> float:
        """
        Static shortest path over each arc's minimum travel time, a lower
        bound on the travel time from u to v at any departure.
        """
        key = (h, u)
        if key not in self._bound_trees:
            self.graph.require_vehicle_type(h)
            self.graph.require_vertex(u)
            labels, _ = _search(
                self.graph, u, 0.0, lambda arc, d: d + arc.ttfs[h].min_value
            )
            self._bound_trees[key] = labels
        return self._bound_trees[key].get(v, math.inf)

    @staticmethod
    def _unreachable(u: int, v: int, departure: float, metric: LegMetric) -> Leg:
        logger.debug(f'No road path from {u} to {v}')
        return Leg(u, v, (), math.inf, departure, math.inf, metric)
