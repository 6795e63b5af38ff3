import logging
import math
from dataclasses import replace
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from td_dispatch.core.exceptions import ConfigurationError
from td_dispatch.features.forecast.data import (
    Aggregator,
    Cell,
    EventKind,
    ForecastCluster,
    Grid,
    GridEvent,
    GridKey,
    GridSpec,
    HistoricalRequest,
    cell_index,
    window_of,
)
from td_dispatch.features.pd_core.data import Request
from td_dispatch.features.simulation.instance import request_from_schema
from td_dispatch.features.td_metric.data import Point, RoadGraph
from td_dispatch.shared.utils.files import read_json
from td_dispatch.shared.utils.schemas import ForecastFile, ForecastSchema, HistoryFile

logger = logging.getLogger(__name__)


def load_history(graph: RoadGraph, path: Path) -> Tuple[int, List[HistoricalRequest]]:
    """Sampled-day count and day-tagged requests of a history file."""
    document = read_json(path, HistoryFile)
    history = [
        HistoricalRequest(r.day, request_from_schema(graph, r)) for r in document.requests
    ]
    return document.days, history


def _point(request: Request, kind: EventKind) -> Point:
    point = request.pickup_point if kind is EventKind.PICKUP else request.delivery_point
    if point is None:
        raise ConfigurationError(f'request {request.id} has no {kind.value} coordinates')
    return point


def build_grid(
    history: Iterable[HistoricalRequest],
    spec: GridSpec,
    bounds: Optional[Tuple[Point, Point]] = None,
) -> Grid:
    """
    Place the pickup and delivery event of every historical request into a
    spatiotemporal grid of D x D cells and day windows

    Args:
        history (Iterable[HistoricalRequest]): Requests tagged with their day
        spec (GridSpec): Cell size, windows per day and sampled days
        bounds (Optional[Tuple[Point, Point]]): Lower and upper corner of the
            covered area, defaults to the bounding box of all events

    Returns:
        Grid: Events by (cell-x, cell-y, window); out-of-area events are
        clamped to the border cell
    """
    sources = sorted(history, key=lambda h: (h.day, h.request.id))
    points = [
        _point(s.request, kind) for s in sources for kind in (EventKind.PICKUP, EventKind.DELIVERY)
    ]
    if bounds is None:
        if points:
            coords = np.asarray(points, dtype=float)
            lower, upper = coords.min(axis=0), coords.max(axis=0)
            bounds = ((float(lower[0]), float(lower[1])), (float(upper[0]), float(upper[1])))
        else:
            bounds = ((0.0, 0.0), (0.0, 0.0))
    (min_x, min_y), (max_x, max_y) = bounds
    shape = (
        max(1, math.ceil((max_x - min_x) / spec.cell_size)),
        max(1, math.ceil((max_y - min_y) / spec.cell_size)),
    )
    grid = Grid(spec, (min_x, min_y), shape, sources=sources)

    for source in sources:
        request = source.request
        for kind, t in (
            (EventKind.PICKUP, request.earliest_pickup),
            (EventKind.DELIVERY, request.latest_delivery),
        ):
            x, y = _point(request, kind)
            cx = cell_index(x, min_x, spec.cell_size, shape[0])
            cy = cell_index(y, min_y, spec.cell_size, shape[1])
            if cx is None or cy is None:
                logger.warning(
                    f'{kind.value} of request {request.id} (day {source.day}) at '
                    f'({x:.1f}, {y:.1f}) lies outside the grid; clamped to the border cell'
                )
                cx = min(max(math.ceil((x - min_x) / spec.cell_size) - 1, 0), shape[0] - 1)
                cy = min(max(math.ceil((y - min_y) / spec.cell_size) - 1, 0), shape[1] - 1)
            grid.add(GridEvent(kind, source, (cx, cy, window_of(t, spec))))

    logger.info(f'Indexed {grid.event_count} events of {len(sources)} requests')
    return grid


def _aggregate(values: Sequence[float], aggregator: Aggregator) -> float:
    if aggregator is Aggregator.MEDIAN:
        return float(np.median(values))
    return float(np.mean(values))


def _summarise(cluster: ForecastCluster, aggregator: Aggregator) -> ForecastCluster:
    requests = [m.request for m in cluster.members]
    cluster.earliest_pickup = _aggregate([r.earliest_pickup for r in requests], aggregator)
    cluster.load = _aggregate([r.load for r in requests], aggregator)
    return cluster


def _mergeable(a: ForecastCluster, b: ForecastCluster, threshold: float) -> bool:
    return (
        not set(a.days) & set(b.days)
        and a.vehicle_types == b.vehicle_types
        and abs(a.earliest_pickup - b.earliest_pickup) <= threshold
        and abs(a.load - b.load) <= 1
    )


def _merge_group(
    clusters: List[ForecastCluster], threshold: float, aggregator: Aggregator
) -> List[ForecastCluster]:
    merged = True
    while merged:
        merged = False
        for a in range(len(clusters)):
            for b in range(a + 1, len(clusters)):
                if _mergeable(clusters[a], clusters[b], threshold):
                    clusters[a].members.extend(clusters[b].members)
                    _summarise(clusters[a], aggregator)
                    del clusters[b]
                    merged = True
                    break
            if merged:
                break
    return clusters


def _representative(
    members: Sequence[HistoricalRequest], kind: EventKind, target: Point
) -> Tuple[int, Point]:
    best = None
    for member in members:
        x, y = _point(member.request, kind)
        distance = math.hypot(x - target[0], y - target[1])
        if best is None or distance < best[0]:
            vertex = (
                member.request.pickup_vertex
                if kind is EventKind.PICKUP
                else member.request.delivery_vertex
            )
            best = (distance, vertex)
    return best[1], target


def merge_forecasts(
    grid: Grid,
    similarity_threshold: Optional[float] = None,
    aggregator: Aggregator = Aggregator.MEAN,
) -> List[Request]:
    """
    Merge historical requests of different days into probabilistic forecasts

    Two groups merge when their pickup cell, delivery cell and pickup window
    coincide, they share no day, they accept the same vehicle types, their
    aggregated earliest pickups differ by at most the threshold and their
    aggregated loads by at most one unit. Merging repeats until no pair
    qualifies, scanning groups in ascending (day, request id) order.

    Args:
        grid (Grid): Indexed history
        similarity_threshold (Optional[float]): Max earliest-pickup gap in
            seconds, half a time window by default
        aggregator (Aggregator): How merged times, locations and loads combine

    Returns:
        List[Request]: Virtual requests ordered by earliest pickup, each with
        probability = contributing days / sampled days
    """
    threshold = (
        grid.spec.window_length / 2 if similarity_threshold is None else similarity_threshold
    )
    groups: Dict[Tuple[Cell, Cell, int], List[ForecastCluster]] = {}
    for source in grid.sources:
        pickup: GridKey = grid.key_of(source, EventKind.PICKUP)
        delivery: GridKey = grid.key_of(source, EventKind.DELIVERY)
        cluster = ForecastCluster([source], pickup[:2], delivery[:2], pickup[2])
        key = (cluster.pickup_cell, cluster.delivery_cell, cluster.window)
        groups.setdefault(key, []).append(_summarise(cluster, aggregator))

    clusters = [
        cluster
        for key in sorted(groups)
        for cluster in _merge_group(groups[key], threshold, aggregator)
    ]
    clusters.sort(key=lambda c: (c.earliest_pickup, c.first))

    forecasts = []
    for index, cluster in enumerate(clusters):
        requests = [m.request for m in cluster.members]
        pickup_xy = tuple(
            _aggregate([_point(r, EventKind.PICKUP)[axis] for r in requests], aggregator)
            for axis in (0, 1)
        )
        delivery_xy = tuple(
            _aggregate([_point(r, EventKind.DELIVERY)[axis] for r in requests], aggregator)
            for axis in (0, 1)
        )
        pickup_vertex, pickup_point = _representative(cluster.members, EventKind.PICKUP, pickup_xy)
        delivery_vertex, delivery_point = _representative(
            cluster.members, EventKind.DELIVERY, delivery_xy
        )
        ep = cluster.earliest_pickup
        forecasts.append(
            Request(
                id=f'f{index:04d}',
                pickup_vertex=pickup_vertex,
                earliest_pickup=ep,
                pickup_service=_aggregate([r.pickup_service for r in requests], aggregator),
                delivery_vertex=delivery_vertex,
                latest_delivery=max(
                    _aggregate([r.latest_delivery for r in requests], aggregator), ep + 1.0
                ),
                delivery_service=_aggregate([r.delivery_service for r in requests], aggregator),
                load=int(round(cluster.load)),
                vehicle_types=cluster.vehicle_types,
                release_time=ep,
                is_virtual=True,
                probability=len(cluster.days) / grid.spec.days,
                pickup_point=pickup_point,
                delivery_point=delivery_point,
            )
        )
    logger.info(
        f'Merged {len(grid.sources)} historical requests into {len(forecasts)} forecasts'
    )
    return forecasts


def perfect_forecasts(requests: Iterable[Request]) -> List[Request]:
    """Probability-one forecasts that reproduce the given requests exactly."""
    return [
        replace(
            r,
            id=f'f-{r.id}',
            is_virtual=True,
            probability=1.0,
            release_time=r.earliest_pickup,
        )
        for r in sorted(requests, key=lambda r: (r.earliest_pickup, r.id))
    ]


def forecast_document(forecasts: Iterable[Request]) -> ForecastFile:
    """File form of virtual requests; vertices and coordinates are both kept."""
    records = []
    for f in forecasts:
        records.append(
            ForecastSchema(
                id=f.id,
                pickup_vertex=f.pickup_vertex,
                pickup_x=f.pickup_point[0] if f.pickup_point else None,
                pickup_y=f.pickup_point[1] if f.pickup_point else None,
                delivery_vertex=f.delivery_vertex,
                delivery_x=f.delivery_point[0] if f.delivery_point else None,
                delivery_y=f.delivery_point[1] if f.delivery_point else None,
                earliest_pickup=round(f.earliest_pickup, 3),
                latest_delivery=round(f.latest_delivery, 3),
                pickup_service=round(f.pickup_service, 3),
                delivery_service=round(f.delivery_service, 3),
                load=f.load,
                vehicle_types=sorted(f.vehicle_types),
                release_time=round(f.release_time, 3),
                probability=f.probability,
            )
        )
    return ForecastFile(records)
