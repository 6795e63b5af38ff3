import hashlib
import logging
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple

from td_dispatch.core.exceptions import InstanceValidationError
from td_dispatch.features.pd_core.data import Request, Worker
from td_dispatch.features.simulation.data import Instance, ScenarioDefaults
from td_dispatch.features.td_metric.data import (
    Arc,
    Point,
    RoadGraph,
    TravelTimeFunction,
    Vertex,
)
from td_dispatch.features.td_metric.service import snap_to_graph
from td_dispatch.shared.utils.files import read_json
from td_dispatch.shared.utils.schemas import (
    ForecastFile,
    ForecastSchema,
    GraphFile,
    InstanceFile,
    RequestSchema,
    WorkerSchema,
)

logger = logging.getLogger(__name__)


def graph_from_schema(document: GraphFile) -> RoadGraph:
    """
    Raises:
        GraphValidationError: If an arc breaks a graph invariant
        MalformedFunctionError: If a travel-time function is malformed or not FIFO
    """
    vertices = [Vertex(v.id, v.x, v.y) for v in document.vertices]
    arcs = [
        Arc(
            a.tail,
            a.head,
            a.length_m,
            {
                h: TravelTimeFunction(f.period_s, tuple(f.breakpoints))
                for h, f in a.ttf.items()
            },
        )
        for a in document.arcs
    ]
    return RoadGraph(vertices, arcs, document.vehicle_types)


def _place(
    graph: RoadGraph,
    vertex: Optional[int],
    x: Optional[float],
    y: Optional[float],
    what: str,
) -> Tuple[int, Optional[Point]]:
    point = (x, y) if x is not None and y is not None else None
    if vertex is not None:
        if vertex not in graph.vertices:
            raise InstanceValidationError(f'{what}: unknown vertex {vertex}')
        return vertex, point or graph.vertices[vertex].point
    return snap_to_graph(graph, point), point


def request_from_schema(
    graph: RoadGraph,
    schema: RequestSchema,
    probability: Optional[float] = None,
) -> Request:
    """
    Resolve a request record against the graph, applying the scenario
    defaults to the fields it leaves out
    """
    label = f'request {schema.id}'
    pickup_vertex, pickup_point = _place(
        graph, schema.pickup_vertex, schema.pickup_x, schema.pickup_y, f'{label} pickup'
    )
    delivery_vertex, delivery_point = _place(
        graph,
        schema.delivery_vertex,
        schema.delivery_x,
        schema.delivery_y,
        f'{label} delivery',
    )
    types = frozenset(schema.vehicle_types or graph.vehicle_types)
    unknown = types - graph.vehicle_types
    if unknown:
        raise InstanceValidationError(f'{label}: unknown vehicle types {sorted(unknown)}')
    ep = schema.earliest_pickup
    return Request(
        id=schema.id,
        pickup_vertex=pickup_vertex,
        earliest_pickup=ep,
        pickup_service=(
            ScenarioDefaults.PICKUP_SERVICE_S
            if schema.pickup_service is None
            else schema.pickup_service
        ),
        delivery_vertex=delivery_vertex,
        latest_delivery=(
            ep + ScenarioDefaults.DELIVERY_WINDOW_S
            if schema.latest_delivery is None
            else schema.latest_delivery
        ),
        delivery_service=(
            ScenarioDefaults.DELIVERY_SERVICE_S
            if schema.delivery_service is None
            else schema.delivery_service
        ),
        load=ScenarioDefaults.LOAD if schema.load is None else schema.load,
        vehicle_types=types,
        release_time=ep if schema.release_time is None else schema.release_time,
        is_virtual=probability is not None,
        probability=probability,
        pickup_point=pickup_point,
        delivery_point=delivery_point,
    )


def worker_from_schema(graph: RoadGraph, schema: WorkerSchema) -> Worker:
    label = f'worker {schema.id}'
    start_vertex, start_point = _place(
        graph, schema.start_vertex, schema.start_x, schema.start_y, f'{label} start'
    )
    if schema.end_vertex is None and (schema.end_x is None or schema.end_y is None):
        end_vertex, end_point = start_vertex, start_point
    else:
        end_vertex, end_point = _place(
            graph, schema.end_vertex, schema.end_x, schema.end_y, f'{label} end'
        )
    if schema.vehicle_type not in graph.vehicle_types:
        raise InstanceValidationError(f'{label}: unknown vehicle type {schema.vehicle_type!r}')
    return Worker(
        id=schema.id,
        start_vertex=start_vertex,
        start_time=schema.start_time,
        end_vertex=end_vertex,
        end_time=schema.end_time,
        capacity=ScenarioDefaults.CAPACITY if schema.capacity is None else schema.capacity,
        vehicle_type=schema.vehicle_type,
        start_point=start_point,
        end_point=end_point,
    )


def _unique(ids: Iterable[str], what: str) -> None:
    seen = set()
    for identifier in ids:
        if identifier in seen:
            raise InstanceValidationError(f'{what} {identifier} declared twice')
        seen.add(identifier)


def fingerprint(paths: Sequence[Path]) -> str:
    digest = hashlib.sha256()
    for path in paths:
        digest.update(Path(path).read_bytes())
    return digest.hexdigest()[:16]


def build_instance(graph: RoadGraph, document: InstanceFile, digest: str = '') -> Instance:
    _unique((r.id for r in document.requests), 'request')
    _unique((w.id for w in document.workers), 'worker')
    requests = sorted(
        (request_from_schema(graph, r) for r in document.requests),
        key=lambda r: (r.release_time, r.id),
    )
    workers = sorted(
        (worker_from_schema(graph, w) for w in document.workers), key=lambda w: w.id
    )
    return Instance(graph, requests, workers, digest)


def load_graph(path: Path) -> RoadGraph:
    return graph_from_schema(read_json(path, GraphFile))


def load_instance(graph_path: Path, instance_path: Path) -> Instance:
    """
    Read and validate a road graph and an instance file

    Locations given as coordinates snap to the nearest vertex; missing
    loads, deadlines, service times, capacities and release times take the
    scenario defaults.

    Args:
        graph_path (Path): Road graph JSON
        instance_path (Path): Requests and workers JSON

    Returns:
        Instance: Requests by (release time, id), workers by id

    Raises:
        InstanceValidationError: On syntax or schema errors, with the line or field
        GraphValidationError: If the road graph is inconsistent
        FifoViolationError: If a travel-time function violates FIFO
    """
    graph = load_graph(graph_path)
    instance = build_instance(
        graph,
        read_json(instance_path, InstanceFile),
        fingerprint([graph_path, instance_path]),
    )
    logger.info(
        f'Loaded {len(graph.vertices)} vertices, {len(graph.arcs)} arcs, '
        f'{len(instance.requests)} requests, {len(instance.workers)} workers'
    )
    return instance


def forecasts_from_schema(
    graph: RoadGraph, schemas: Sequence[ForecastSchema]
) -> List[Request]:
    _unique((f.id for f in schemas), 'forecast')
    forecasts = [
        request_from_schema(graph, f, probability=f.probability) for f in schemas
    ]
    return sorted(forecasts, key=lambda f: (f.earliest_pickup, f.id))


def load_forecasts(graph: RoadGraph, path: Path) -> List[Request]:
    """Virtual requests of a forecast file, ordered by (earliest pickup, id)."""
    return forecasts_from_schema(graph, read_json(path, ForecastFile).root)
