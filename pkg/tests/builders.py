from typing import Dict, Iterable, Optional, Sequence, Tuple, Union

import numpy as np

from td_dispatch.features.pd_core.data import Request, Worker
from td_dispatch.features.td_metric.data import Arc, RoadGraph, TravelTimeFunction, Vertex

TTF = Union[float, TravelTimeFunction]


def ttf(value: TTF) -> TravelTimeFunction:
    if isinstance(value, TravelTimeFunction):
        return value
    return TravelTimeFunction.constant(float(value))


def make_graph(
    arcs: Iterable[Tuple[int, int, float, TTF]],
    coords: Optional[Dict[int, Tuple[float, float]]] = None,
    vertices: Optional[Sequence[int]] = None,
    vehicle_types: Sequence[str] = ('car',),
) -> RoadGraph:
    arcs = list(arcs)
    ids = set(vertices or ())
    for tail, head, _, _ in arcs:
        ids.update((tail, head))
    coords = coords or {}
    return RoadGraph(
        [Vertex(v, *coords.get(v, (None, None))) for v in sorted(ids)],
        [
            Arc(tail, head, length, {h: ttf(value) for h in vehicle_types})
            for tail, head, length, value in arcs
        ],
        vehicle_types,
    )


def line_graph(n: int = 4, spacing: float = 1000.0, seconds: float = 100.0) -> RoadGraph:
    """Vertices 0..n-1 on the x axis, joined both ways by identical arcs."""
    arcs = []
    for v in range(n - 1):
        arcs.append((v, v + 1, spacing, seconds))
        arcs.append((v + 1, v, spacing, seconds))
    return make_graph(arcs, {v: (v * spacing, 0.0) for v in range(n)})


def make_request(
    rid: str,
    pickup: int,
    delivery: int,
    ep: float,
    ld: Optional[float] = None,
    ps: float = 0.0,
    ds: float = 0.0,
    load: int = 1,
    rt: Optional[float] = None,
    types: Sequence[str] = ('car',),
    probability: Optional[float] = None,
) -> Request:
    return Request(
        id=rid,
        pickup_vertex=pickup,
        earliest_pickup=ep,
        pickup_service=ps,
        delivery_vertex=delivery,
        latest_delivery=ep + 2400.0 if ld is None else ld,
        delivery_service=ds,
        load=load,
        vehicle_types=frozenset(types),
        release_time=ep if rt is None else rt,
        is_virtual=probability is not None,
        probability=probability,
    )


def make_worker(
    wid: str,
    start: int,
    start_time: float = 0.0,
    end_time: float = 20000.0,
    capacity: int = 3,
    end: Optional[int] = None,
    vehicle_type: str = 'car',
) -> Worker:
    return Worker(
        id=wid,
        start_vertex=start,
        start_time=start_time,
        end_vertex=start if end is None else end,
        end_time=end_time,
        capacity=capacity,
        vehicle_type=vehicle_type,
    )


def random_ttf(rng: np.random.Generator, period: float = 7200.0, pieces: int = 4) -> TravelTimeFunction:
    """Breakpoints far enough apart that every slope stays well above -1."""
    step = period / pieces
    values = rng.uniform(60.0, 300.0, size=pieces)
    return TravelTimeFunction(period, tuple((k * step, float(v)) for k, v in enumerate(values)))


def random_graph(
    rng: np.random.Generator, n: int, density: float = 0.35, constant: bool = False
) -> RoadGraph:
    """Random digraph on a ring backbone, so every vertex reaches every other."""
    coords = {v: (float(x), float(y)) for v, (x, y) in enumerate(rng.uniform(0, 1000, size=(n, 2)))}
    pairs = {(v, (v + 1) % n) for v in range(n)}
    for u in range(n):
        for v in range(n):
            if u != v and rng.random() < density:
                pairs.add((u, v))
    arcs = []
    for u, v in sorted(pairs):
        span = float(np.hypot(coords[u][0] - coords[v][0], coords[u][1] - coords[v][1]))
        length = span * float(rng.uniform(1.0, 1.5)) + 1.0
        value = float(rng.uniform(60.0, 300.0)) if constant else random_ttf(rng)
        arcs.append((u, v, length, value))
    return make_graph(arcs, coords)


def random_requests(
    rng: np.random.Generator, graph: RoadGraph, count: int, horizon: float = 3600.0
) -> Sequence[Request]:
    vertices = sorted(graph.vertices)
    requests = []
    for k in range(count):
        pickup, delivery = (int(v) for v in rng.choice(vertices, size=2, replace=False))
        ep = float(rng.uniform(0.0, horizon))
        requests.append(
            make_request(
                f'r{k}',
                pickup,
                delivery,
                ep,
                ld=ep + float(rng.uniform(900.0, 2400.0)),
                ps=30.0,
                ds=30.0,
                rt=max(ep - float(rng.uniform(0.0, 600.0)), 0.0),
            )
        )
    return sorted(requests, key=lambda r: (r.release_time, r.id))


def random_workers(
    rng: np.random.Generator, graph: RoadGraph, count: int, capacity: int = 2
) -> Sequence[Worker]:
    vertices = sorted(graph.vertices)
    return [
        make_worker(f'w{k}', int(rng.choice(vertices)), 0.0, 14400.0, capacity)
        for k in range(count)
    ]
