import logging
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np

from td_dispatch.features.simulation.data import GeneratorDefaults, ScenarioDefaults
from td_dispatch.shared.utils.schemas import (
    ArcSchema,
    GraphFile,
    HistoryFile,
    HistoryRequestSchema,
    InstanceFile,
    RequestSchema,
    TravelTimeSchema,
    VertexSchema,
    WorkerSchema,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GeneratedInstance:
    graph: GraphFile
    instance: InstanceFile
    history: HistoryFile


@dataclass(frozen=True)
class _Template:
    """Recurring origin-destination demand shared by every simulated day"""

    pickup: int
    delivery: int
    time: float


def congestion(t: np.ndarray) -> np.ndarray:
    """Travel-time multiplier over the day: 1 plus a Gaussian bump per peak."""
    factor = np.ones_like(t, dtype=float)
    for centre, width, height in GeneratorDefaults.PEAKS:
        factor += height * np.exp(-0.5 * ((t - centre) / width) ** 2)
    return factor


def _grid_graph(
    rng: np.random.Generator, side: int, vehicle_types: Sequence[str]
) -> GraphFile:
    spacing = GeneratorDefaults.SPACING_M
    vertices = [
        VertexSchema(id=row * side + col, x=col * spacing, y=row * spacing)
        for row in range(side)
        for col in range(side)
    ]
    times = np.arange(0.0, GeneratorDefaults.PERIOD_S, GeneratorDefaults.BREAKPOINT_STEP_S)
    profile = congestion(times)

    arcs: List[ArcSchema] = []
    for row in range(side):
        for col in range(side):
            u = row * side + col
            neighbours = []
            if col + 1 < side:
                neighbours.append(u + 1)
            if row + 1 < side:
                neighbours.append(u + side)
            for v in neighbours:
                for tail, head in ((u, v), (v, u)):
                    length = spacing * float(rng.uniform(0.95, 1.25))
                    ttf: Dict[str, TravelTimeSchema] = {}
                    for h in vehicle_types:
                        base = length / GeneratorDefaults.SPEED_MPS.get(h, 10.0)
                        noise = 1.0 + GeneratorDefaults.NOISE * rng.uniform(
                            -1.0, 1.0, size=times.shape
                        )
                        values = np.round(base * profile * noise, 3)
                        ttf[h] = TravelTimeSchema(
                            period_s=GeneratorDefaults.PERIOD_S,
                            breakpoints=list(zip(times.tolist(), values.tolist())),
                        )
                    arcs.append(
                        ArcSchema(tail=tail, head=head, length_m=round(length, 3), ttf=ttf)
                    )
    return GraphFile(vehicle_types=list(vehicle_types), vertices=vertices, arcs=arcs)


def _templates(rng: np.random.Generator, side: int, count: int) -> List[_Template]:
    n = side * side
    templates = []
    for _ in range(count):
        pickup = int(rng.integers(n))
        delivery = int(rng.integers(n - 1))
        delivery += delivery >= pickup
        # demand clusters around the peaks and midday, inside the shift coverage
        time = float(rng.choice(GeneratorDefaults.DEMAND_HOURS)) * 3600 + float(rng.normal(0.0, 3600.0))
        time = float(np.clip(time, *GeneratorDefaults.DEMAND_SPAN_S))
        templates.append(_Template(pickup, delivery, time))
    return templates


def _draw_requests(
    rng: np.random.Generator,
    templates: Sequence[_Template],
    count: int,
    prefix: str,
) -> List[Tuple[str, int, int, float, float]]:
    chosen = rng.integers(len(templates), size=count)
    jitter = rng.normal(0.0, GeneratorDefaults.JITTER_S, size=count)
    lead = rng.uniform(0.0, GeneratorDefaults.LEAD_S, size=count)
    drawn = []
    for k in range(count):
        template = templates[int(chosen[k])]
        ep = round(float(max(template.time + jitter[k], lead[k])), 1)
        release = round(max(ep - float(lead[k]), 0.0), 1)
        drawn.append((f'{prefix}{k:04d}', template.pickup, template.delivery, ep, release))
    drawn.sort(key=lambda d: (d[4], d[0]))
    return drawn


def generate_instance(
    seed: int,
    requests: int,
    workers: int,
    side: int = GeneratorDefaults.GRID_SIDE,
    history_days: int = 0,
    vehicle_types: Sequence[str] = ('car',),
) -> GeneratedInstance:
    """
    Deterministic synthetic city with a day of requests

    The road graph is a planar grid with jittered arc lengths and travel
    times that follow a morning and an evening peak. Requests recur around
    shared origin-destination templates, so historical days generated with
    `history_days` resemble the replayed day.

    Args:
        seed (int): Seed of every random draw
        requests (int): Requests of the replayed day
        workers (int): Workers with staggered shifts
        side (int): Grid side, in vertices
        history_days (int): Extra days tagged for forecasting
        vehicle_types (Sequence[str]): Vehicle types carried by every arc

    Returns:
        GeneratedInstance: Graph, instance and history documents
    """
    rng = np.random.default_rng(seed)
    graph = _grid_graph(rng, side, vehicle_types)
    templates = _templates(rng, side, max(10, requests // 2))

    request_records = [
        RequestSchema(
            id=rid,
            pickup_vertex=pickup,
            delivery_vertex=delivery,
            earliest_pickup=ep,
            latest_delivery=ep + ScenarioDefaults.DELIVERY_WINDOW_S,
            pickup_service=ScenarioDefaults.PICKUP_SERVICE_S,
            delivery_service=ScenarioDefaults.DELIVERY_SERVICE_S,
            load=ScenarioDefaults.LOAD,
            release_time=release,
        )
        for rid, pickup, delivery, ep, release in _draw_requests(rng, templates, requests, 'r')
    ]

    n = side * side
    span = GeneratorDefaults.LAST_SHIFT_S - GeneratorDefaults.FIRST_SHIFT_S
    worker_records = []
    for k in range(workers):
        start = GeneratorDefaults.FIRST_SHIFT_S + (span * k / max(workers - 1, 1))
        depot = int(rng.integers(n))
        worker_records.append(
            WorkerSchema(
                id=f'w{k:03d}',
                start_vertex=depot,
                end_vertex=depot,
                start_time=start,
                end_time=start + GeneratorDefaults.SHIFT_S,
                capacity=ScenarioDefaults.CAPACITY,
                vehicle_type=vehicle_types[k % len(vehicle_types)],
            )
        )

    history = []
    for day in range(history_days):
        day_rng = np.random.default_rng([seed, day + 1])
        for rid, pickup, delivery, ep, release in _draw_requests(
            day_rng, templates, requests, f'h{day}-'
        ):
            history.append(
                HistoryRequestSchema(
                    id=rid,
                    day=day,
                    pickup_vertex=pickup,
                    delivery_vertex=delivery,
                    earliest_pickup=ep,
                    release_time=release,
                )
            )

    logger.info(
        f'Generated {len(graph.vertices)} vertices, {len(graph.arcs)} arcs, '
        f'{requests} requests, {workers} workers, {history_days} history days'
    )
    return GeneratedInstance(
        graph,
        InstanceFile(requests=request_records, workers=worker_records),
        HistoryFile(days=max(history_days, 1), requests=history),
    )
