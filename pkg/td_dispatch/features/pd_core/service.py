import logging
import math
from typing import FrozenSet, Iterable, Iterator, List, Optional, Sequence, Tuple

from td_dispatch.core.exceptions import (
    DisconnectedInstanceError,
    IndexOutOfRangeError,
)
from td_dispatch.features.pd_core.data import (
    CostMetric,
    FeasibilityReport,
    NodeKind,
    NodeLabel,
    PDGraph,
    PDNode,
    Request,
    Route,
    Subtour,
    Violation,
    ViolationKind,
    Worker,
)
from td_dispatch.features.td_metric.data import Leg
from td_dispatch.features.td_metric.service import Router
from td_dispatch.shared.utils.numeric import leq

logger = logging.getLogger(__name__)


def build_pd_graph(requests: Sequence[Request], workers: Sequence[Worker]) -> PDGraph:
    """
    Build the abstract graph of candidate consecutive visits

    Shift starts connect to every pickup, every delivery connects to every
    shift end, and pickups and deliveries form a complete digraph except for
    the arc from a request's delivery back to its own pickup.

    Args:
        requests (Sequence[Request]): Requests, in order
        workers (Sequence[Worker]): Workers, in order

    Returns:
        PDGraph: Nodes and admissible arcs
    """
    starts = [PDNode.shift_start(w) for w in workers]
    ends = [PDNode.shift_end(w) for w in workers]
    pickups = [PDNode.pickup(r) for r in requests]
    deliveries = [PDNode.delivery(r) for r in requests]
    service = pickups + deliveries

    arcs: List[Tuple[PDNode, PDNode]] = []
    arcs.extend((s, p) for s in starts for p in pickups)
    for u in service:
        for v in service:
            if u == v:
                continue
            if (
                u.kind is NodeKind.DELIVERY
                and v.kind is NodeKind.PICKUP
                and u.owner == v.owner
            ):
                continue
            arcs.append((u, v))
    arcs.extend((d, e) for d in deliveries for e in ends)
    return PDGraph(tuple(starts + service + ends), tuple(arcs))


def _label(
    node: PDNode, arrival: float, previous: Optional[NodeLabel]
) -> NodeLabel:
    load = previous.load if previous else 0
    if node.kind is NodeKind.PICKUP:
        request = node.request
        start = max(arrival, request.earliest_pickup)
        return NodeLabel(
            arrival,
            start + request.pickup_service,
            start - arrival,
            load + request.load,
        )
    if node.kind is NodeKind.DELIVERY:
        request = node.request
        return NodeLabel(
            arrival, arrival + request.delivery_service, 0.0, load - request.load
        )
    return NodeLabel(arrival, arrival, 0.0, load)


def extend_labels(
    subtour: Subtour,
    router: Router,
    draft: Route,
    start: int,
    labels: Sequence[NodeLabel],
) -> Iterator[Tuple[int, Optional[Leg], NodeLabel]]:
    """
    Yield (position, incoming leg, label) from position `start` onward.

    `labels` must hold valid labels for every position before `start`; the
    leg metric of each pair is taken from `draft`. A leg into a held node
    leaves no earlier than the hold.

    Raises:
        DisconnectedInstanceError: If consecutive events are not road-connected
    """
    nodes = subtour.nodes
    worker = subtour.worker
    previous_label = labels[start - 1] if start > 0 else None
    for k in range(start, len(nodes)):
        node = nodes[k]
        if k == 0:
            previous_label = NodeLabel(worker.start_time, worker.start_time, 0.0, 0)
            yield k, None, previous_label
            continue
        previous = nodes[k - 1]
        leg = router.leg(
            worker.vehicle_type,
            previous.vertex,
            node.vertex,
            max(previous_label.departure, node.not_before),
            draft.leg_metric(k - 1),
        )
        if math.isinf(leg.arrival):
            raise DisconnectedInstanceError(
                f'no road path from {previous.name} (vertex {previous.vertex}) '
                f'to {node.name} (vertex {node.vertex})'
            )
        previous_label = _label(node, leg.arrival, previous_label)
        yield k, leg, previous_label


def draft_route(
    subtour: Subtour, metric: CostMetric, time_legs: FrozenSet[Tuple[str, str]]
) -> Route:
    """Unlabelled route carrying only the leg-metric choices for `subtour`."""
    nodes = subtour.nodes
    present = {(u.name, v.name) for u, v in zip(nodes, nodes[1:])}
    return Route(
        subtour, (), (), metric, frozenset(p for p in time_legs if p in present)
    )


def label_subtour(
    subtour: Subtour,
    router: Router,
    metric: CostMetric,
    time_legs: FrozenSet[Tuple[str, str]] = frozenset(),
    start: int = 0,
    labels: Sequence[NodeLabel] = (),
    legs: Sequence[Leg] = (),
) -> Route:
    """
    Realise a subtour, reusing the first `start` labels and `start - 1` legs

    Raises:
        DisconnectedInstanceError: If consecutive events are not road-connected
    """
    draft = draft_route(subtour, metric, time_legs)
    new_labels = list(labels[:start])
    new_legs = list(legs[: max(start - 1, 0)])
    for _, leg, label in extend_labels(subtour, router, draft, start, labels):
        if leg is not None:
            new_legs.append(leg)
        new_labels.append(label)
    return Route(
        subtour, tuple(new_labels), tuple(new_legs), metric, draft.time_legs
    )


def realize_route(
    subtour: Subtour,
    metric: CostMetric,
    router: Router,
    time_legs: FrozenSet[Tuple[str, str]] = frozenset(),
) -> Route:
    """
    Interconnect consecutive events by metric-optimal road paths and fold the
    arrival, departure, waiting and load labels left to right

    Args:
        subtour (Subtour): Structurally valid subtour
        metric (CostMetric): Leg optimisation criterion
        router (Router): Road queries
        time_legs: Node-name pairs to realise with time-optimal legs anyway

    Returns:
        Route: The labelled route

    Raises:
        DisconnectedInstanceError: If consecutive events are not road-connected
    """
    return label_subtour(subtour, router, metric, time_legs)


def relabel_suffix(
    route: Route, i: int, router: Router, subtour: Optional[Subtour] = None
) -> Route:
    """
    Recompute legs and labels from position i onward

    Labels before i (and the legs between them) are taken from `route`; the
    node sequence is `subtour` when given, which lets callers relabel an
    edited copy whose prefix is unchanged.

    Raises:
        IndexOutOfRangeError: If i is not a position of the subtour
    """
    target = subtour if subtour is not None else route.subtour
    if not 0 <= i < len(target.nodes):
        raise IndexOutOfRangeError(
            f'relabel index {i} outside 0..{len(target.nodes) - 1}'
        )
    return label_subtour(
        target,
        router,
        route.metric,
        route.time_legs,
        start=i,
        labels=route.labels,
        legs=route.legs,
    )


def check_feasible(route: Route) -> FeasibilityReport:
    """
    List every violated constraint with the node index it occurs at.
    Deadlines and shift ends are inclusive.
    """
    violations: List[Violation] = []
    worker = route.worker
    pickup_seen = set()
    delivered = set()
    for k, (node, label) in enumerate(zip(route.nodes, route.labels)):
        if label.load > worker.capacity or label.load < 0:
            violations.append(
                Violation(
                    ViolationKind.CAPACITY,
                    k,
                    f'load {label.load} outside [0, {worker.capacity}] at {node.name}',
                )
            )
        if node.kind is NodeKind.PICKUP:
            if node.owner in pickup_seen:
                violations.append(
                    Violation(ViolationKind.PRECEDENCE, k, f'{node.name} repeated')
                )
            pickup_seen.add(node.owner)
        elif node.kind is NodeKind.DELIVERY:
            if node.owner not in pickup_seen or node.owner in delivered:
                violations.append(
                    Violation(
                        ViolationKind.PRECEDENCE,
                        k,
                        f'{node.name} without a preceding pickup',
                    )
                )
            delivered.add(node.owner)
            if not leq(label.arrival, node.request.latest_delivery):
                violations.append(
                    Violation(
                        ViolationKind.DEADLINE,
                        k,
                        f'arrival {label.arrival:.1f} after latest delivery '
                        f'{node.request.latest_delivery:.1f}',
                    )
                )
        elif node.kind is NodeKind.SHIFT_END:
            if not leq(label.arrival, worker.end_time):
                violations.append(
                    Violation(
                        ViolationKind.SHIFT_END,
                        k,
                        f'arrival {label.arrival:.1f} after shift end {worker.end_time:.1f}',
                    )
                )
    return FeasibilityReport(tuple(violations))


def remove_requests(
    route: Route, request_ids: Iterable[str], router: Router
) -> Route:
    """Shortcut the events of the given requests and relabel from the first removed position."""
    drop = set(request_ids)
    nodes = route.nodes
    first = next(
        (k for k, n in enumerate(nodes) if n.is_service and n.owner in drop), None
    )
    if first is None:
        return route
    return relabel_suffix(route, first, router, route.subtour.without(drop))
