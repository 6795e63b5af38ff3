import logging
import math
from dataclasses import replace
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

from td_dispatch.core.exceptions import (
    ConfigurationError,
    ConsistencyError,
    InstanceValidationError,
)
from td_dispatch.features.milp.data import (
    CandidateSolution,
    LegVariant,
    LinearConstraint,
    MilpModel,
    NodePair,
    OracleSolution,
    RepairStatus,
    ScalarArc,
    ScalarizedPDGraph,
    ScalarLeg,
    Sense,
    SolutionCheckReport,
    Variable,
    WorkerCheck,
    arc_variable,
    assignment_variable,
    lp_name,
    node_window,
    subtour_variables,
)
from td_dispatch.features.milp.lp_format import write_lp
from td_dispatch.features.milp.oracle import ExactOracle
from td_dispatch.features.pd_core.data import (
    CostMetric,
    NodeKind,
    PDGraph,
    PDNode,
    Request,
    Route,
    Subtour,
    ViolationKind,
    Worker,
)
from td_dispatch.features.pd_core.service import (
    check_feasible,
    realize_route,
    relabel_suffix,
)
from td_dispatch.features.td_metric.service import Router
from td_dispatch.shared.utils.numeric import Tolerance
from td_dispatch.shared.utils.schemas import CandidateSchema, SubtourSchema

logger = logging.getLogger(__name__)


def _service(node: PDNode) -> float:
    if node.kind is NodeKind.PICKUP:
        return node.request.pickup_service
    if node.kind is NodeKind.DELIVERY:
        return node.request.delivery_service
    return 0.0


def _arc_types(u: PDNode, v: PDNode) -> List[str]:
    """Vehicle types that may traverse the PD arc (u, v)."""
    if u.kind is NodeKind.SHIFT_START:
        types = {u.worker.vehicle_type} & v.request.vehicle_types
    elif v.kind is NodeKind.SHIFT_END:
        types = {v.worker.vehicle_type} & u.request.vehicle_types
    else:
        types = u.request.vehicle_types & v.request.vehicle_types
    return sorted(types)


def scalarize(
    pd_graph: PDGraph,
    router: Router,
    workers: Sequence[Worker],
    requests: Sequence[Request],
    metric: CostMetric = CostMetric.TIME,
) -> ScalarizedPDGraph:
    """
    Attach scalar travel times to every PD arc

    Arcs leaving a shift start depart at the shift start. Arcs leaving a
    pickup depart at the later of its earliest pickup time and the earliest
    arrival there from any worker of that vehicle type. Arcs leaving a
    delivery depart at the earliest arrival there from its own pickup.
    Travel times include the service time at the arc's head and stay
    strictly positive, even between events at one vertex; under a
    distance objective each arc also carries its distance- and time-optimal
    legs.

    Args:
        pd_graph (PDGraph): Nodes and admissible arcs
        router (Router): Exact time-dependent road queries
        workers (Sequence[Worker]): Workers of the instance
        requests (Sequence[Request]): Requests of the instance
        metric (CostMetric): Objective the model will be built for

    Returns:
        ScalarizedPDGraph: Arcs with unreachable endpoints dropped
    """
    from_start: Dict[Tuple[str, str], float] = {}
    for worker in workers:
        for request in requests:
            if worker.vehicle_type not in request.vehicle_types:
                continue
            leg = router.time_optimal_leg(
                worker.vehicle_type,
                worker.start_vertex,
                request.pickup_vertex,
                worker.start_time,
            )
            key = (worker.vehicle_type, request.id)
            from_start[key] = min(from_start.get(key, math.inf), leg.arrival)

    pickup_departure: Dict[Tuple[str, str], float] = {}
    delivery_departure: Dict[str, float] = {}
    for request in requests:
        arrivals = []
        for h in sorted(request.vehicle_types):
            earliest = from_start.get((h, request.id), -math.inf)
            departure = max(request.earliest_pickup, earliest)
            pickup_departure[(h, request.id)] = departure
            if math.isinf(departure):
                continue
            leg = router.time_optimal_leg(
                h, request.pickup_vertex, request.delivery_vertex, departure
            )
            arrivals.append(leg.arrival)
        delivery_departure[request.id] = min(arrivals, default=math.inf)

    def departure_of(u: PDNode, h: str) -> float:
        if u.kind is NodeKind.SHIFT_START:
            return u.worker.start_time
        if u.kind is NodeKind.PICKUP:
            return pickup_departure[(h, u.owner)]
        return delivery_departure[u.owner]

    arcs: List[ScalarArc] = []
    dropped: List[NodePair] = []
    for u, v in pd_graph.arcs:
        types = _arc_types(u, v)
        if not types:
            continue
        length = router.shortest_length(u.vertex, v.vertex)
        tau: Dict[str, float] = {}
        pareto: Dict[str, Dict[LegVariant, ScalarLeg]] = {}
        for h in types:
            departure = departure_of(u, h)
            if math.isinf(departure):
                continue
            fastest = router.time_optimal_leg(h, u.vertex, v.vertex, departure)
            if math.isinf(fastest.arrival):
                continue
            tau[h] = max(fastest.travel_time + _service(v), Tolerance.TIME)
            if metric is CostMetric.DISTANCE:
                shortest = router.distance_optimal_leg(h, u.vertex, v.vertex, departure)
                pareto[h] = {
                    LegVariant.DISTANCE: ScalarLeg(
                        shortest.length,
                        max(shortest.travel_time + _service(v), Tolerance.TIME),
                    ),
                    LegVariant.TIME: ScalarLeg(fastest.length, tau[h]),
                }
        if not tau or math.isinf(length):
            logger.warning(f'Dropping PD arc {u.name}->{v.name}: endpoints not road-connected')
            dropped.append((u.name, v.name))
            continue
        arcs.append(ScalarArc(len(arcs), u, v, length, tau, pareto))

    logger.info(f'Scalarised {len(arcs)} PD arcs, dropped {len(dropped)}')
    return ScalarizedPDGraph(pd_graph.nodes, tuple(arcs), metric, tuple(dropped))


def _arc_choices(
    scalarized: ScalarizedPDGraph, workers: Sequence[Worker]
) -> List[Tuple[ScalarArc, Worker, LegVariant, ScalarLeg]]:
    choices = []
    for arc in scalarized.arcs:
        for worker in workers:
            if arc.tail.kind is NodeKind.SHIFT_START and arc.tail.owner != worker.id:
                continue
            if arc.head.kind is NodeKind.SHIFT_END and arc.head.owner != worker.id:
                continue
            variants = arc.variants(worker.vehicle_type, scalarized.metric)
            for variant in (LegVariant.DISTANCE, LegVariant.TIME):
                if variant in variants:
                    choices.append((arc, worker, variant, variants[variant]))
    return choices


def request_profit(scalarized: ScalarizedPDGraph, requests: Sequence[Request]) -> float:
    """
    Uniform profit per served request: ten times a bound on any single
    route's cost, which visits at most 2|R| + 1 arcs.
    """
    costs = [
        arc.cost(leg, scalarized.metric)
        for arc in scalarized.arcs
        for h in arc.tau
        for leg in arc.variants(h, scalarized.metric).values()
    ]
    return 10.0 * (2 * len(requests) + 1) * max(max(costs, default=0.0), 1.0)


def _load_change(node: PDNode) -> int:
    if node.kind is NodeKind.PICKUP:
        return node.request.load
    if node.kind is NodeKind.DELIVERY:
        return -node.request.load
    return 0


def build_milp(
    scalarized: ScalarizedPDGraph,
    workers: Sequence[Worker],
    requests: Sequence[Request],
    sigma: Optional[float] = None,
) -> MilpModel:
    """
    Build the relaxed routing model over a scalarised PD graph

    Time variables hold service-completion times, so a request's window
    becomes [ep + ps, ld + ds] for both of its events. The arc propagation
    rows pin a node's time to its predecessor's plus the arc's travel time,
    allowing only the waiting its window forces.

    Args:
        scalarized (ScalarizedPDGraph): Arcs with scalar travel times
        workers (Sequence[Worker]): Workers of the instance
        requests (Sequence[Request]): Requests of the instance
        sigma (Optional[float]): Profit per served request, defaults to `request_profit`

    Returns:
        MilpModel: Variables, rows and objective
    """
    model = MilpModel()
    metric = scalarized.metric
    nodes = scalarized.nodes
    windows = {node.name: node_window(node) for node in nodes}

    choices = _arc_choices(scalarized, workers)
    by_arc: Dict[int, List[Tuple[str, Worker, ScalarLeg]]] = {}
    for arc, worker, variant, leg in choices:
        name = model.add_variable(
            Variable(arc_variable(arc, worker.id, variant, metric), 0.0, 1.0, binary=True)
        )
        model.objective[name] = arc.cost(leg, metric)
        by_arc.setdefault(arc.index, []).append((name, worker, leg))

    model.sigma = request_profit(scalarized, requests) if sigma is None else sigma
    eligible: Dict[str, List[Worker]] = {}
    for request in requests:
        eligible[request.id] = [
            w for w in workers if w.vehicle_type in request.vehicle_types
        ]
        for worker in eligible[request.id]:
            name = model.add_variable(
                Variable(assignment_variable(request.id, worker.id), 0.0, 1.0, binary=True)
            )
            model.objective[name] = -model.sigma

    model.q_max = float(max((w.capacity for w in workers), default=0))
    shifts = [w.end_time - w.start_time for w in workers]
    taus = [tau for arc in scalarized.arcs for tau in arc.tau.values()]
    taus += [
        leg.tau
        for arc in scalarized.arcs
        for legs in arc.pareto.values()
        for leg in legs.values()
    ]
    spread = 0.0
    if windows:
        spread = max(u for _, u in windows.values()) - min(lo for lo, _ in windows.values())
    model.t_max = max(max(shifts, default=0.0), spread + max(taus, default=0.0))

    for node in nodes:
        lower, upper = windows[node.name]
        model.add_variable(Variable(f'a_{lp_name(node.name)}', lower, upper))
        q_upper = model.q_max if node.is_service else 0.0
        model.add_variable(Variable(f'q_{lp_name(node.name)}', 0.0, q_upper))

    def arc_terms(node_name: str, outgoing: bool, worker: Worker) -> List[Tuple[str, float]]:
        terms = []
        for arc in scalarized.arcs:
            endpoint = arc.tail if outgoing else arc.head
            if endpoint.name != node_name:
                continue
            terms.extend(
                (name, 1.0) for name, w, _ in by_arc.get(arc.index, []) if w.id == worker.id
            )
        return terms

    for worker in workers:
        start = PDNode.shift_start(worker).name
        terms = arc_terms(start, True, worker)
        if terms:
            model.add_constraint(f'c1_{lp_name(start)}', terms, Sense.LE, 1.0)

    for request in requests:
        pickup = PDNode.pickup(request).name
        delivery = PDNode.delivery(request).name
        for worker in eligible[request.id]:
            assigned = (assignment_variable(request.id, worker.id), -1.0)
            suffix = f'{lp_name(request.id)}_w{lp_name(worker.id)}'
            for row, node_name, outgoing in (
                ('c2', pickup, True),
                ('c3', pickup, False),
                ('c4', delivery, True),
                ('c5', delivery, False),
            ):
                model.add_constraint(
                    f'{row}_r{suffix}',
                    arc_terms(node_name, outgoing, worker) + [assigned],
                    Sense.EQ,
                    0.0,
                )
        if eligible[request.id]:
            model.add_constraint(
                f'c6_r{lp_name(request.id)}',
                [(assignment_variable(request.id, w.id), 1.0) for w in eligible[request.id]],
                Sense.LE,
                1.0,
            )
        model.add_constraint(
            f'c8_r{lp_name(request.id)}',
            [(f'a_{lp_name(pickup)}', 1.0), (f'a_{lp_name(delivery)}', -1.0)],
            Sense.LE,
            0.0,
        )

    t_max, q_max = model.t_max, model.q_max
    for arc in scalarized.arcs:
        chosen = by_arc.get(arc.index, [])
        if not chosen:
            continue
        a_u, a_v = f'a_{lp_name(arc.tail.name)}', f'a_{lp_name(arc.head.name)}'
        q_u, q_v = f'q_{lp_name(arc.tail.name)}', f'q_{lp_name(arc.head.name)}'
        lower_tail = windows[arc.tail.name][0]
        lower_head = windows[arc.head.name][0]
        model.add_constraint(
            f'c9l_e{arc.index}',
            [(a_v, 1.0), (a_u, -1.0)] + [(name, -(t_max + leg.tau)) for name, _, leg in chosen],
            Sense.GE,
            -t_max,
        )
        model.add_constraint(
            f'c9u_e{arc.index}',
            [(a_v, 1.0), (a_u, -1.0)]
            + [
                (name, t_max - leg.tau - max(lower_head - lower_tail - leg.tau, 0.0))
                for name, _, leg in chosen
            ],
            Sense.LE,
            t_max,
        )
        change = _load_change(arc.head)
        model.add_constraint(
            f'c10l_e{arc.index}',
            [(q_v, 1.0), (q_u, -1.0)] + [(name, -(q_max + change)) for name, _, _ in chosen],
            Sense.GE,
            -q_max,
        )
        model.add_constraint(
            f'c10u_e{arc.index}',
            [(q_v, 1.0), (q_u, -1.0)] + [(name, q_max - change) for name, _, _ in chosen],
            Sense.LE,
            q_max,
        )
        for worker in workers:
            variants = [name for name, w, _ in chosen if w.id == worker.id]
            if len(variants) > 1:
                model.add_constraint(
                    f'c12_e{arc.index}_w{lp_name(worker.id)}',
                    [(name, 1.0) for name in variants],
                    Sense.LE,
                    1.0,
                )

    for request in requests:
        pickup = PDNode.pickup(request).name
        model.add_constraint(
            f'c11_{lp_name(pickup)}',
            [(f'q_{lp_name(pickup)}', 1.0)]
            + [
                (assignment_variable(request.id, w.id), -float(w.capacity))
                for w in eligible[request.id]
            ],
            Sense.LE,
            0.0,
        )

    logger.info(
        f'Built model with {len(model.variables)} variables and '
        f'{len(model.constraints)} constraints'
    )
    return model


def emit_model(model: MilpModel) -> str:
    """LP-format text of `model`."""
    return write_lp(model)


def append_cuts(model: MilpModel, cuts: Iterable[LinearConstraint]) -> MilpModel:
    """Model with the given no-good rows appended."""
    extended = replace(
        model,
        variables=dict(model.variables),
        constraints=list(model.constraints),
        objective=dict(model.objective),
    )
    extended.constraints.extend(cuts)
    return extended


def _node_index(scalarized: ScalarizedPDGraph) -> Dict[str, PDNode]:
    return {node.name: node for node in scalarized.nodes}


def _worker_of(scalarized: ScalarizedPDGraph, worker_id: str) -> Worker:
    for node in scalarized.nodes:
        if node.kind is NodeKind.SHIFT_START and node.owner == worker_id:
            return node.worker
    raise ConsistencyError(f'worker {worker_id} has no shift-start node')


def evaluate_sequence(
    scalarized: ScalarizedPDGraph,
    worker: Worker,
    sequence: Sequence[str],
    time_legs: FrozenSet[NodePair] = frozenset(),
) -> Tuple[bool, float, Dict[str, float]]:
    """
    Fold scalar times along a node sequence

    Each node completes at max(predecessor + arc travel time, window start);
    the sequence is feasible when every completion lies inside its window
    and every arc is present.

    Returns:
        Tuple[bool, float, Dict[str, float]]: Feasibility, cost and completion time per node
    """
    nodes = _node_index(scalarized)
    times = {sequence[0]: worker.start_time} if sequence else {}
    cost, feasible = 0.0, True
    for tail, head in zip(sequence, sequence[1:]):
        arc = scalarized.arc(tail, head)
        variants = arc.variants(worker.vehicle_type, scalarized.metric) if arc else {}
        variant = LegVariant.TIME if (tail, head) in time_legs else LegVariant.DISTANCE
        leg = variants.get(variant) or variants.get(LegVariant.TIME)
        if leg is None:
            return False, math.inf, times
        lower, upper = node_window(nodes[head])
        times[head] = max(times[tail] + leg.tau, lower)
        feasible = feasible and times[head] <= upper + Tolerance.TIME
        cost += arc.cost(leg, scalarized.metric)
    return feasible, cost, times


def solution_values(
    model: MilpModel,
    scalarized: ScalarizedPDGraph,
    solution: CandidateSolution,
) -> Dict[str, float]:
    """
    Variable assignment encoding a candidate solution, for substitution into
    the model's rows. Unvisited nodes sit at their window start with zero load.
    """
    nodes = _node_index(scalarized)
    values = {name: 0.0 for name in model.variables}
    for node in scalarized.nodes:
        values[f'a_{lp_name(node.name)}'] = node_window(node)[0]
        values[f'q_{lp_name(node.name)}'] = 0.0

    for worker_id, sequence in solution.routes.items():
        worker = _worker_of(scalarized, worker_id)
        time_legs = solution.time_legs.get(worker_id, frozenset())
        _, _, times = evaluate_sequence(scalarized, worker, sequence, time_legs)
        for name in subtour_variables(scalarized, worker_id, tuple(sequence), time_legs):
            values[name] = 1.0
        load = 0
        for name in sequence:
            node = nodes[name]
            load += _load_change(node)
            values[f'a_{lp_name(name)}'] = times.get(name, node_window(node)[0])
            values[f'q_{lp_name(name)}'] = float(load)
            if node.kind is NodeKind.PICKUP:
                values[assignment_variable(node.owner, worker_id)] = 1.0
    return values


def solve_exact_tiny(
    scalarized: ScalarizedPDGraph,
    workers: Sequence[Worker],
    requests: Sequence[Request],
    sigma: Optional[float] = None,
    cuts: Sequence[LinearConstraint] = (),
) -> OracleSolution:
    """
    Optimum of the relaxed model by exhaustive search

    Raises:
        OracleLimitError: Above six requests or three workers
    """
    profit = request_profit(scalarized, requests) if sigma is None else sigma
    return ExactOracle(scalarized, workers, requests, profit, cuts).solve()


def _violation(route: Route) -> Optional[int]:
    report = check_feasible(route)
    timing = [
        v.index
        for v in report.violations
        if v.kind in (ViolationKind.DEADLINE, ViolationKind.SHIFT_END)
    ]
    return min(timing, default=None)


def _cleared(route: Route, index: int) -> bool:
    node, label = route.nodes[index], route.labels[index]
    if node.kind is NodeKind.DELIVERY:
        deadline = node.request.latest_delivery
    else:
        deadline = route.worker.end_time
    return label.arrival <= deadline + Tolerance.TIME


def _no_good_cut(
    scalarized: ScalarizedPDGraph, worker: Worker, sequence: Sequence[str], number: int
) -> LinearConstraint:
    terms = []
    arcs = 0
    for pair in zip(sequence, sequence[1:]):
        arc = scalarized.arc(*pair)
        if arc is None:
            continue
        arcs += 1
        for variant in arc.variants(worker.vehicle_type, scalarized.metric):
            terms.append((arc_variable(arc, worker.id, variant, scalarized.metric), 1.0))
    return LinearConstraint(
        f'cut{number}_w{lp_name(worker.id)}', tuple(terms), Sense.LE, float(arcs - 1)
    )


def check_worker(
    scalarized: ScalarizedPDGraph,
    worker: Worker,
    sequence: Sequence[str],
    router: Router,
    metric: CostMetric,
    time_legs: FrozenSet[NodePair] = frozenset(),
) -> WorkerCheck:
    """
    Relabel one subtour under the time-dependent metric and repair it

    On a deadline or shift-end violation at position x, legs x-1 down to 0
    realised by a distance-optimal path are swapped, nearest first, to the
    time-optimal path until the violation clears. Later violations are
    handled the same way.
    """
    nodes = _node_index(scalarized)
    subtour = Subtour(worker, tuple(nodes[name] for name in sequence))
    route = realize_route(subtour, metric, router, frozenset(time_legs))
    check = WorkerCheck(worker.id, tuple(sequence), route, check_feasible(route))

    while True:
        x = _violation(route)
        if x is None:
            break
        for k in range(x - 1, -1, -1):
            pair = (route.nodes[k].name, route.nodes[k + 1].name)
            if pair in route.time_legs:
                continue
            leg = route.legs[k]
            faster = router.time_optimal_leg(
                worker.vehicle_type, leg.source, leg.target, leg.departure
            )
            if faster.path == leg.path:
                continue
            route = relabel_suffix(
                replace(route, time_legs=route.time_legs | {pair}), k + 1, router
            )
            check.swaps.append(pair)
            logger.debug(f'Worker {worker.id}: leg {pair[0]}->{pair[1]} swapped to time-optimal')
            if _cleared(route, x):
                break
        if not _cleared(route, x):
            check.status = RepairStatus.REJECTED
            break

    check.route = route
    check.violations = check_feasible(route)
    if check.status is not RepairStatus.REJECTED and check.swaps:
        check.status = RepairStatus.REPAIRED
    return check


def check_and_repair(
    solution: CandidateSolution,
    scalarized: ScalarizedPDGraph,
    router: Router,
    metric: Optional[CostMetric] = None,
    cut_offset: int = 0,
) -> SolutionCheckReport:
    """
    Re-check a scalar solution under the time-dependent metric

    Every serving subtour is relabelled with exact travel times and repaired
    by swapping legs to their time-optimal paths. A subtour whose violation
    survives every swap is rejected, and a no-good row forbidding its arcs
    is emitted.

    Args:
        solution (CandidateSolution): Node-name sequences per worker
        scalarized (ScalarizedPDGraph): The graph the solution was found on
        router (Router): Exact road queries
        metric (Optional[CostMetric]): Leg metric, defaults to the graph's objective
        cut_offset (int): First number used in cut names

    Returns:
        SolutionCheckReport: Per-worker outcome and the emitted cuts
    """
    metric = metric or scalarized.metric
    report = SolutionCheckReport()
    for worker_id in sorted(solution.routes):
        sequence = tuple(solution.routes[worker_id])
        if len(sequence) <= 2:
            continue
        worker = _worker_of(scalarized, worker_id)
        check = check_worker(
            scalarized,
            worker,
            sequence,
            router,
            metric,
            solution.time_legs.get(worker_id, frozenset()),
        )
        report.workers.append(check)
        if check.status is RepairStatus.REJECTED:
            cut = _no_good_cut(scalarized, worker, sequence, cut_offset + len(report.cuts))
            report.cuts.append(cut)
            logger.info(f'Rejected subtour of worker {worker_id}, emitted {cut.name}')
    return report


def solve_and_repair(
    scalarized: ScalarizedPDGraph,
    workers: Sequence[Worker],
    requests: Sequence[Request],
    router: Router,
    max_rounds: int = 10,
    sigma: Optional[float] = None,
    cuts: Sequence[LinearConstraint] = (),
) -> Tuple[OracleSolution, SolutionCheckReport, List[LinearConstraint]]:
    """
    Alternate exact solves and time-dependent checks, adding a cut per
    rejected subtour, until a solution survives or the rounds run out

    Returns:
        Tuple: The last solution, its check report and every cut in force,
            the given ones first
    """
    if max_rounds < 1:
        raise ConfigurationError('at least one solve round is needed')
    cuts = list(cuts)
    for round_number in range(1, max_rounds + 1):
        solution = solve_exact_tiny(scalarized, workers, requests, sigma, cuts)
        report = check_and_repair(solution.solution, scalarized, router, cut_offset=len(cuts))
        logger.info(f'Round {round_number}: {report.status.value}, {report.total_swaps} swaps')
        if report.status is not RepairStatus.REJECTED:
            return solution, report, cuts
        cuts.extend(report.cuts)
    return solution, report, cuts


def solution_from_routes(routes: Iterable[Route]) -> CandidateSolution:
    """Candidate encoding of realised routes; idle workers are left out."""
    sequences, time_legs = {}, {}
    for route in routes:
        if len(route.nodes) <= 2:
            continue
        sequences[route.worker.id] = tuple(node.name for node in route.nodes)
        time_legs[route.worker.id] = frozenset(route.time_legs)
    return CandidateSolution(sequences, time_legs)


def check_candidates(
    candidates: Sequence[CandidateSolution],
    scalarized: ScalarizedPDGraph,
    router: Router,
) -> Tuple[Optional[int], List[SolutionCheckReport]]:
    """
    Check and repair several candidates and pick the best survivor

    The best candidate serves the most requests, then has the lowest cost
    of its repaired routes under the graph's objective.

    Returns:
        Tuple[Optional[int], List[SolutionCheckReport]]: Index of the best
            time-dependent-feasible candidate (None if all are rejected) and
            every report
    """
    reports: List[SolutionCheckReport] = []
    for candidate in candidates:
        offset = sum(len(r.cuts) for r in reports)
        reports.append(check_and_repair(candidate, scalarized, router, cut_offset=offset))
    best, best_key = None, None
    for index, report in enumerate(reports):
        if report.status is RepairStatus.REJECTED:
            continue
        served = sum(len(w.route.subtour.request_ids) for w in report.workers)
        cost = sum(w.route.cost(scalarized.metric) for w in report.workers)
        key = (-served, cost)
        if best_key is None or key < best_key:
            best, best_key = index, key
    return best, reports


def candidate_from_schema(schema: CandidateSchema, scalarized: ScalarizedPDGraph) -> CandidateSolution:
    """
    Candidate of a file record whose subtours list service events only

    Raises:
        InstanceValidationError: If a subtour names an unknown worker or event
    """
    nodes = _node_index(scalarized)
    by_id = {n.owner: n.worker for n in scalarized.nodes if n.kind is NodeKind.SHIFT_START}
    routes, time_legs = {}, {}
    for subtour in schema.root:
        worker = by_id.get(subtour.worker)
        if worker is None:
            raise InstanceValidationError(f'candidate names unknown worker {subtour.worker}')
        unknown = [name for name in subtour.nodes if name not in nodes or not nodes[name].is_service]
        if unknown:
            raise InstanceValidationError(f'worker {subtour.worker}: unknown events {unknown}')
        sequence = (PDNode.shift_start(worker).name, *subtour.nodes, PDNode.shift_end(worker).name)
        errors = Subtour(worker, tuple(nodes[name] for name in sequence)).structural_errors()
        if errors:
            raise InstanceValidationError(f'worker {subtour.worker}: {"; ".join(errors)}')
        routes[subtour.worker] = sequence
        time_legs[subtour.worker] = frozenset(tuple(pair) for pair in subtour.time_legs)
    return CandidateSolution(routes, time_legs)


def candidate_to_schema(solution: CandidateSolution) -> CandidateSchema:
    return CandidateSchema(
        [
            SubtourSchema(
                worker=worker_id,
                nodes=list(sequence[1:-1]),
                time_legs=sorted(solution.time_legs.get(worker_id, frozenset())),
            )
            for worker_id, sequence in sorted(solution.routes.items())
        ]
    )
