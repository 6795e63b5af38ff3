import logging
import math
from itertools import accumulate
from typing import FrozenSet, List, Optional, Tuple

import numpy as np

from td_dispatch.core.exceptions import (
    DisconnectedInstanceError,
    IndicatorUndefinedError,
)
from td_dispatch.features.insertion.data import (
    AssignmentDecision,
    CandidateStatus,
    CheckIndicators,
    FleetState,
    InsertionCandidate,
    Relocation,
    SchedulerConfig,
)
from td_dispatch.features.pd_core.data import (
    CostMetric,
    NodeKind,
    PDNode,
    Request,
    Route,
    Subtour,
    Worker,
    pickup_name,
)
from td_dispatch.features.pd_core.service import (
    check_feasible,
    draft_route,
    extend_labels,
    remove_requests,
)
from td_dispatch.features.td_metric.data import Leg
from td_dispatch.features.td_metric.service import Router
from td_dispatch.shared.utils.numeric import Tolerance

logger = logging.getLogger(__name__)


def _service_time(node: PDNode) -> float:
    if node.kind is NodeKind.PICKUP:
        return node.request.pickup_service
    if node.kind is NodeKind.DELIVERY:
        return node.request.delivery_service
    return 0.0


def _leg_cost(leg: Leg, metric: CostMetric) -> float:
    return leg.travel_time if metric is CostMetric.TIME else leg.length


def detour_pairs(route: Route, request: Request, i: int, j: int) -> FrozenSet[Tuple[str, str]]:
    """Node-name pairs of the legs a (i, j) insertion of request creates."""
    nodes = route.nodes
    p, d = PDNode.pickup(request).name, PDNode.delivery(request).name
    if i == j:
        return frozenset(
            {(nodes[i].name, p), (p, d), (d, nodes[i + 1].name)}
        )
    return frozenset(
        {
            (nodes[i].name, p),
            (p, nodes[i + 1].name),
            (nodes[j].name, d),
            (d, nodes[j + 1].name),
        }
    )


def insert_request(route: Route, request: Request, i: int, j: int) -> Subtour:
    """
    Subtour of `route` with request inserted at (i, j)

    A real pickup placed right before the shift end is held until the
    request is released; the worker waits at node i until then.
    """
    subtour = route.subtour.insert(request, i, j)
    if route.nodes[i + 1].is_service or request.is_virtual:
        return subtour
    return subtour.replace_node(i + 1, subtour.nodes[i + 1].held_until(request.release_time))


class InsertionService:
    """
    Online time-dependent insertion with pruning, workload balancing and
    request relocation

    Attributes:
        config (SchedulerConfig): Metric, norm and heuristic switches
        suffix_relabels (int): Candidates that passed pruning and were relabelled
    """

    def __init__(self, config: SchedulerConfig) -> None:
        self.config = config
        self.suffix_relabels = 0
        logger.debug(f'Initialized {self.__class__.__name__} ({config.label})')

    def compute_indicators(self, route: Route, router: Router) -> CheckIndicators:
        """
        Backward dynamic program over the route for the ddl and slack indicators

        Args:
            route (Route): A labelled, feasible route
            router (Router): Supplies travel-time lower bounds between vertices

        Returns:
            CheckIndicators: ddl, slack and tolerable delay per node

        Raises:
            IndicatorUndefinedError: If the route is infeasible
        """
        report = check_feasible(route)
        if not report.feasible:
            raise IndicatorUndefinedError(
                f'route of worker {route.worker.id} is infeasible: '
                f'{report.violations[0].detail}'
            )

        nodes, labels = route.nodes, route.labels
        n = len(nodes)
        terms = [
            (labels[k + 1].arrival - labels[k].departure)
            + _service_time(nodes[k])
            - labels[k].waiting
            for k in range(n - 1)
        ]
        prefix = [0.0, *accumulate(terms)]
        delivery_at = {
            node.owner: k for k, node in enumerate(nodes) if node.kind is NodeKind.DELIVERY
        }

        ddl = [math.inf] * n
        hard_ddl = [math.inf] * n
        for k, node in enumerate(nodes):
            if node.kind is NodeKind.SHIFT_END:
                ddl[k] = hard_ddl[k] = route.worker.end_time
            elif node.kind is NodeKind.DELIVERY:
                ddl[k] = hard_ddl[k] = node.request.latest_delivery
            elif node.kind is NodeKind.PICKUP and node.owner in delivery_at:
                j = delivery_at[node.owner]
                ddl[k] = node.request.latest_delivery - (prefix[j] - prefix[k])

        slack = [math.inf] * n
        tolerable = [math.inf] * n
        h = route.worker.vehicle_type
        for k in range(n - 2, -1, -1):
            m = k + 1
            slack[k] = min(ddl[m] - labels[m].arrival, slack[m] + labels[m].waiting)
            absorbed = math.inf
            if m + 1 < n:
                bound = router.travel_time_lower_bound(h, nodes[m].vertex, nodes[m + 1].vertex)
                absorbed = max(
                    labels[m + 1].arrival - labels[m].arrival - _service_time(nodes[m]) - bound,
                    0.0,
                )
            tolerable[k] = min(hard_ddl[m] - labels[m].arrival, tolerable[m] + absorbed)
        return CheckIndicators(tuple(ddl), tuple(slack), tuple(tolerable))

    def try_insert(
        self,
        route: Route,
        indicators: CheckIndicators,
        request: Request,
        i: int,
        j: int,
        router: Router,
        incumbent: float = math.inf,
        multiplier: float = 1.0,
        contingency: bool = False,
    ) -> InsertionCandidate:
        """
        Evaluate inserting the pickup after position i and the delivery after position j

        Pairs whose capacity or detour delay already rules them out are
        rejected before the suffix is relabelled. Evaluation stops early once
        the (multiplied) partial score exceeds `incumbent`.

        Args:
            route (Route): Current labelled route of the worker
            indicators (CheckIndicators): Indicators of `route`
            request (Request): Request to insert
            i (int): Pickup goes right after node i
            j (int): Delivery goes right after node j, i <= j
            router (Router): Road queries
            incumbent (float): Best adjusted score found so far
            multiplier (float): Workload balancer factor
            contingency (bool): Realise the detour legs time-optimally

        Returns:
            InsertionCandidate: Outcome, with the new route when feasible
        """
        worker_id = route.worker.id
        labels = route.labels
        capacity = route.worker.capacity

        if labels[i].load + request.load > capacity:
            return InsertionCandidate(
                worker_id, i, j, CandidateStatus.PRUNED_CAPACITY, prunes_row=True
            )
        for k in range(i + 1, j + 1):
            if labels[k].load + request.load > capacity:
                return InsertionCandidate(
                    worker_id, i, j, CandidateStatus.PRUNED_CAPACITY, prunes_row=True
                )

        metric = self.config.metric
        power = self.config.norm.power
        subtour = insert_request(route, request, i, j)
        time_legs = route.time_legs
        if contingency:
            time_legs = time_legs | detour_pairs(route, request, i, j)
        draft = draft_route(subtour, route.metric, time_legs)

        old = route.cost(metric) ** power
        partial = sum(_leg_cost(leg, metric) for leg in route.legs[:i])
        checkpoint = i + 2 if i < j else i + 3
        new_labels = list(labels[: i + 1])
        new_legs = list(route.legs[:i])
        try:
            for k, leg, label in extend_labels(subtour, router, draft, i + 1, labels):
                new_legs.append(leg)
                new_labels.append(label)
                partial += _leg_cost(leg, metric)
                if k == checkpoint:
                    delay = label.arrival - labels[i + 1].arrival
                    if delay > indicators.tolerable_delay[i] + Tolerance.TIME:
                        return InsertionCandidate(
                            worker_id,
                            i,
                            j,
                            CandidateStatus.PRUNED_SLACK,
                            prunes_row=i < j,
                        )
                    self.suffix_relabels += 1
                if (partial**power - old) * multiplier > incumbent + Tolerance.SCORE:
                    return InsertionCandidate(worker_id, i, j, CandidateStatus.ABANDONED)
        except DisconnectedInstanceError:
            return InsertionCandidate(worker_id, i, j, CandidateStatus.INFEASIBLE)

        candidate = Route(
            subtour, tuple(new_labels), tuple(new_legs), route.metric, draft.time_legs
        )
        if not check_feasible(candidate).feasible:
            return InsertionCandidate(worker_id, i, j, CandidateStatus.INFEASIBLE)
        score = (candidate.cost(metric) ** power - old) * multiplier
        return InsertionCandidate(
            worker_id, i, j, CandidateStatus.FEASIBLE, score=score, route=candidate
        )

    def evaluate_pair(
        self,
        route: Route,
        indicators: CheckIndicators,
        request: Request,
        i: int,
        j: int,
        router: Router,
        incumbent: float = math.inf,
        multiplier: float = 1.0,
        contingency: bool = False,
    ) -> InsertionCandidate:
        """Candidate evaluation used by the search; subclasses may evaluate on a route view."""
        return self.try_insert(
            route, indicators, request, i, j, router, incumbent, multiplier, contingency
        )

    def wb_multiplier(self, worker: Worker, fleet: FleetState) -> float:
        """Penalty factor of a worker whose route length exceeds theta times the fleet average."""
        operational = fleet.operational(fleet.clock)
        if not operational:
            return 1.0
        average = float(np.mean([fleet.routes[w.id].length for w in operational]))
        overloaded = fleet.routes[worker.id].length > self.config.wb_threshold * average
        return 1.0 + self.config.wb_penalty * overloaded

    def apply_wb(self, raw_score: float, worker: Worker, fleet: FleetState) -> float:
        """
        Scale a raw insertion score by the workload balancer factor

        The workload test always compares total lengths, whatever metric and
        norm the scores use.
        """
        return self.wb_multiplier(worker, fleet) * raw_score

    def best_insertion(
        self,
        fleet: FleetState,
        request: Request,
        gate_time: Optional[float] = None,
        contingency: bool = False,
    ) -> AssignmentDecision:
        """
        Minimum-score feasible (worker, i, j) over every eligible worker,
        visiting workers by id and positions lexicographically; a later
        candidate wins only when strictly better
        """
        gate = request.release_time if gate_time is None else gate_time
        best = AssignmentDecision(request.id)
        for worker in fleet.workers:
            if worker.vehicle_type not in request.vehicle_types:
                continue
            route = fleet.routes[worker.id]
            nodes, labels = route.nodes, route.labels
            multiplier = self.wb_multiplier(worker, fleet) if self.config.wb_enabled else 1.0
            indicators = self.compute_indicators(route, fleet.router)
            last = len(nodes) - 2
            for i in range(last + 1):
                if nodes[i + 1].is_service and labels[i + 1].departure < gate - Tolerance.TIME:
                    continue
                for j in range(i, last + 1):
                    candidate = self.evaluate_pair(
                        route,
                        indicators,
                        request,
                        i,
                        j,
                        fleet.router,
                        incumbent=best.score,
                        multiplier=multiplier,
                        contingency=contingency,
                    )
                    if candidate.feasible and candidate.score < best.score - Tolerance.SCORE:
                        best = AssignmentDecision(
                            request.id,
                            worker.id,
                            i,
                            j,
                            candidate.score,
                            candidate.route,
                            contingency,
                            candidate.ignored,
                        )
                    if candidate.prunes_row:
                        break
        return best

    def evaluate(
        self, fleet: FleetState, request: Request, gate_time: Optional[float] = None
    ) -> AssignmentDecision:
        """Best insertion, falling back to time-optimal detour legs under the distance metric."""
        decision = self.best_insertion(fleet, request, gate_time)
        if not decision.accepted and self.config.metric is CostMetric.DISTANCE:
            decision = self.best_insertion(fleet, request, gate_time, contingency=True)
            if decision.accepted:
                logger.info(
                    f'Request {request.id} accepted with time-optimal detour legs on worker {decision.worker_id}'
                )
        return decision

    def commit(self, fleet: FleetState, decision: AssignmentDecision) -> None:
        if decision.accepted:
            fleet.routes[decision.worker_id] = decision.route
            fleet.assignments[decision.request_id] = decision.worker_id
        elif decision.request_id not in fleet.rejected:
            fleet.rejected.append(decision.request_id)

    def assign_request(self, fleet: FleetState, request: Request) -> AssignmentDecision:
        """
        Assign a released request to the worker and positions of minimum score

        Args:
            fleet (FleetState): Current routes, updated in place
            request (Request): The new request

        Returns:
            AssignmentDecision: The chosen insertion, or a rejection
        """
        decision = self.evaluate(fleet, request)
        self.commit(fleet, decision)
        if decision.accepted:
            logger.debug(
                f'Request {request.id} -> worker {decision.worker_id} at ({decision.i}, {decision.j}), score {decision.score:.3f}'
            )
        else:
            logger.info(f'Request {request.id} rejected: no feasible insertion')
        return decision

    def is_picked_up(self, route: Route, request_id: str, now: float) -> bool:
        k = route.subtour.index_of(pickup_name(request_id))
        if k is None:
            return False
        label = route.labels[k]
        return max(label.arrival, route.nodes[k].request.earliest_pickup) <= now

    def relocate_requests(self, fleet: FleetState) -> List[Relocation]:
        """
        One sweep of request relocation

        Every real request that is not yet picked up is taken out of its
        route and re-inserted wherever scores best; the move is kept only
        when the fleet objective drops by more than the improvement tolerance.

        Args:
            fleet (FleetState): Current routes, updated in place

        Returns:
            List[Relocation]: Moves that were kept
        """
        now = fleet.clock
        metric, norm = self.config.metric, self.config.norm
        pending = [
            (worker.id, request_id)
            for worker in fleet.workers
            for request_id in fleet.routes[worker.id].subtour.request_ids
            if fleet.assignments.get(request_id) == worker.id
        ]

        moves: List[Relocation] = []
        for worker_id, request_id in pending:
            if fleet.assignments.get(request_id) != worker_id:
                continue
            route = fleet.routes[worker_id]
            k = route.subtour.index_of(pickup_name(request_id))
            if k is None:
                continue
            request = route.nodes[k].request
            if request.is_virtual or self.is_picked_up(route, request_id, now):
                continue

            before = fleet.objective(metric, norm)
            snapshot = fleet.snapshot()
            fleet.routes[worker_id] = remove_requests(route, [request_id], fleet.router)
            decision = self.evaluate(fleet, request, max(request.release_time, now))
            if decision.accepted:
                trial = dict(fleet.routes)
                trial[decision.worker_id] = decision.route
                after = sum(r.cost(metric) ** norm.power for r in trial.values())
                if after < before - Tolerance.IMPROVEMENT:
                    self.commit(fleet, decision)
                    moves.append(
                        Relocation(request_id, worker_id, decision.worker_id, before, after)
                    )
                    logger.debug(
                        f'Relocated request {request_id} from {worker_id} to {decision.worker_id} ({before:.3f} -> {after:.3f})'
                    )
                    continue
            fleet.restore(snapshot)
        return moves
