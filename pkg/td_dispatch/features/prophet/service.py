import logging
import math
from dataclasses import replace
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple, Union

from td_dispatch.features.insertion.data import (
    AssignmentDecision,
    CandidateStatus,
    CheckIndicators,
    FleetState,
    InsertionCandidate,
    SchedulerConfig,
)
from td_dispatch.features.insertion.service import InsertionService
from td_dispatch.features.pd_core.data import (
    NodeKind,
    PDNode,
    Request,
    Route,
    delivery_name,
    pickup_name,
)
from td_dispatch.features.pd_core.service import (
    check_feasible,
    relabel_suffix,
    remove_requests,
)
from td_dispatch.features.prophet.data import (
    BindingStatus,
    ForecastBinding,
    ProphetConfig,
)
from td_dispatch.features.td_metric.service import Router
from td_dispatch.shared.utils.numeric import Tolerance

logger = logging.getLogger(__name__)


class ProphetService(InsertionService):
    """
    Insertion scheduler that pre-seeds routes with forecast requests

    Forecasts are inserted first, then lose their load and deadline. Real
    requests either verify a pending forecast in place or are inserted while
    unreliable forecast pickups inside the detour are ignored and dropped.

    Attributes:
        prophet (ProphetConfig): Matching window and probability threshold
        bindings (Dict[str, ForecastBinding]): Lifecycle per forecast id
    """

    def __init__(
        self, config: SchedulerConfig, prophet: Optional[ProphetConfig] = None
    ) -> None:
        super().__init__(config)
        self.prophet = prophet or ProphetConfig()
        self.bindings: Dict[str, ForecastBinding] = {}
        self._views: Dict[Tuple[str, FrozenSet[str]], Tuple[Route, CheckIndicators]] = {}

    def seed_forecasts(
        self, fleet: FleetState, forecasts: Sequence[Request]
    ) -> FleetState:
        """
        Insert the forecasts ahead of any real request, then deactivate them

        Seeding always runs with the workload balancer on. Afterwards every
        forecast carries no load and no deadline, and the delivery of each
        forecast below the probability threshold is removed.

        Args:
            fleet (FleetState): Fleet to seed, updated in place
            forecasts (Sequence[Request]): Virtual requests in seeding order

        Returns:
            FleetState: The seeded fleet
        """
        if not forecasts:
            return fleet

        seeder = InsertionService(replace(self.config, wb_enabled=True))
        clock = fleet.clock
        for forecast in forecasts:
            fleet.clock = forecast.earliest_pickup
            decision = seeder.evaluate(fleet, forecast, gate_time=clock)
            fleet.clock = clock
            binding = ForecastBinding(forecast.id)
            self.bindings[forecast.id] = binding
            if decision.accepted:
                fleet.routes[decision.worker_id] = decision.route
                binding.worker_id = decision.worker_id
            else:
                binding.status = BindingStatus.DROPPED
                logger.info(f'Forecast {forecast.id} could not be seeded')

        for worker_id, route in list(fleet.routes.items()):
            fleet.routes[worker_id] = self._deactivate(route, fleet.router)
        seeded = sum(b.pending for b in self.bindings.values())
        logger.info(f'Seeded {seeded} of {len(forecasts)} forecasts')
        return fleet

    def _deactivate(self, route: Route, router: Router) -> Route:
        nodes = route.subtour.nodes
        changed: List[int] = []
        kept: List[PDNode] = []
        for k, node in enumerate(nodes):
            request = node.request
            if request is None or not request.is_virtual:
                kept.append(node)
                continue
            if (
                node.kind is NodeKind.DELIVERY
                and request.probability < self.prophet.probability_threshold
            ):
                changed.append(k)
                continue
            kept.append(node.with_request(request.deactivated()))
            changed.append(k)
        if not changed:
            return route
        subtour = replace(route.subtour, nodes=tuple(kept))
        return relabel_suffix(route, min(changed), router, subtour)

    def _unreliable(self, node: PDNode) -> bool:
        request = node.request
        return (
            node.kind is NodeKind.PICKUP
            and request is not None
            and request.is_virtual
            and request.probability < self.prophet.probability_threshold
            and node.owner in self.bindings
            and self.bindings[node.owner].pending
        )

    def best_insertion(
        self,
        fleet: FleetState,
        request: Request,
        gate_time: Optional[float] = None,
        contingency: bool = False,
    ) -> AssignmentDecision:
        self._views.clear()
        return super().best_insertion(fleet, request, gate_time, contingency)

    def _view(
        self, route: Route, ignored: FrozenSet[str], router: Router
    ) -> Tuple[Route, CheckIndicators]:
        key = (route.worker.id, ignored)
        if key not in self._views:
            view = remove_requests(route, ignored, router)
            self._views[key] = (view, self.compute_indicators(view, router))
        return self._views[key]

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
        """
        Evaluate (i, j) as if unreliable forecast pickups between positions
        i and j were absent; the score stays relative to the full route
        """
        nodes = route.nodes
        ignored = frozenset(
            nodes[k].owner for k in range(i + 1, j + 1) if self._unreliable(nodes[k])
        )
        if not ignored:
            candidate = self.try_insert(
                route, indicators, request, i, j, router, incumbent, multiplier, contingency
            )
            if (
                candidate.prunes_row
                and candidate.status is CandidateStatus.PRUNED_SLACK
                and any(self._unreliable(n) for n in nodes[i + 1 :])
            ):
                candidate = replace(candidate, prunes_row=False)
            return candidate

        view, view_indicators = self._view(route, ignored, router)
        power = self.config.norm.power
        offset = (
            view.cost(self.config.metric) ** power - route.cost(self.config.metric) ** power
        ) * multiplier
        candidate = self.try_insert(
            view,
            view_indicators,
            request,
            i,
            j - len(ignored),
            router,
            incumbent - offset,
            multiplier,
            contingency,
        )
        return replace(
            candidate,
            i=i,
            j=j,
            score=candidate.score + offset,
            prunes_row=candidate.status is CandidateStatus.PRUNED_CAPACITY,
            ignored=ignored,
        )

    def commit(self, fleet: FleetState, decision: AssignmentDecision) -> None:
        super().commit(fleet, decision)
        for virtual_id in sorted(decision.ignored):
            self.bindings[virtual_id].status = BindingStatus.DROPPED
            logger.debug(f'Forecast {virtual_id} dropped by request {decision.request_id}')

    def handle_real_request(
        self, fleet: FleetState, request: Request
    ) -> AssignmentDecision:
        """
        Assign a real request, shortcutting the unreliable forecasts its
        chosen detour skips over

        Args:
            fleet (FleetState): Current routes, updated in place
            request (Request): The released real request

        Returns:
            AssignmentDecision: The chosen insertion, or a rejection
        """
        return self.assign_request(fleet, request)

    def match_or_expire(
        self, fleet: FleetState, event: Union[Request, float]
    ) -> Optional[AssignmentDecision]:
        """
        Advance the forecast lifecycle to a clock value or a newly released request

        Pending forecasts whose earliest pickup plus the matching window lies
        before the clock are shortcut out of their routes. A request then binds
        the closest-in-time pending forecast at its pickup vertex, taking over
        its positions.

        Args:
            fleet (FleetState): Current routes, updated in place
            event (Union[Request, float]): The released request, or a clock value

        Returns:
            Optional[AssignmentDecision]: The binding, when the request matched
        """
        now = event.release_time if isinstance(event, Request) else float(event)
        fleet.clock = max(fleet.clock, now)
        self.expire(fleet, now)
        if isinstance(event, Request):
            return self.match(fleet, event)
        return None

    def expire(self, fleet: FleetState, now: float) -> List[str]:
        expired = [
            b
            for b in self.bindings.values()
            if b.pending
            and self._forecast(fleet, b) is not None
            and self._forecast(fleet, b).earliest_pickup + self.prophet.match_window
            < now
        ]
        for binding in expired:
            route = fleet.routes[binding.worker_id]
            fleet.routes[binding.worker_id] = remove_requests(
                route, [binding.virtual_id], fleet.router
            )
            binding.status = BindingStatus.EXPIRED
            logger.debug(f'Forecast {binding.virtual_id} expired at {now:.0f}')
        return [b.virtual_id for b in expired]

    def _forecast(self, fleet: FleetState, binding: ForecastBinding) -> Optional[Request]:
        if binding.worker_id is None:
            return None
        route = fleet.routes[binding.worker_id]
        k = route.subtour.index_of(pickup_name(binding.virtual_id))
        return None if k is None else route.nodes[k].request

    def match(self, fleet: FleetState, request: Request) -> Optional[AssignmentDecision]:
        """
        Bind a real request to a pending forecast at the same pickup vertex

        Returns:
            Optional[AssignmentDecision]: The binding, or None when no forecast
            matches or binding would leave the route infeasible
        """
        matches = []
        for binding in self.bindings.values():
            forecast = self._forecast(fleet, binding) if binding.pending else None
            if forecast is None or forecast.pickup_vertex != request.pickup_vertex:
                continue
            gap = abs(forecast.earliest_pickup - request.earliest_pickup)
            worker = fleet.routes[binding.worker_id].worker
            if gap <= self.prophet.match_window and worker.vehicle_type in request.vehicle_types:
                matches.append((gap, binding.virtual_id, binding))

        for _, _, binding in sorted(matches, key=lambda m: (m[0], m[1])):
            route = self._bound_route(fleet, binding, request)
            if route is None:
                continue
            old = fleet.routes[binding.worker_id]
            binding.bind(request.id)
            fleet.routes[binding.worker_id] = route
            fleet.assignments[request.id] = binding.worker_id
            power = self.config.norm.power
            metric = self.config.metric
            i = route.subtour.index_of(pickup_name(request.id)) - 1
            j = route.subtour.index_of(delivery_name(request.id)) - 2
            logger.debug(f'Request {request.id} verified forecast {binding.virtual_id}')
            return AssignmentDecision(
                request.id,
                binding.worker_id,
                i,
                j,
                route.cost(metric) ** power - old.cost(metric) ** power,
                route,
                matched_forecast=binding.virtual_id,
            )
        return None

    def _bound_route(
        self, fleet: FleetState, binding: ForecastBinding, request: Request
    ) -> Optional[Route]:
        route = fleet.routes[binding.worker_id]
        p = route.subtour.index_of(pickup_name(binding.virtual_id))
        label = route.labels[p]
        if max(label.arrival, route.nodes[p].request.earliest_pickup) <= fleet.clock:
            return None

        subtour = route.subtour.replace_node(p, PDNode.pickup(request))
        d = subtour.index_of(delivery_name(binding.virtual_id))
        if d is not None:
            subtour = subtour.replace_node(d, PDNode.delivery(request))
            candidates = [relabel_suffix(route, p, fleet.router, subtour)]
        else:
            candidates = []
            for j in range(p, len(subtour.nodes) - 1):
                nodes = subtour.nodes
                placed = replace(
                    subtour,
                    nodes=nodes[: j + 1] + (PDNode.delivery(request),) + nodes[j + 1 :],
                )
                candidates.append(relabel_suffix(route, p, fleet.router, placed))

        best = None
        metric = self.config.metric
        for candidate in candidates:
            if not check_feasible(candidate).feasible:
                continue
            if best is None or candidate.cost(metric) < best.cost(metric) - Tolerance.SCORE:
                best = candidate
        return best
