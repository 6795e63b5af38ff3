import itertools
import logging
from dataclasses import dataclass
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple

from td_dispatch.core.exceptions import OracleLimitError
from td_dispatch.features.milp.data import (
    CandidateSolution,
    LegVariant,
    LinearConstraint,
    NodePair,
    OracleSolution,
    ScalarizedPDGraph,
    node_window,
    subtour_variables,
)
from td_dispatch.features.pd_core.data import (
    CostMetric,
    NodeKind,
    PDNode,
    Request,
    Worker,
)
from td_dispatch.shared.utils.numeric import Tolerance

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class _Label:
    time: float
    cost: float
    sequence: Tuple[str, ...]
    time_legs: FrozenSet[NodePair]


@dataclass(frozen=True)
class SubtourPlan:
    cost: float
    sequence: Tuple[str, ...]
    time_legs: FrozenSet[NodePair]


class ExactOracle:
    """
    Exhaustive optimum of the relaxed model on tiny instances

    Every split of the requests among workers (or left unserved) is tried;
    for each worker and request set, a dynamic program over
    (last event, picked, delivered) states with Pareto labels on
    (time, cost) finds the cheapest scalar-feasible subtour.
    """

    MAX_REQUESTS = 6
    MAX_WORKERS = 3

    def __init__(
        self,
        scalarized: ScalarizedPDGraph,
        workers: Sequence[Worker],
        requests: Sequence[Request],
        sigma: float,
        cuts: Sequence[LinearConstraint] = (),
    ) -> None:
        if len(requests) > self.MAX_REQUESTS or len(workers) > self.MAX_WORKERS:
            raise OracleLimitError(
                f'exact oracle handles at most {self.MAX_REQUESTS} requests and '
                f'{self.MAX_WORKERS} workers, got {len(requests)} and {len(workers)}'
            )
        self.scalarized = scalarized
        self.metric = scalarized.metric
        self.workers = list(workers)
        self.requests = list(requests)
        self.sigma = sigma
        self.cuts = list(cuts)
        self._plans: Dict[Tuple[str, FrozenSet[str]], Optional[SubtourPlan]] = {}

    def solve(self) -> OracleSolution:
        choices = []
        for request in self.requests:
            eligible = [
                w.id for w in self.workers if w.vehicle_type in request.vehicle_types
            ]
            choices.append([None, *eligible])

        best: Optional[OracleSolution] = None
        for split in itertools.product(*choices):
            groups: Dict[str, List[str]] = {w.id: [] for w in self.workers}
            for request, worker_id in zip(self.requests, split):
                if worker_id is not None:
                    groups[worker_id].append(request.id)

            routes, time_legs, cost = {}, {}, 0.0
            for worker in self.workers:
                plan = self.best_subtour(worker, frozenset(groups[worker.id]))
                if plan is None:
                    break
                cost += plan.cost
                if groups[worker.id]:
                    routes[worker.id] = plan.sequence
                    time_legs[worker.id] = plan.time_legs
            else:
                served = sum(worker_id is not None for worker_id in split)
                objective = cost - self.sigma * served
                if best is None or objective < best.objective - Tolerance.SCORE:
                    best = OracleSolution(
                        CandidateSolution(routes, time_legs), objective, cost, served
                    )
        logger.debug(
            f'Oracle optimum serves {best.served} requests at cost {best.cost:.3f}'
        )
        return best

    def _cut_allows(self, worker: Worker, plan: SubtourPlan) -> bool:
        chosen = subtour_variables(
            self.scalarized, worker.id, plan.sequence, plan.time_legs
        )
        values = {name: 1.0 for name in chosen}
        return all(
            cut.activity(values) <= cut.rhs + Tolerance.SCORE
            for cut in self.cuts
        )

    def best_subtour(
        self, worker: Worker, request_ids: FrozenSet[str]
    ) -> Optional[SubtourPlan]:
        """Cheapest scalar-feasible ordering of `request_ids` for `worker`, None if none exists."""
        key = (worker.id, request_ids)
        if key not in self._plans:
            self._plans[key] = self._search(worker, request_ids)
        return self._plans[key]

    def _search(self, worker: Worker, request_ids: FrozenSet[str]) -> Optional[SubtourPlan]:
        start, end = PDNode.shift_start(worker), PDNode.shift_end(worker)
        if not request_ids:
            return SubtourPlan(0.0, (start.name, end.name), frozenset())

        by_id = {r.id: r for r in self.requests}
        loads = {r: by_id[r].load for r in request_ids}
        nodes = {n.name: n for n in self.scalarized.nodes}
        prune = not self.cuts

        layer: Dict[Tuple[str, FrozenSet[str], FrozenSet[str]], List[_Label]] = {
            (start.name, frozenset(), frozenset()): [
                _Label(worker.start_time, 0.0, (start.name,), frozenset())
            ]
        }
        finals: List[_Label] = []
        for _ in range(2 * len(request_ids)):
            following: Dict[Tuple[str, FrozenSet[str], FrozenSet[str]], List[_Label]] = {}
            for (last, picked, delivered), labels in layer.items():
                onboard = picked - delivered
                load = sum(loads[r] for r in onboard)
                steps = [PDNode.pickup(by_id[r]) for r in sorted(request_ids - picked)]
                steps += [PDNode.delivery(by_id[r]) for r in sorted(onboard)]
                for step in steps:
                    step = nodes[step.name]
                    if step.kind is NodeKind.PICKUP:
                        if load + loads[step.owner] > worker.capacity:
                            continue
                        state = (step.name, picked | {step.owner}, delivered)
                    else:
                        state = (step.name, picked, delivered | {step.owner})
                    for label in labels:
                        for extended in self._extend(worker, label, last, step):
                            following.setdefault(state, []).append(extended)
            layer = {
                state: self._pareto(labels) if prune else labels
                for state, labels in following.items()
            }

        for (last, _, _), labels in layer.items():
            for label in labels:
                finals.extend(self._extend(worker, label, last, end))

        best: Optional[SubtourPlan] = None
        for label in sorted(finals, key=lambda lb: (lb.cost, lb.sequence)):
            plan = SubtourPlan(label.cost, label.sequence, label.time_legs)
            if self._cut_allows(worker, plan):
                best = plan
                break
        return best

    def _extend(self, worker: Worker, label: _Label, tail: str, head: PDNode) -> List[_Label]:
        arc = self.scalarized.arc(tail, head.name)
        if arc is None:
            return []
        lower, upper = node_window(head)
        extended = []
        for variant, leg in arc.variants(worker.vehicle_type, self.metric).items():
            time = max(label.time + leg.tau, lower)
            if time > upper + Tolerance.TIME:
                continue
            time_legs = label.time_legs
            if variant is LegVariant.TIME and self.metric is CostMetric.DISTANCE:
                time_legs = time_legs | {arc.pair}
            extended.append(
                _Label(
                    time,
                    label.cost + arc.cost(leg, self.metric),
                    label.sequence + (head.name,),
                    time_legs,
                )
            )
        return extended

    @staticmethod
    def _pareto(labels: List[_Label]) -> List[_Label]:
        kept: List[_Label] = []
        for label in sorted(labels, key=lambda lb: (lb.time, lb.cost, lb.sequence)):
            if all(label.cost < other.cost - Tolerance.SCORE for other in kept):
                kept.append(label)
        return kept
