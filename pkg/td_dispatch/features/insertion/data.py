import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple

from td_dispatch.core.exceptions import ConfigurationError
from td_dispatch.features.pd_core.data import CostMetric, Route, Subtour, Worker
from td_dispatch.features.pd_core.service import realize_route
from td_dispatch.features.td_metric.service import Router


class Norm(str, Enum):
    """Score norm nu: marginal cost (l1) or marginal squared cost (l2)"""

    L1 = 'l1'
    L2 = 'l2'

    @property
    def power(self) -> int:
        return 1 if self is Norm.L1 else 2


@dataclass(frozen=True)
class SchedulerConfig:
    """
    Knobs of the insertion scheduler

    Attributes:
        metric (CostMetric): kappa, the route cost
        norm (Norm): nu, the score norm
        wb_enabled (bool): Apply the workload balancer penalty
        wb_threshold (float): theta, multiple of the fleet average that counts as overloaded
        wb_penalty (float): mu, extra score factor for overloaded workers
        rr_enabled (bool): Run a request relocation sweep after each request
    """

    metric: CostMetric = CostMetric.TIME
    norm: Norm = Norm.L1
    wb_enabled: bool = False
    wb_threshold: float = 1.5
    wb_penalty: float = 2.0
    rr_enabled: bool = False

    def __post_init__(self) -> None:
        if self.wb_threshold < 1:
            raise ConfigurationError(f'wb threshold {self.wb_threshold} must be >= 1')
        if self.wb_penalty < 1:
            raise ConfigurationError(f'wb penalty {self.wb_penalty} must be >= 1')

    @property
    def label(self) -> str:
        heuristics = [name for name, on in (('wb', self.wb_enabled), ('rr', self.rr_enabled)) if on]
        suffix = f'+{"+".join(heuristics)}' if heuristics else ''
        return f'{self.metric.value}-{self.norm.value}{suffix}'


@dataclass(frozen=True)
class CheckIndicators:
    """
    Backward check-constraint indicators of a labelled route

    Attributes:
        ddl (Tuple[float, ...]): Upper bound on the arrival time at each node
        slack (Tuple[float, ...]): slack[k] bounds the delay tolerable at node
            k + 1, folded from ddl and the waiting times
        tolerable_delay (Tuple[float, ...]): Same bound with waiting times
            replaced by the delay each leg can absorb at its fastest, valid
            for any FIFO travel-time functions; used for pruning
    """

    ddl: Tuple[float, ...]
    slack: Tuple[float, ...]
    tolerable_delay: Tuple[float, ...]


class CandidateStatus(str, Enum):
    FEASIBLE = 'feasible'
    INFEASIBLE = 'infeasible'
    PRUNED_SLACK = 'pruned-slack'
    PRUNED_CAPACITY = 'pruned-capacity'
    ABANDONED = 'abandoned'

    @property
    def pruned(self) -> bool:
        return self in (CandidateStatus.PRUNED_SLACK, CandidateStatus.PRUNED_CAPACITY)


@dataclass(frozen=True)
class InsertionCandidate:
    """
    A (worker, i, j) insertion pair and its outcome

    `prunes_row` is set when the pair was rejected at the pickup position with
    i < j, which rejects every (i, m) with m > i as well.
    """

    worker_id: str
    i: int
    j: int
    status: CandidateStatus
    score: float = math.inf
    route: Optional[Route] = None
    prunes_row: bool = False
    ignored: FrozenSet[str] = frozenset()

    @property
    def feasible(self) -> bool:
        return self.status is CandidateStatus.FEASIBLE


@dataclass(frozen=True)
class AssignmentDecision:
    request_id: str
    worker_id: Optional[str] = None
    i: Optional[int] = None
    j: Optional[int] = None
    score: float = math.inf
    route: Optional[Route] = None
    contingency: bool = False
    ignored: FrozenSet[str] = frozenset()
    matched_forecast: Optional[str] = None

    @property
    def accepted(self) -> bool:
        return self.worker_id is not None


@dataclass(frozen=True)
class Relocation:
    request_id: str
    from_worker: str
    to_worker: str
    objective_before: float
    objective_after: float


@dataclass
class FleetState:
    """
    Routes of every worker plus the request bookkeeping of an online run

    Attributes:
        router (Router): Road queries shared by every route
        metric (CostMetric): Leg metric routes are realised under
        routes (Dict[str, Route]): Current route per worker id
        assignments (Dict[str, str]): Request id -> worker id
        rejected (List[str]): Requests no worker could take
        clock (float): Current simulation time
    """

    router: Router
    metric: CostMetric
    routes: Dict[str, Route] = field(default_factory=dict)
    assignments: Dict[str, str] = field(default_factory=dict)
    rejected: List[str] = field(default_factory=list)
    clock: float = 0.0

    @classmethod
    def create(
        cls, workers: Sequence[Worker], router: Router, metric: CostMetric
    ) -> 'FleetState':
        routes = {
            w.id: realize_route(Subtour.empty(w), metric, router)
            for w in sorted(workers, key=lambda w: w.id)
        }
        return cls(router, metric, routes)

    @property
    def workers(self) -> List[Worker]:
        return [self.routes[w].worker for w in sorted(self.routes)]

    def objective(self, metric: CostMetric, norm: Norm) -> float:
        return sum(route.cost(metric) ** norm.power for route in self.routes.values())

    def operational(self, t: float) -> List[Worker]:
        return [w for w in self.workers if w.is_operational(t)]

    def snapshot(self) -> Tuple[Dict[str, Route], Dict[str, str], List[str]]:
        return dict(self.routes), dict(self.assignments), list(self.rejected)

    def restore(self, snapshot: Tuple[Dict[str, Route], Dict[str, str], List[str]]) -> None:
        self.routes, self.assignments, self.rejected = (
            dict(snapshot[0]),
            dict(snapshot[1]),
            list(snapshot[2]),
        )
