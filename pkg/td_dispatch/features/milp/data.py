import math
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, FrozenSet, List, Mapping, Optional, Tuple

from td_dispatch.features.pd_core.data import (
    CostMetric,
    FeasibilityReport,
    NodeKind,
    PDNode,
    Route,
)

NodePair = Tuple[str, str]

_LP_ILLEGAL = re.compile(r'[^A-Za-z0-9_.]')


def lp_name(text: str) -> str:
    """Identifier safe for LP files (letters, digits, underscore, dot)."""
    return _LP_ILLEGAL.sub('_', str(text))


def node_window(node: PDNode) -> Tuple[float, float]:
    """
    Bounds on the scalar time variable of a node, read as the time the
    node's service completes. Both events of a request share the window
    [ep + ps, ld + ds].
    """
    if node.kind in (NodeKind.SHIFT_START, NodeKind.SHIFT_END):
        return node.worker.start_time, node.worker.end_time
    request = node.request
    return (
        request.earliest_pickup + request.pickup_service,
        request.latest_delivery + request.delivery_service,
    )


class LegVariant(str, Enum):
    DISTANCE = 'distance'
    TIME = 'time'


@dataclass(frozen=True)
class ScalarLeg:
    """Scalar realisation of a PD arc: length and service-inclusive travel time"""

    length: float
    tau: float


@dataclass(frozen=True)
class ScalarArc:
    """
    A PD arc with its scalar travel times

    Attributes:
        index (int): Arc id used in variable names
        tail (PDNode): Arc tail
        head (PDNode): Arc head
        length (float): Static shortest distance between the endpoints
        tau (Mapping[str, float]): Service-inclusive scalar travel time per vehicle type
        pareto (Mapping[str, Dict[LegVariant, ScalarLeg]]): Distance- and
            time-optimal legs per vehicle type, present for distance objectives
    """

    index: int
    tail: PDNode
    head: PDNode
    length: float
    tau: Mapping[str, float]
    pareto: Mapping[str, Mapping[LegVariant, ScalarLeg]] = field(default_factory=dict)

    @property
    def pair(self) -> NodePair:
        return (self.tail.name, self.head.name)

    def service_at_head(self) -> float:
        if self.head.kind is NodeKind.PICKUP:
            return self.head.request.pickup_service
        if self.head.kind is NodeKind.DELIVERY:
            return self.head.request.delivery_service
        return 0.0

    def variants(self, vehicle_type: str, metric: CostMetric) -> Dict[LegVariant, ScalarLeg]:
        """Leg choices a worker of this vehicle type has on the arc."""
        if vehicle_type not in self.tau:
            return {}
        if metric is CostMetric.DISTANCE and vehicle_type in self.pareto:
            return dict(self.pareto[vehicle_type])
        return {LegVariant.TIME: ScalarLeg(self.length, self.tau[vehicle_type])}

    def cost(self, leg: ScalarLeg, metric: CostMetric) -> float:
        if metric is CostMetric.DISTANCE:
            return leg.length
        return leg.tau - self.service_at_head()


@dataclass
class ScalarizedPDGraph:
    nodes: Tuple[PDNode, ...]
    arcs: Tuple[ScalarArc, ...]
    metric: CostMetric
    dropped: Tuple[NodePair, ...] = ()

    def __post_init__(self) -> None:
        self._by_pair = {arc.pair: arc for arc in self.arcs}
        self._out: Dict[str, List[ScalarArc]] = {}
        for arc in self.arcs:
            self._out.setdefault(arc.tail.name, []).append(arc)

    def arc(self, tail: str, head: str) -> Optional[ScalarArc]:
        return self._by_pair.get((tail, head))

    def out_arcs(self, tail: str) -> List[ScalarArc]:
        return self._out.get(tail, [])


class Sense(str, Enum):
    LE = '<='
    GE = '>='
    EQ = '='


@dataclass(frozen=True)
class Variable:
    name: str
    lower: float = 0.0
    upper: float = math.inf
    binary: bool = False


@dataclass(frozen=True)
class LinearConstraint:
    name: str
    terms: Tuple[Tuple[str, float], ...]
    sense: Sense
    rhs: float

    def activity(self, values: Mapping[str, float]) -> float:
        return sum(coef * values.get(var, 0.0) for var, coef in self.terms)

    def satisfied(self, values: Mapping[str, float], tol: float) -> bool:
        lhs = self.activity(values)
        if self.sense is Sense.LE:
            return lhs <= self.rhs + tol
        if self.sense is Sense.GE:
            return lhs >= self.rhs - tol
        return abs(lhs - self.rhs) <= tol


@dataclass
class MilpModel:
    """
    A linear model with binary and bounded continuous variables

    Attributes:
        variables (Dict[str, Variable]): Declared variables by name
        constraints (List[LinearConstraint]): Rows in emission order
        objective (Dict[str, float]): Minimised linear objective
        t_max (float): Big-M constant of the time propagation rows
        q_max (float): Big-M constant of the load propagation rows
        sigma (float): Profit per served request
    """

    variables: Dict[str, Variable] = field(default_factory=dict)
    constraints: List[LinearConstraint] = field(default_factory=list)
    objective: Dict[str, float] = field(default_factory=dict)
    t_max: float = 0.0
    q_max: float = 0.0
    sigma: float = 0.0

    def add_variable(self, variable: Variable) -> str:
        self.variables[variable.name] = variable
        return variable.name

    def add_constraint(
        self, name: str, terms: List[Tuple[str, float]], sense: Sense, rhs: float
    ) -> LinearConstraint:
        constraint = LinearConstraint(name, tuple(terms), sense, rhs)
        self.constraints.append(constraint)
        return constraint

    @property
    def binaries(self) -> List[str]:
        return [v.name for v in self.variables.values() if v.binary]

    def violations(self, values: Mapping[str, float], tol: float = 1e-6) -> List[str]:
        """Names of the rows, bounds and integrality conditions `values` breaks."""
        broken = [c.name for c in self.constraints if not c.satisfied(values, tol)]
        for variable in self.variables.values():
            value = values.get(variable.name, 0.0)
            if value < variable.lower - tol or value > variable.upper + tol:
                broken.append(f'bound:{variable.name}')
            if variable.binary and min(abs(value), abs(value - 1)) > tol:
                broken.append(f'binary:{variable.name}')
        return broken

    def objective_value(self, values: Mapping[str, float]) -> float:
        return sum(coef * values.get(var, 0.0) for var, coef in self.objective.items())


@dataclass(frozen=True)
class CandidateSolution:
    """
    Per-worker node-name sequences from shift start to shift end, plus the
    PD arcs realised by their time-optimal leg
    """

    routes: Mapping[str, Tuple[str, ...]]
    time_legs: Mapping[str, FrozenSet[NodePair]] = field(default_factory=dict)


@dataclass(frozen=True)
class OracleSolution:
    solution: CandidateSolution
    objective: float
    cost: float
    served: int


class RepairStatus(str, Enum):
    FEASIBLE = 'feasible'
    REPAIRED = 'repaired'
    REJECTED = 'rejected'


@dataclass
class WorkerCheck:
    worker_id: str
    subtour: Tuple[str, ...]
    route: Route
    violations: FeasibilityReport
    swaps: List[NodePair] = field(default_factory=list)
    status: RepairStatus = RepairStatus.FEASIBLE


@dataclass
class SolutionCheckReport:
    workers: List[WorkerCheck] = field(default_factory=list)
    cuts: List[LinearConstraint] = field(default_factory=list)

    @property
    def status(self) -> RepairStatus:
        statuses = {w.status for w in self.workers}
        if RepairStatus.REJECTED in statuses:
            return RepairStatus.REJECTED
        if RepairStatus.REPAIRED in statuses:
            return RepairStatus.REPAIRED
        return RepairStatus.FEASIBLE

    @property
    def total_swaps(self) -> int:
        return sum(len(w.swaps) for w in self.workers)


def arc_variable(arc: ScalarArc, worker_id: str, variant: LegVariant, metric: CostMetric) -> str:
    """Name of the binary choosing `arc` for a worker, suffixed `_t` for the time-optimal variant of a distance model."""
    name = f'x_e{arc.index}_w{lp_name(worker_id)}'
    if metric is CostMetric.DISTANCE and variant is LegVariant.TIME:
        name += '_t'
    return name


def assignment_variable(request_id: str, worker_id: str) -> str:
    return f'x_r{lp_name(request_id)}_w{lp_name(worker_id)}'


def subtour_variables(
    scalarized: ScalarizedPDGraph,
    worker_id: str,
    sequence: Tuple[str, ...],
    time_legs: FrozenSet[NodePair] = frozenset(),
) -> List[str]:
    """Arc variables a node sequence sets to one; arcs missing from the graph are skipped."""
    names = []
    for pair in zip(sequence, sequence[1:]):
        arc = scalarized.arc(*pair)
        if arc is None:
            continue
        variant = LegVariant.TIME if pair in time_legs else LegVariant.DISTANCE
        names.append(arc_variable(arc, worker_id, variant, scalarized.metric))
    return names
