import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import FrozenSet, Iterable, List, Optional, Tuple

from td_dispatch.core.exceptions import InstanceValidationError
from td_dispatch.features.td_metric.data import Leg, LegMetric, Point


class CostMetric(str, Enum):
    """Route cost kappa: total travel time or total length"""

    TIME = 'time'
    DISTANCE = 'dist'

    @property
    def leg_metric(self) -> LegMetric:
        return LegMetric.TIME if self is CostMetric.TIME else LegMetric.DISTANCE


class NodeKind(str, Enum):
    SHIFT_START = 'shift-start'
    PICKUP = 'pickup'
    DELIVERY = 'delivery'
    SHIFT_END = 'shift-end'

    @property
    def prefix(self) -> str:
        return {
            NodeKind.SHIFT_START: 's',
            NodeKind.PICKUP: 'p',
            NodeKind.DELIVERY: 'd',
            NodeKind.SHIFT_END: 'e',
        }[self]


def pickup_name(request_id: str) -> str:
    return f'{NodeKind.PICKUP.prefix}_{request_id}'


def delivery_name(request_id: str) -> str:
    return f'{NodeKind.DELIVERY.prefix}_{request_id}'


@dataclass(frozen=True)
class Request:
    """
    A pickup-and-delivery request with its spatiotemporal constraints

    Attributes:
        id (str): Request identifier
        pickup_vertex (int): Road vertex the pickup point snaps to
        earliest_pickup (float): ep_r in seconds
        pickup_service (float): ps_r in seconds
        delivery_vertex (int): Road vertex the delivery point snaps to
        latest_delivery (float): ld_r in seconds, +inf once deactivated
        delivery_service (float): ds_r in seconds
        load (int): q_r in capacity units
        vehicle_types (FrozenSet[str]): Eligible vehicle types h_r
        release_time (float): rt_r, when the scheduler first sees the request
        is_virtual (bool): True for forecasted requests
        probability (Optional[float]): Appearance probability of a forecast
    """

    id: str
    pickup_vertex: int
    earliest_pickup: float
    pickup_service: float
    delivery_vertex: int
    latest_delivery: float
    delivery_service: float
    load: int
    vehicle_types: FrozenSet[str]
    release_time: float
    is_virtual: bool = False
    probability: Optional[float] = None
    pickup_point: Optional[Point] = field(default=None, compare=False)
    delivery_point: Optional[Point] = field(default=None, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, 'vehicle_types', frozenset(self.vehicle_types))
        if not self.earliest_pickup < self.latest_delivery:
            raise InstanceValidationError(
                f'request {self.id}: earliest pickup must precede latest delivery'
            )
        if self.load < 0:
            raise InstanceValidationError(f'request {self.id}: negative load')
        if self.pickup_service < 0 or self.delivery_service < 0:
            raise InstanceValidationError(f'request {self.id}: negative service time')
        if self.is_virtual:
            if self.probability is None or not 0 < self.probability <= 1:
                raise InstanceValidationError(
                    f'request {self.id}: virtual requests need a probability in (0, 1]'
                )
        else:
            if self.probability is not None:
                raise InstanceValidationError(
                    f'request {self.id}: only virtual requests carry a probability'
                )
            if self.release_time > self.earliest_pickup:
                raise InstanceValidationError(
                    f'request {self.id}: release time after earliest pickup'
                )

    def deactivated(self) -> 'Request':
        """Virtual copy whose load and deadline no longer constrain a route."""
        return replace(self, load=0, latest_delivery=math.inf)


@dataclass(frozen=True)
class Worker:
    id: str
    start_vertex: int
    start_time: float
    end_vertex: int
    end_time: float
    capacity: int
    vehicle_type: str
    start_point: Optional[Point] = field(default=None, compare=False)
    end_point: Optional[Point] = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if not self.start_time < self.end_time:
            raise InstanceValidationError(f'worker {self.id}: shift ends before it starts')
        if not self.capacity > 0:
            raise InstanceValidationError(f'worker {self.id}: capacity must be positive')

    def is_operational(self, t: float) -> bool:
        return self.start_time <= t < self.end_time


@dataclass(frozen=True)
class PDNode:
    """
    A service event. Identity is (kind, owner); the request or worker behind
    it is carried along without taking part in equality.
    """

    kind: NodeKind
    owner: str
    vertex: int
    request: Optional[Request] = field(default=None, compare=False, repr=False)
    worker: Optional[Worker] = field(default=None, compare=False, repr=False)
    not_before: float = field(default=-math.inf, compare=False, repr=False)

    @classmethod
    def pickup(cls, request: Request) -> 'PDNode':
        return cls(NodeKind.PICKUP, request.id, request.pickup_vertex, request=request)

    @classmethod
    def delivery(cls, request: Request) -> 'PDNode':
        return cls(
            NodeKind.DELIVERY, request.id, request.delivery_vertex, request=request
        )

    @classmethod
    def shift_start(cls, worker: Worker) -> 'PDNode':
        return cls(NodeKind.SHIFT_START, worker.id, worker.start_vertex, worker=worker)

    @classmethod
    def shift_end(cls, worker: Worker) -> 'PDNode':
        return cls(NodeKind.SHIFT_END, worker.id, worker.end_vertex, worker=worker)

    @property
    def name(self) -> str:
        return f'{self.kind.prefix}_{self.owner}'

    @property
    def is_service(self) -> bool:
        return self.kind in (NodeKind.PICKUP, NodeKind.DELIVERY)

    def with_request(self, request: Request) -> 'PDNode':
        return replace(self, request=request)

    def held_until(self, t: float) -> 'PDNode':
        """Copy that the worker may head for no earlier than t."""
        return replace(self, not_before=t)


@dataclass(frozen=True)
class PDGraph:
    nodes: Tuple[PDNode, ...]
    arcs: Tuple[Tuple[PDNode, PDNode], ...]


@dataclass(frozen=True)
class Subtour:
    """Ordered service events of one worker, from shift start to shift end"""

    worker: Worker
    nodes: Tuple[PDNode, ...]

    @classmethod
    def empty(cls, worker: Worker) -> 'Subtour':
        return cls(worker, (PDNode.shift_start(worker), PDNode.shift_end(worker)))

    def __len__(self) -> int:
        return len(self.nodes)

    def insert(self, request: Request, i: int, j: int) -> 'Subtour':
        """Pickup right after position i and delivery right after position j (i <= j)."""
        nodes = self.nodes
        return replace(
            self,
            nodes=nodes[: i + 1]
            + (PDNode.pickup(request),)
            + nodes[i + 1 : j + 1]
            + (PDNode.delivery(request),)
            + nodes[j + 1 :],
        )

    def without(self, request_ids: Iterable[str]) -> 'Subtour':
        drop = set(request_ids)
        return replace(
            self,
            nodes=tuple(
                n for n in self.nodes if not (n.is_service and n.owner in drop)
            ),
        )

    def without_nodes(self, names: Iterable[str]) -> 'Subtour':
        drop = set(names)
        return replace(self, nodes=tuple(n for n in self.nodes if n.name not in drop))

    def replace_node(self, index: int, node: PDNode) -> 'Subtour':
        return replace(self, nodes=self.nodes[:index] + (node,) + self.nodes[index + 1 :])

    def index_of(self, name: str) -> Optional[int]:
        for index, node in enumerate(self.nodes):
            if node.name == name:
                return index
        return None

    @property
    def request_ids(self) -> List[str]:
        seen: List[str] = []
        for node in self.nodes:
            if node.is_service and node.owner not in seen:
                seen.append(node.owner)
        return seen

    def structural_errors(self) -> List[str]:
        errors = []
        nodes = self.nodes
        if len(nodes) < 2:
            return ['subtour needs a shift start and a shift end']
        if nodes[0] != PDNode.shift_start(self.worker):
            errors.append('first node is not the worker shift start')
        if nodes[-1] != PDNode.shift_end(self.worker):
            errors.append('last node is not the worker shift end')
        if any(not n.is_service for n in nodes[1:-1]):
            errors.append('shift nodes inside the subtour')
        if len(set(nodes)) != len(nodes):
            errors.append('repeated service event')
        return errors


@dataclass(frozen=True)
class NodeLabel:
    arrival: float
    departure: float
    waiting: float
    load: int


class ViolationKind(str, Enum):
    DEADLINE = 'deadline'
    SHIFT_END = 'shift_end'
    CAPACITY = 'capacity'
    PRECEDENCE = 'precedence'


@dataclass(frozen=True)
class Violation:
    kind: ViolationKind
    index: int
    detail: str


@dataclass(frozen=True)
class FeasibilityReport:
    violations: Tuple[Violation, ...] = ()

    @property
    def feasible(self) -> bool:
        return not self.violations

    def of_kind(self, kind: ViolationKind) -> List[Violation]:
        return [v for v in self.violations if v.kind is kind]


@dataclass(frozen=True)
class Route:
    """
    A subtour realised on the road graph

    Attributes:
        subtour (Subtour): The service events
        labels (Tuple[NodeLabel, ...]): One label per node
        legs (Tuple[Leg, ...]): legs[k] joins node k to node k + 1
        metric (CostMetric): Objective the default legs optimise
        time_legs (FrozenSet[Tuple[str, str]]): Node-name pairs forced onto
            time-optimal legs under the distance metric
    """

    subtour: Subtour
    labels: Tuple[NodeLabel, ...]
    legs: Tuple[Leg, ...]
    metric: CostMetric
    time_legs: FrozenSet[Tuple[str, str]] = frozenset()

    @property
    def worker(self) -> Worker:
        return self.subtour.worker

    @property
    def nodes(self) -> Tuple[PDNode, ...]:
        return self.subtour.nodes

    @property
    def length(self) -> float:
        """Cost_lambda in meters"""
        return sum(leg.length for leg in self.legs)

    @property
    def travel_time(self) -> float:
        """Cost_tau in seconds"""
        return sum(leg.travel_time for leg in self.legs)

    def cost(self, metric: CostMetric) -> float:
        return self.travel_time if metric is CostMetric.TIME else self.length

    def leg_metric(self, k: int) -> LegMetric:
        pair = (self.nodes[k].name, self.nodes[k + 1].name)
        if pair in self.time_legs:
            return LegMetric.TIME
        return self.metric.leg_metric
