import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Tuple

from td_dispatch.core.exceptions import ConfigurationError
from td_dispatch.features.pd_core.data import Request
from td_dispatch.features.td_metric.data import Point

SECONDS_PER_DAY = 86400.0

Cell = Tuple[int, int]
GridKey = Tuple[int, int, int]


class Aggregator(str, Enum):
    MEAN = 'mean'
    MEDIAN = 'median'


class EventKind(str, Enum):
    PICKUP = 'pickup'
    DELIVERY = 'delivery'


@dataclass(frozen=True)
class GridSpec:
    """
    Attributes:
        cell_size (float): Side D of a square cell in metres
        windows_per_day (int): Time windows the day is split into
        days (int): Sampled days N
    """

    cell_size: float = 500.0
    windows_per_day: int = 24
    days: int = 1

    def __post_init__(self) -> None:
        if not self.cell_size > 0:
            raise ConfigurationError('cell size must be positive')
        if self.windows_per_day < 24:
            raise ConfigurationError('a day needs at least 24 time windows')
        if self.days < 1:
            raise ConfigurationError('at least one sampled day is needed')

    @property
    def window_length(self) -> float:
        return SECONDS_PER_DAY / self.windows_per_day


@dataclass(frozen=True)
class HistoricalRequest:
    day: int
    request: Request


@dataclass(frozen=True)
class GridEvent:
    kind: EventKind
    source: HistoricalRequest
    key: GridKey


@dataclass
class Grid:
    """
    Pickup and delivery events of the sampled days by (cell-x, cell-y, window)

    Attributes:
        spec (GridSpec): Partition parameters
        origin (Point): Lower corner of the covered area
        shape (Tuple[int, int]): Cells along x and y
        events (Dict[GridKey, List[GridEvent]]): Events per grid entry
        sources (List[HistoricalRequest]): Indexed requests by (day, id)
    """

    spec: GridSpec
    origin: Point
    shape: Tuple[int, int]
    events: Dict[GridKey, List[GridEvent]] = field(default_factory=dict)
    sources: List[HistoricalRequest] = field(default_factory=list)
    _keys: Dict[Tuple[int, str, EventKind], GridKey] = field(default_factory=dict, repr=False)

    def add(self, event: GridEvent) -> None:
        self.events.setdefault(event.key, []).append(event)
        self._keys[(event.source.day, event.source.request.id, event.kind)] = event.key

    def key_of(self, source: HistoricalRequest, kind: EventKind) -> GridKey:
        return self._keys[(source.day, source.request.id, kind)]

    @property
    def event_count(self) -> int:
        return sum(len(events) for events in self.events.values())


@dataclass
class ForecastCluster:
    """Historical requests from distinct days merged into one forecast"""

    members: List[HistoricalRequest]
    pickup_cell: Cell
    delivery_cell: Cell
    window: int
    earliest_pickup: float = math.nan
    load: float = math.nan

    @property
    def days(self) -> List[int]:
        return sorted({m.day for m in self.members})

    @property
    def vehicle_types(self):
        return self.members[0].request.vehicle_types

    @property
    def first(self) -> Tuple[int, str]:
        return min((m.day, m.request.id) for m in self.members)


def window_of(t: float, spec: GridSpec) -> int:
    index = int(math.floor((t % SECONDS_PER_DAY) / spec.window_length))
    return min(index, spec.windows_per_day - 1)


def cell_index(value: float, lower: float, size: float, count: int) -> Optional[int]:
    """
    Cell holding `value`, a coordinate on a cell edge belonging to the lower
    cell; None when the raw index falls outside [0, count)
    """
    index = math.ceil((value - lower) / size) - 1
    if value == lower:
        index = 0
    if not 0 <= index < count:
        return None
    return index
