from typing import Dict, List, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, RootModel, model_validator


class FileModel(BaseModel):
    model_config = ConfigDict(extra='forbid')


class TravelTimeSchema(FileModel):
    period_s: float = Field(86400.0, gt=0)
    breakpoints: List[Tuple[float, float]] = Field(min_length=1)


class VertexSchema(FileModel):
    id: int
    x: Optional[float] = None
    y: Optional[float] = None


class ArcSchema(FileModel):
    tail: int
    head: int
    length_m: float
    ttf: Dict[str, TravelTimeSchema]


class GraphFile(FileModel):
    vehicle_types: Optional[List[str]] = None
    vertices: List[VertexSchema]
    arcs: List[ArcSchema]


def _located(vertex: Optional[int], x: Optional[float], y: Optional[float], what: str) -> None:
    if vertex is None and (x is None or y is None):
        raise ValueError(f'{what} needs a vertex or both coordinates')


class RequestSchema(FileModel):
    id: str
    pickup_vertex: Optional[int] = None
    pickup_x: Optional[float] = None
    pickup_y: Optional[float] = None
    delivery_vertex: Optional[int] = None
    delivery_x: Optional[float] = None
    delivery_y: Optional[float] = None
    earliest_pickup: float = Field(ge=0)
    latest_delivery: Optional[float] = None
    pickup_service: Optional[float] = Field(None, ge=0)
    delivery_service: Optional[float] = Field(None, ge=0)
    load: Optional[int] = Field(None, ge=0)
    vehicle_types: Optional[List[str]] = None
    release_time: Optional[float] = None

    @model_validator(mode='after')
    def check_locations(self) -> 'RequestSchema':
        _located(self.pickup_vertex, self.pickup_x, self.pickup_y, 'pickup')
        _located(self.delivery_vertex, self.delivery_x, self.delivery_y, 'delivery')
        return self


class WorkerSchema(FileModel):
    id: str
    start_vertex: Optional[int] = None
    start_x: Optional[float] = None
    start_y: Optional[float] = None
    end_vertex: Optional[int] = None
    end_x: Optional[float] = None
    end_y: Optional[float] = None
    start_time: float
    end_time: float
    capacity: Optional[int] = Field(None, gt=0)
    vehicle_type: str

    @model_validator(mode='after')
    def check_locations(self) -> 'WorkerSchema':
        _located(self.start_vertex, self.start_x, self.start_y, 'shift start')
        return self


class InstanceFile(FileModel):
    requests: List[RequestSchema] = []
    workers: List[WorkerSchema]


class ForecastSchema(RequestSchema):
    probability: float = Field(gt=0, le=1)


class ForecastFile(RootModel[List[ForecastSchema]]):
    """A list of virtual requests, each with its appearance probability"""

    root: List[ForecastSchema] = []


class HistoryRequestSchema(RequestSchema):
    day: int = Field(ge=0)


class HistoryFile(FileModel):
    days: int = Field(ge=1)
    requests: List[HistoryRequestSchema] = []


class SubtourSchema(FileModel):
    worker: str
    nodes: List[str]
    time_legs: List[Tuple[str, str]] = []


class CandidateSchema(RootModel[List[SubtourSchema]]):
    """One candidate solution: per-worker sequences of event names"""

    root: List[SubtourSchema]


class CandidateFile(RootModel[Union[List[SubtourSchema], List[CandidateSchema]]]):
    """
    A single candidate solution, or a list of them ranked by an external solver
    """

    root: Union[List[SubtourSchema], List[CandidateSchema]]

    @property
    def candidates(self) -> List[CandidateSchema]:
        if self.root and isinstance(self.root[0], SubtourSchema):
            return [CandidateSchema(self.root)]
        return list(self.root)


class BaselineFile(RootModel[List[SubtourSchema]]):
    """Fixed subtours, each a worker and its event names (p_<id>, d_<id>) in visiting order"""

    root: List[SubtourSchema]
