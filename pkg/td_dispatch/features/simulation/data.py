import logging
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from sqlalchemy import Column, DateTime, Float, Integer, String
from sqlalchemy.exc import SQLAlchemyError
from sqlalchemy.sql import func

from td_dispatch.core.db import Base, Database
from td_dispatch.core.exceptions import ConfigurationError, DatabaseError
from td_dispatch.features.insertion.data import FleetState, SchedulerConfig
from td_dispatch.features.pd_core.data import Request, Worker
from td_dispatch.features.td_metric.data import RoadGraph

logger = logging.getLogger(__name__)


class ScenarioDefaults:
    """
    Constraint scenario applied to fields an instance file leaves out
    """

    LOAD = 1
    DELIVERY_WINDOW_S = 2400.0
    PICKUP_SERVICE_S = 90.0
    DELIVERY_SERVICE_S = 90.0
    CAPACITY = 3


class GeneratorDefaults:
    """
    Shape of the synthetic city
    """

    GRID_SIDE = 50
    SPACING_M = 200.0
    PERIOD_S = 86400.0
    BREAKPOINT_STEP_S = 1800.0
    SPEED_MPS = {'car': 11.0, 'van': 9.0}
    PEAKS = ((8.0 * 3600, 3600.0, 0.8), (17.5 * 3600, 4500.0, 0.6))
    NOISE = 0.05
    SHIFT_S = 8 * 3600.0
    FIRST_SHIFT_S = 6 * 3600.0
    LAST_SHIFT_S = 10 * 3600.0
    LEAD_S = 1800.0
    JITTER_S = 300.0
    DEMAND_HOURS = (8.0, 12.5, 16.5)
    DEMAND_SPAN_S = (6.5 * 3600, 17.0 * 3600)


class SchedulerKind(str, Enum):
    INSERTION = 'td-insertion'
    PROPHET = 'td-prophet'


@dataclass
class Instance:
    """
    A validated scenario

    Attributes:
        graph (RoadGraph): Road network
        requests (List[Request]): Real requests ordered by (release time, id)
        workers (List[Worker]): Workers ordered by id
        fingerprint (str): Digest of the files the instance was read from
    """

    graph: RoadGraph
    requests: List[Request]
    workers: List[Worker]
    fingerprint: str = ''

    @property
    def horizon(self) -> Optional[Tuple[float, float]]:
        """From the first release to the last latest delivery; None without requests."""
        if not self.requests:
            return None
        return (
            min(r.release_time for r in self.requests),
            max(r.latest_delivery for r in self.requests),
        )


@dataclass(frozen=True)
class RunConfig:
    """
    One replay variant

    Attributes:
        scheduler (SchedulerKind): Plain insertion or forecast-seeded insertion
        scheduler_config (SchedulerConfig): Metric, norm and heuristics
        forecast_path (Optional[Path]): Forecast file, required by the prophet scheduler
        seed (int): Seed recorded with the run
        out_dir (Optional[Path]): Where metrics, events and routes are written
    """

    scheduler: SchedulerKind = SchedulerKind.INSERTION
    scheduler_config: SchedulerConfig = field(default_factory=SchedulerConfig)
    forecast_path: Optional[Path] = None
    seed: int = 0
    out_dir: Optional[Path] = None

    def __post_init__(self) -> None:
        if self.scheduler is SchedulerKind.PROPHET and self.forecast_path is None:
            raise ConfigurationError('the prophet scheduler needs a forecast file')

    @property
    def variant(self) -> str:
        prefix = 'prophet' if self.scheduler is SchedulerKind.PROPHET else 'insertion'
        return f'{prefix}:{self.scheduler_config.label}'


METRIC_COLUMNS = (
    'served',
    'rejected',
    'workers',
    'total_travel_time_h',
    'total_length_km',
    'path_len_avg_km',
    'path_len_var_km2',
    'objective',
)


@dataclass
class RunMetrics:
    """
    Outcome of one replay

    Attributes:
        served (int): Requests in a final route
        rejected (int): Requests no worker took
        workers (int): Workers of the instance
        total_travel_time_h (float): Sum of route travel times, hours
        total_length_km (float): Sum of route lengths, kilometres
        path_len_avg_km (float): Mean route length over the workers
        path_len_var_km2 (float): Population variance of the same list
        objective (float): Fleet objective under the run's metric and norm
        workloads_km (Dict[str, float]): Route length per worker
        latency_mean_ms (float): Mean scheduling time per request
        latency_max_ms (float): Slowest request
    """

    served: int = 0
    rejected: int = 0
    workers: int = 0
    total_travel_time_h: float = 0.0
    total_length_km: float = 0.0
    path_len_avg_km: float = 0.0
    path_len_var_km2: float = 0.0
    objective: float = 0.0
    workloads_km: Dict[str, float] = field(default_factory=dict)
    latency_mean_ms: float = 0.0
    latency_max_ms: float = 0.0

    def row(self) -> Tuple:
        return tuple(getattr(self, column) for column in METRIC_COLUMNS)


@dataclass(frozen=True)
class ReportRow:
    variant: str
    fingerprint: str
    values: Dict[str, float]
    deltas: Dict[str, Optional[float]] = field(default_factory=dict)


class RunRecord(Base):
    """Database model for one recorded replay"""

    __tablename__ = 'run_records'

    id = Column(Integer, primary_key=True, autoincrement=True)
    variant = Column(String, nullable=False)
    fingerprint = Column(String, nullable=False, index=True)
    seed = Column(Integer, default=0)
    served = Column(Integer, default=0)
    rejected = Column(Integer, default=0)
    workers = Column(Integer, default=0)
    total_travel_time_h = Column(Float, default=0.0)
    total_length_km = Column(Float, default=0.0)
    path_len_avg_km = Column(Float, default=0.0)
    path_len_var_km2 = Column(Float, default=0.0)
    objective = Column(Float, default=0.0)
    latency_mean_ms = Column(Float, default=0.0)
    created_at = Column(DateTime, default=func.now())

    def metrics(self) -> RunMetrics:
        return RunMetrics(
            **{column: getattr(self, column) for column in METRIC_COLUMNS}
        )


class RunRepository:
    """Repository class for run-history persistence"""

    def __init__(self):
        """Initialize database connection"""
        self.db = Database.get_instance()

    def save_run(self, config: RunConfig, fingerprint: str, metrics: RunMetrics) -> RunRecord:
        """
        Store the metrics of one replay

        Args:
            config (RunConfig): The replayed variant
            fingerprint (str): Instance digest
            metrics (RunMetrics): Replay outcome

        Returns:
            RunRecord: The stored row

        Raises:
            DatabaseError: If the row cannot be written
        """
        record = RunRecord(
            variant=config.variant,
            fingerprint=fingerprint,
            seed=config.seed,
            latency_mean_ms=metrics.latency_mean_ms,
            created_at=datetime.now(),
            **{column: getattr(metrics, column) for column in METRIC_COLUMNS},
        )
        try:
            self.db.add(record)
            self.db.commit()
            logger.info(f'Recorded run {record.id} ({record.variant})')
            return record
        except SQLAlchemyError as e:
            self.db.rollback()
            logger.error(f'Error saving run: {str(e)}')
            raise DatabaseError(f'Failed to save run: {str(e)}') from e

    def runs_for(self, fingerprint: Optional[str] = None) -> List[RunRecord]:
        """
        Stored runs, oldest first, optionally for one instance only

        Raises:
            DatabaseError: If the query fails
        """
        try:
            query = self.db.query(RunRecord)
            if fingerprint:
                query = query.filter_by(fingerprint=fingerprint)
            return query.order_by(RunRecord.id).all()
        except SQLAlchemyError as e:
            logger.error(f'Error loading runs: {str(e)}')
            raise DatabaseError(f'Failed to load runs: {str(e)}') from e


@dataclass
class EventLog:
    """Timestamped replay decisions, serialised one JSON object per line"""

    records: List[Dict] = field(default_factory=list)

    def record(self, t: float, event: str, **fields) -> None:
        self.records.append({'t': round(t, 6), 'event': event, **fields})

    def of_kind(self, event: str) -> List[Dict]:
        return [r for r in self.records if r['event'] == event]


@dataclass
class ReplayResult:
    metrics: RunMetrics
    events: EventLog
    fleet: FleetState
    latency: Dict[str, float] = field(default_factory=dict)
