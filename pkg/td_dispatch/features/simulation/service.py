import csv
import io
import json
import logging
import math
import time
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from td_dispatch.core.exceptions import InstanceValidationError, ReportError
from td_dispatch.features.insertion.data import FleetState
from td_dispatch.features.insertion.service import InsertionService
from td_dispatch.features.pd_core.data import CostMetric, NodeKind, PDNode, Route, Subtour
from td_dispatch.features.pd_core.service import check_feasible, realize_route
from td_dispatch.features.prophet.data import BindingStatus, ProphetConfig
from td_dispatch.features.prophet.service import ProphetService
from td_dispatch.features.simulation.data import (
    METRIC_COLUMNS,
    EventLog,
    Instance,
    ReplayResult,
    ReportRow,
    RunConfig,
    RunMetrics,
    SchedulerKind,
)
from td_dispatch.features.td_metric.service import Router
from td_dispatch.shared.utils.files import dump_json, read_json
from td_dispatch.shared.utils.schemas import BaselineFile

logger = logging.getLogger(__name__)

BASELINE_VARIANT = 'baseline'


def _serves_real_requests(route: Route) -> bool:
    return any(n.is_service and not n.request.is_virtual for n in route.nodes)


def _operational(route: Route, horizon: Optional[Tuple[float, float]]) -> bool:
    if horizon is None or _serves_real_requests(route):
        return True
    start, end = horizon
    return route.worker.start_time <= end and route.worker.end_time > start


def compute_metrics(
    routes: Iterable[Route],
    total_requests: int,
    metric: CostMetric,
    power: int,
    horizon: Optional[Tuple[float, float]] = None,
) -> RunMetrics:
    """
    Fleet totals over final routes

    A worker whose route serves no real request never leaves its depot and
    contributes zero length and travel time. The path length mean and
    variance run over operational workers only: those serving a real request
    or whose shift overlaps `horizon`. Without a horizon every worker counts.

    Args:
        routes (Iterable[Route]): Final route of every worker
        total_requests (int): Real requests in the instance
        metric (CostMetric): Cost the objective sums
        power (int): 1 for the l1 norm, 2 for the squared one
        horizon (Optional[Tuple[float, float]]): Span of the run, see `Instance.horizon`

    Returns:
        RunMetrics: Fleet totals of the run
    """
    routes = sorted(routes, key=lambda r: r.worker.id)
    lengths, times, objective = [], [], 0.0
    served = 0
    for route in routes:
        if _serves_real_requests(route):
            lengths.append(route.length / 1000.0)
            times.append(route.travel_time / 3600.0)
            objective += route.cost(metric) ** power
            served += sum(
                1
                for n in route.nodes
                if n.is_service and not n.request.is_virtual and n.kind is NodeKind.PICKUP
            )
        else:
            lengths.append(0.0)
            times.append(0.0)

    operational = np.asarray(
        [length for route, length in zip(routes, lengths) if _operational(route, horizon)],
        dtype=float,
    )
    return RunMetrics(
        served=served,
        rejected=total_requests - served,
        workers=len(routes),
        total_travel_time_h=float(np.sum(times)) if times else 0.0,
        total_length_km=float(np.sum(lengths)) if lengths else 0.0,
        path_len_avg_km=float(operational.mean()) if operational.size else 0.0,
        path_len_var_km2=float(operational.var()) if operational.size else 0.0,
        objective=objective,
        workloads_km={r.worker.id: length for r, length in zip(routes, lengths)},
    )


class ReplayService:
    """
    Event-driven online replay of an instance through one scheduler variant

    The clock jumps from one release time to the next. At each release the
    prophet scheduler first expires stale forecasts and tries to verify one;
    the request is otherwise assigned by insertion, and a relocation sweep
    follows when enabled.

    Attributes:
        config (RunConfig): The replayed variant
    """

    def __init__(self, config: RunConfig) -> None:
        self.config = config

    def _scheduler(self, forecasts: Sequence) -> InsertionService:
        scheduler_config = self.config.scheduler_config
        if self.config.scheduler is SchedulerKind.PROPHET:
            return ProphetService(scheduler_config, ProphetConfig())
        if forecasts:
            logger.warning('Forecasts are ignored by the insertion scheduler')
        return InsertionService(scheduler_config)

    def replay(self, instance: Instance, forecasts: Sequence = ()) -> ReplayResult:
        """
        Feed every request to the scheduler at its release time

        Args:
            instance (Instance): Loaded scenario
            forecasts (Sequence[Request]): Virtual requests for the prophet scheduler

        Returns:
            ReplayResult: Metrics, event log and final fleet
        """
        scheduler_config = self.config.scheduler_config
        router = Router(instance.graph)
        fleet = FleetState.create(instance.workers, router, scheduler_config.metric)
        scheduler = self._scheduler(forecasts)
        events = EventLog()
        latency: Dict[str, float] = {}

        prophet = isinstance(scheduler, ProphetService)
        if prophet and forecasts:
            scheduler.seed_forecasts(fleet, list(forecasts))
            for binding in sorted(scheduler.bindings.values(), key=lambda b: b.virtual_id):
                if binding.pending:
                    events.record(fleet.clock, 'seed', forecast=binding.virtual_id, worker=binding.worker_id)

        for request in instance.requests:
            started = time.perf_counter()
            fleet.clock = max(fleet.clock, request.release_time)
            decision = None
            if prophet:
                before = {k: b.status for k, b in scheduler.bindings.items()}
                decision = scheduler.match_or_expire(fleet, request)
                self._log_expiries(events, fleet.clock, scheduler, before)
                if decision is not None:
                    events.record(
                        fleet.clock,
                        'match',
                        request=request.id,
                        forecast=decision.matched_forecast,
                        worker=decision.worker_id,
                    )

            if decision is None:
                previous = {w: r for w, r in fleet.routes.items()}
                if prophet:
                    decision = scheduler.handle_real_request(fleet, request)
                else:
                    decision = scheduler.assign_request(fleet, request)
                self._log_decision(events, fleet, decision, previous)

            if scheduler_config.rr_enabled:
                for move in scheduler.relocate_requests(fleet):
                    events.record(
                        fleet.clock,
                        'relocation',
                        request=move.request_id,
                        from_worker=move.from_worker,
                        to_worker=move.to_worker,
                        objective_before=round(move.objective_before, 6),
                        objective_after=round(move.objective_after, 6),
                    )
            latency[request.id] = (time.perf_counter() - started) * 1000.0

        if prophet:
            before = {k: b.status for k, b in scheduler.bindings.items()}
            scheduler.expire(fleet, math.inf)
            self._log_expiries(events, fleet.clock, scheduler, before)

        for route in fleet.routes.values():
            report = check_feasible(route)
            if not report.feasible:
                logger.warning(f'Final route of worker {route.worker.id} violates {report.violations}')

        metrics = compute_metrics(
            fleet.routes.values(),
            len(instance.requests),
            scheduler_config.metric,
            scheduler_config.norm.power,
            instance.horizon,
        )
        if latency:
            values = np.asarray(list(latency.values()), dtype=float)
            metrics.latency_mean_ms = float(values.mean())
            metrics.latency_max_ms = float(values.max())
        logger.info(
            f'{self.config.variant}: served {metrics.served}, rejected {metrics.rejected}, '
            f'length {metrics.total_length_km:.3f} km'
        )
        return ReplayResult(metrics, events, fleet, latency)

    @staticmethod
    def _log_expiries(events: EventLog, clock: float, scheduler: ProphetService, before: Dict) -> None:
        for virtual_id in sorted(scheduler.bindings):
            binding = scheduler.bindings[virtual_id]
            if binding.status is BindingStatus.EXPIRED and before.get(virtual_id) is not BindingStatus.EXPIRED:
                events.record(clock, 'expiry', forecast=virtual_id, worker=binding.worker_id)

    @staticmethod
    def _log_decision(events: EventLog, fleet: FleetState, decision, previous: Dict[str, Route]) -> None:
        clock = fleet.clock
        if not decision.accepted:
            events.record(clock, 'rejection', request=decision.request_id)
            return
        events.record(
            clock,
            'assignment',
            request=decision.request_id,
            worker=decision.worker_id,
            i=decision.i,
            j=decision.j,
            score=round(decision.score, 6),
            contingency=decision.contingency,
        )
        old = previous[decision.worker_id]
        if old.worker.start_time <= clock and _serves_real_requests(old):
            events.record(
                clock,
                'detour',
                request=decision.request_id,
                worker=decision.worker_id,
                after=old.nodes[decision.i].name,
            )
        for virtual_id in sorted(decision.ignored):
            events.record(clock, 'forecast-drop', forecast=virtual_id, request=decision.request_id)


def route_document(routes: Iterable[Route]) -> Dict:
    """Final routes with their events, labels and realised road legs."""
    document = {}
    for route in sorted(routes, key=lambda r: r.worker.id):
        document[route.worker.id] = {
            'nodes': [
                {
                    'name': node.name,
                    'vertex': node.vertex,
                    'arrival': round(label.arrival, 6),
                    'departure': round(label.departure, 6),
                    'load': label.load,
                }
                for node, label in zip(route.nodes, route.labels)
            ],
            'legs': [
                {
                    'from': route.nodes[k].name,
                    'to': route.nodes[k + 1].name,
                    'metric': leg.metric.value,
                    'path': list(leg.path),
                    'length': round(leg.length, 6),
                    'departure': round(leg.departure, 6),
                    'arrival': round(leg.arrival, 6),
                }
                for k, leg in enumerate(route.legs)
            ],
            'length': round(route.length, 6),
            'travel_time': round(route.travel_time, 6),
        }
    return document


def _format(value) -> str:
    if isinstance(value, float):
        return f'{value:.6f}'
    return str(value)


def metrics_csv(rows: Sequence[ReportRow]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(['variant', 'instance', *METRIC_COLUMNS])
    for row in rows:
        writer.writerow([row.variant, row.fingerprint, *(_format(row.values[c]) for c in METRIC_COLUMNS)])
    return buffer.getvalue()


def write_outputs(
    out_dir: Path,
    config: RunConfig,
    fingerprint: str,
    result: ReplayResult,
    baseline: Optional[RunMetrics] = None,
) -> List[Path]:
    """
    Write metrics.csv, events.jsonl, routes.json and timing.csv

    Everything except timing.csv is a deterministic function of the
    instance and the variant. A baseline, when given, is written as the
    first metrics row under the variant name `baseline`.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    row = ReportRow(
        config.variant,
        fingerprint,
        {c: getattr(result.metrics, c) for c in METRIC_COLUMNS},
    )
    rows = [row]
    if baseline is not None:
        rows.insert(0, ReportRow(BASELINE_VARIANT, fingerprint, {c: getattr(baseline, c) for c in METRIC_COLUMNS}))
    files = {
        'metrics.csv': metrics_csv(rows),
        'events.jsonl': ''.join(
            json.dumps(record, sort_keys=True) + '\n' for record in result.events.records
        ),
        'routes.json': dump_json(route_document(result.fleet.routes.values())),
        'timing.csv': 'request,latency_ms\n'
        + ''.join(f'{rid},{ms:.3f}\n' for rid, ms in result.latency.items()),
    }
    paths = []
    for name, text in files.items():
        path = out_dir / name
        path.write_text(text, encoding='utf-8')
        paths.append(path)
    logger.info(f'Wrote {len(paths)} files to {out_dir}')
    return paths


def evaluate_baseline(
    instance: Instance, path: Path, router: Optional[Router] = None
) -> RunMetrics:
    """
    Metrics of fixed, human-curated subtours

    Every subtour is realised with distance-optimal legs; violations are
    logged but tolerated.

    Raises:
        InstanceValidationError: If a subtour names an unknown worker or event
    """
    document = read_json(path, BaselineFile)
    router = router or Router(instance.graph)
    workers = {w.id: w for w in instance.workers}
    requests = {r.id: r for r in instance.requests}
    routes = {w.id: realize_route(Subtour.empty(w), CostMetric.DISTANCE, router) for w in instance.workers}

    for record in document.root:
        worker = workers.get(record.worker)
        if worker is None:
            raise InstanceValidationError(f'{path}: unknown worker {record.worker}')
        nodes = [PDNode.shift_start(worker)]
        for name in record.nodes:
            kind, _, request_id = name.partition('_')
            request = requests.get(request_id)
            if request is None or kind not in ('p', 'd'):
                raise InstanceValidationError(f'{path}: unknown event {name} for worker {worker.id}')
            nodes.append(PDNode.pickup(request) if kind == 'p' else PDNode.delivery(request))
        nodes.append(PDNode.shift_end(worker))
        subtour = Subtour(worker, tuple(nodes))
        errors = subtour.structural_errors()
        if errors:
            raise InstanceValidationError(f'{path}: worker {worker.id}: {"; ".join(errors)}')
        route = realize_route(subtour, CostMetric.DISTANCE, router, frozenset(map(tuple, record.time_legs)))
        report = check_feasible(route)
        if not report.feasible:
            logger.warning(
                f'Baseline route of worker {worker.id} has {len(report.violations)} violations'
            )
        routes[worker.id] = route

    return compute_metrics(
        routes.values(), len(instance.requests), CostMetric.DISTANCE, 1, instance.horizon
    )


def compare_runs(rows: Sequence[ReportRow], baseline: Optional[str] = None) -> List[ReportRow]:
    """
    Attach relative improvements (base - x) / base against a baseline run

    Args:
        rows (Sequence[ReportRow]): One row per run, all on the same instance
        baseline (Optional[str]): Variant to compare against, the first row by default

    Returns:
        List[ReportRow]: Rows with deltas; a single run gets none

    Raises:
        ReportError: If no run is given, runs cover different instances or
            the baseline is unknown
    """
    if not rows:
        raise ReportError('no runs to report')
    fingerprints = {row.fingerprint for row in rows}
    if len(fingerprints) > 1:
        raise ReportError(f'runs cover different instances: {sorted(fingerprints)}')
    if len(rows) == 1:
        return list(rows)

    base = rows[0] if baseline is None else next((r for r in rows if r.variant == baseline), None)
    if base is None:
        raise ReportError(f'baseline variant {baseline!r} is not among the runs')

    compared = []
    for row in rows:
        deltas: Dict[str, Optional[float]] = {}
        for column in METRIC_COLUMNS:
            if column == 'workers':
                continue
            reference, value = base.values[column], row.values[column]
            if reference == 0:
                deltas[column] = 0.0 if value == 0 else None
            else:
                deltas[column] = (reference - value) / reference
        compared.append(ReportRow(row.variant, row.fingerprint, row.values, deltas))
    return compared


def read_metrics(path: Path) -> List[ReportRow]:
    """
    Raises:
        ReportError: If the file is missing or malformed
    """
    path = Path(path)
    if path.is_dir():
        path = path / 'metrics.csv'
    if not path.exists():
        raise ReportError(f'{path}: no metrics file')
    rows = []
    with path.open(encoding='utf-8', newline='') as handle:
        for record in csv.DictReader(handle):
            try:
                values = {c: float(record[c]) for c in METRIC_COLUMNS}
            except (KeyError, TypeError, ValueError) as e:
                raise ReportError(f'{path}: malformed metrics row') from e
            rows.append(ReportRow(record['variant'], record['instance'], values))
    return rows


def report_csv(rows: Sequence[ReportRow]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    delta_columns = [c for c in METRIC_COLUMNS if rows and c in rows[0].deltas]
    writer.writerow(['variant', 'instance', *METRIC_COLUMNS, *(f'delta_{c}' for c in delta_columns)])
    for row in rows:
        writer.writerow(
            [
                row.variant,
                row.fingerprint,
                *(_format(row.values[c]) for c in METRIC_COLUMNS),
                *('' if row.deltas[c] is None else f'{100 * row.deltas[c]:.2f}%' for c in delta_columns),
            ]
        )
    return buffer.getvalue()


def report_table(rows: Sequence[ReportRow]) -> str:
    """Fixed-width rendering of the report CSV."""
    table = list(csv.reader(io.StringIO(report_csv(rows))))
    widths = [max(len(line[k]) for line in table) for k in range(len(table[0]))]
    lines = ['  '.join(cell.ljust(w) for cell, w in zip(line, widths)).rstrip() for line in table]
    lines.insert(1, '  '.join('-' * w for w in widths))
    return '\n'.join(lines) + '\n'
