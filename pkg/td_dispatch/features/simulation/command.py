import argparse
import logging
from pathlib import Path
from typing import List, Tuple

from td_dispatch.core import BaseCommand, Database, DispatchApp
from td_dispatch.core.exceptions import ConfigurationError
from td_dispatch.features.insertion.data import Norm, SchedulerConfig
from td_dispatch.features.pd_core.data import CostMetric
from td_dispatch.features.simulation.data import (
    METRIC_COLUMNS,
    ReportRow,
    RunConfig,
    RunRepository,
    SchedulerKind,
)
from td_dispatch.features.simulation.generator import generate_instance
from td_dispatch.features.simulation.instance import load_forecasts, load_instance
from td_dispatch.features.simulation.service import (
    BASELINE_VARIANT,
    ReplayService,
    compare_runs,
    evaluate_baseline,
    read_metrics,
    report_csv,
    report_table,
    write_outputs,
)
from td_dispatch.shared.utils.files import write_json

logger = logging.getLogger(__name__)

DEFAULT_WB = '1.5,2'


def parse_wb(value: str) -> Tuple[float, float]:
    """
    Raises:
        ConfigurationError: If the value is not `theta,mu`
    """
    try:
        theta, mu = (float(part) for part in value.split(','))
    except ValueError as e:
        raise ConfigurationError(f'--wb expects theta,mu, got {value!r}') from e
    return theta, mu


class SimulationCommands(BaseCommand):
    """Command group for instance generation, online replay and reports"""

    def __init__(self, app: DispatchApp):
        super().__init__(app)

        generate = self.add_command('generate', 'Write a synthetic graph, instance and history', self.generate)
        generate.add_argument('--seed', type=int, default=0)
        generate.add_argument('--requests', type=int, default=200)
        generate.add_argument('--workers', type=int, default=10)
        generate.add_argument('--side', type=int, default=50, help='grid side in vertices')
        generate.add_argument('--history-days', type=int, default=0)
        generate.add_argument('--vehicle-types', default='car', help='comma separated')
        generate.add_argument('--out', type=Path, required=True)

        run = self.add_command('run', 'Replay an instance through one scheduler variant', self.run)
        run.add_argument('--graph', type=Path, required=True)
        run.add_argument('--instance', type=Path, required=True)
        run.add_argument('--metric', choices=[m.value for m in CostMetric], default=CostMetric.TIME.value)
        run.add_argument('--norm', choices=[n.value for n in Norm], default=Norm.L1.value)
        run.add_argument('--wb', nargs='?', const=DEFAULT_WB, default=None, metavar='THETA,MU')
        run.add_argument('--rr', action='store_true')
        run.add_argument('--prophet', type=Path, default=None, metavar='FORECASTS')
        run.add_argument('--seed', type=int, default=0)
        run.add_argument('--baseline', type=Path, default=None, metavar='SUBTOURS')
        run.add_argument('--out', type=Path, required=True)
        run.add_argument('--record', action='store_true', help='store the metrics in the run database')
        run.add_argument('--database', default=None, help='overrides RUNS_DATABASE_URL')

        report = self.add_command('report', 'Compare the metrics of several runs', self.report)
        report.add_argument('metrics', type=Path, nargs='*', help='metrics.csv files or run directories')
        report.add_argument('--from-db', action='store_true')
        report.add_argument('--database', default=None, help='overrides RUNS_DATABASE_URL')
        report.add_argument('--fingerprint', default=None, help='instance to load from the database')
        report.add_argument('--baseline-variant', default=None)
        report.add_argument('--out', type=Path, default=None)

    def generate(self, args: argparse.Namespace) -> int:
        if args.requests < 0 or args.workers < 1 or args.side < 2:
            raise ConfigurationError('need requests >= 0, workers >= 1 and side >= 2')
        generated = generate_instance(
            args.seed,
            args.requests,
            args.workers,
            side=args.side,
            history_days=args.history_days,
            vehicle_types=tuple(t.strip() for t in args.vehicle_types.split(',') if t.strip()),
        )
        write_json(args.out / 'graph.json', generated.graph)
        write_json(args.out / 'instance.json', generated.instance)
        if args.history_days > 0:
            write_json(args.out / 'history.json', generated.history)
        logger.info(f'Generated instance written to {args.out}')
        return 0

    def run(self, args: argparse.Namespace) -> int:
        wb = parse_wb(args.wb) if args.wb is not None else None
        scheduler_config = SchedulerConfig(
            metric=CostMetric(args.metric),
            norm=Norm(args.norm),
            wb_enabled=wb is not None,
            wb_threshold=wb[0] if wb else SchedulerConfig.wb_threshold,
            wb_penalty=wb[1] if wb else SchedulerConfig.wb_penalty,
            rr_enabled=args.rr,
        )
        config = RunConfig(
            scheduler=SchedulerKind.PROPHET if args.prophet else SchedulerKind.INSERTION,
            scheduler_config=scheduler_config,
            forecast_path=args.prophet,
            seed=args.seed,
            out_dir=args.out,
        )

        instance = load_instance(args.graph, args.instance)
        forecasts = load_forecasts(instance.graph, args.prophet) if args.prophet else []
        result = ReplayService(config).replay(instance, forecasts)
        baseline = evaluate_baseline(instance, args.baseline) if args.baseline else None
        write_outputs(args.out, config, instance.fingerprint, result, baseline)

        if args.record:
            if args.database:
                Database.configure(args.database)
            RunRepository().save_run(config, instance.fingerprint, result.metrics)
        return 0

    def report(self, args: argparse.Namespace) -> int:
        rows: List[ReportRow] = []
        for path in args.metrics:
            rows.extend(read_metrics(path))
        if args.from_db:
            if args.database:
                Database.configure(args.database)
            for record in RunRepository().runs_for(args.fingerprint):
                rows.append(
                    ReportRow(
                        record.variant,
                        record.fingerprint,
                        {c: getattr(record, c) for c in METRIC_COLUMNS},
                    )
                )

        baseline = args.baseline_variant
        if baseline is None and any(r.variant == BASELINE_VARIANT for r in rows):
            baseline = BASELINE_VARIANT
        compared = compare_runs(rows, baseline)

        if args.out is not None:
            args.out.mkdir(parents=True, exist_ok=True)
            (args.out / 'report.csv').write_text(report_csv(compared), encoding='utf-8')
            logger.info(f'Report written to {args.out / "report.csv"}')
        print(report_table(compared), end='')
        return 0


def setup(app: DispatchApp) -> None:
    SimulationCommands(app)
