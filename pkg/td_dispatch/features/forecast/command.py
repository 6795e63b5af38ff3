import argparse
import logging
from pathlib import Path

from td_dispatch.core import BaseCommand, DispatchApp
from td_dispatch.core.exceptions import ConfigurationError
from td_dispatch.features.forecast.data import Aggregator, GridSpec
from td_dispatch.features.forecast.service import (
    build_grid,
    forecast_document,
    load_history,
    merge_forecasts,
    perfect_forecasts,
)
from td_dispatch.features.simulation.instance import load_graph, load_instance
from td_dispatch.shared.utils.files import write_json

logger = logging.getLogger(__name__)


class ForecastCommands(BaseCommand):
    """Command group for forecast generation"""

    def __init__(self, app: DispatchApp):
        super().__init__(app)

        forecast = self.add_command(
            'forecast', 'Merge historical requests into probabilistic forecasts', self.forecast
        )
        forecast.add_argument('--graph', type=Path, required=True)
        source = forecast.add_mutually_exclusive_group(required=True)
        source.add_argument('--history', type=Path)
        source.add_argument('--perfect-from', type=Path, metavar='INSTANCE')
        forecast.add_argument('--cell-size', type=float, default=GridSpec.cell_size, help='metres')
        forecast.add_argument('--windows', type=int, default=GridSpec.windows_per_day)
        forecast.add_argument('--threshold', type=float, default=None, help='seconds, half a window by default')
        forecast.add_argument(
            '--aggregator', choices=[a.value for a in Aggregator], default=Aggregator.MEAN.value
        )
        forecast.add_argument('--out', type=Path, required=True)

    def forecast(self, args: argparse.Namespace) -> int:
        if args.perfect_from is not None:
            instance = load_instance(args.graph, args.perfect_from)
            forecasts = perfect_forecasts(instance.requests)
        else:
            if args.threshold is not None and args.threshold < 0:
                raise ConfigurationError('similarity threshold must be non-negative')
            graph = load_graph(args.graph)
            days, history = load_history(graph, args.history)
            spec = GridSpec(args.cell_size, args.windows, days)
            grid = build_grid(history, spec)
            forecasts = merge_forecasts(grid, args.threshold, Aggregator(args.aggregator))

        write_json(args.out, forecast_document(forecasts))
        logger.info(f'Wrote {len(forecasts)} forecasts to {args.out}')
        return 0


def setup(app: DispatchApp) -> None:
    ForecastCommands(app)
