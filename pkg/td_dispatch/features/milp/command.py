import argparse
import logging
from pathlib import Path
from typing import Dict, List, Tuple

from td_dispatch.core import BaseCommand, DispatchApp
from td_dispatch.features.milp.data import ScalarizedPDGraph, SolutionCheckReport
from td_dispatch.features.milp.lp_format import read_cuts, write_cuts
from td_dispatch.features.milp.service import (
    append_cuts,
    build_milp,
    candidate_from_schema,
    candidate_to_schema,
    check_candidates,
    emit_model,
    scalarize,
    solve_and_repair,
)
from td_dispatch.features.pd_core.data import CostMetric
from td_dispatch.features.pd_core.service import build_pd_graph
from td_dispatch.features.simulation.data import Instance
from td_dispatch.features.simulation.instance import load_instance
from td_dispatch.features.td_metric.service import Router
from td_dispatch.shared.utils.files import read_json, write_json
from td_dispatch.shared.utils.schemas import CandidateFile

logger = logging.getLogger(__name__)


def _scalarized(instance: Instance, metric: CostMetric) -> Tuple[ScalarizedPDGraph, Router]:
    router = Router(instance.graph)
    pd_graph = build_pd_graph(instance.requests, instance.workers)
    return scalarize(pd_graph, router, instance.workers, instance.requests, metric), router


def _report_document(report: SolutionCheckReport) -> Dict:
    return {
        'status': report.status.value,
        'swaps': report.total_swaps,
        'cuts': [cut.name for cut in report.cuts],
        'workers': [
            {
                'worker': check.worker_id,
                'status': check.status.value,
                'subtour': list(check.subtour),
                'swaps': [list(pair) for pair in check.swaps],
                'violations': [v.detail for v in check.violations.violations],
            }
            for check in report.workers
        ],
    }


class MilpCommands(BaseCommand):
    """Command group for the relaxed routing model"""

    def __init__(self, app: DispatchApp):
        super().__init__(app)

        export = self.add_command('milp-export', 'Write the relaxed model in LP format', self.export)
        export.add_argument('--graph', type=Path, required=True)
        export.add_argument('--instance', type=Path, required=True)
        export.add_argument('--metric', choices=[m.value for m in CostMetric], default=CostMetric.TIME.value)
        export.add_argument('--cuts', type=Path, default=None, help='no-good rows to append')
        export.add_argument('--sigma', type=float, default=None, help='profit per served request')
        export.add_argument('--out', type=Path, required=True)

        check = self.add_command(
            'milp-check', 'Check candidate solutions under time-dependent travel', self.check
        )
        check.add_argument('--graph', type=Path, required=True)
        check.add_argument('--instance', type=Path, required=True)
        check.add_argument('--candidates', type=Path, default=None)
        check.add_argument('--metric', choices=[m.value for m in CostMetric], default=CostMetric.TIME.value)
        check.add_argument('--solve', action='store_true', help='solve tiny instances exactly with a cut loop')
        check.add_argument('--max-rounds', type=int, default=10)
        check.add_argument('--cuts-out', type=Path, default=None)
        check.add_argument('--out', type=Path, required=True)

    def export(self, args: argparse.Namespace) -> int:
        instance = load_instance(args.graph, args.instance)
        scalarized, _ = _scalarized(instance, CostMetric(args.metric))
        model = build_milp(scalarized, instance.workers, instance.requests, args.sigma)
        if args.cuts is not None:
            model = append_cuts(model, read_cuts(args.cuts.read_text(encoding='utf-8')))
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(emit_model(model), encoding='utf-8')
        logger.info(
            f'Wrote {len(model.variables)} variables and {len(model.constraints)} rows to {args.out}'
        )
        return 0

    def check(self, args: argparse.Namespace) -> int:
        instance = load_instance(args.graph, args.instance)
        scalarized, router = _scalarized(instance, CostMetric(args.metric))
        document: Dict = {}
        cuts: List = []

        if args.candidates is not None:
            candidates = [
                candidate_from_schema(c, scalarized)
                for c in read_json(args.candidates, CandidateFile).candidates
            ]
            best, reports = check_candidates(candidates, scalarized, router)
            document['best'] = best
            document['candidates'] = [_report_document(r) for r in reports]
            for report in reports:
                cuts.extend(report.cuts)
            logger.info(f'Checked {len(candidates)} candidates, best is {best}')

        if args.solve:
            solution, report, cuts = solve_and_repair(
                scalarized,
                instance.workers,
                instance.requests,
                router,
                args.max_rounds,
                cuts=cuts,
            )
            document['solution'] = {
                'objective': solution.objective,
                'cost': solution.cost,
                'served': solution.served,
                'routes': candidate_to_schema(solution.solution).model_dump(mode='json'),
                'check': _report_document(report),
            }

        write_json(args.out, document)
        if args.cuts_out is not None:
            args.cuts_out.parent.mkdir(parents=True, exist_ok=True)
            args.cuts_out.write_text(write_cuts(cuts), encoding='utf-8')
            logger.info(f'Wrote {len(cuts)} cuts to {args.cuts_out}')
        return 0


def setup(app: DispatchApp) -> None:
    MilpCommands(app)
