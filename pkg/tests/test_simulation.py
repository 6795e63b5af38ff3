import json
from pathlib import Path

import pytest
from builders import make_request, make_worker

from td_dispatch.core import DispatchApp
from td_dispatch.core.exceptions import ConfigurationError, InstanceValidationError, ReportError
from td_dispatch.features.forecast.service import perfect_forecasts
from td_dispatch.features.insertion.data import Norm, SchedulerConfig
from td_dispatch.features.pd_core.data import CostMetric, Subtour
from td_dispatch.features.pd_core.service import check_feasible, realize_route
from td_dispatch.features.simulation.data import (
    Instance,
    ReportRow,
    RunConfig,
    RunRepository,
    SchedulerKind,
)
from td_dispatch.features.simulation.generator import generate_instance
from td_dispatch.features.simulation.instance import (
    build_instance,
    graph_from_schema,
    load_forecasts,
    load_instance,
)
from td_dispatch.features.simulation.service import (
    ReplayService,
    compare_runs,
    compute_metrics,
    evaluate_baseline,
    read_metrics,
    report_csv,
    write_outputs,
)
from td_dispatch.shared.utils.files import dump_json, parse_json, read_json, write_json
from td_dispatch.shared.utils.schemas import ForecastFile, InstanceFile

WORKER = {'id': 'w', 'start_vertex': 0, 'start_time': 0, 'end_time': 20000, 'vehicle_type': 'car'}

# Generated instances (40 requests, 4 workers, side 8) on which perfect
# forecasts are known to lower the objective.
PROPHET_SEEDS = (1, 2, 4, 6, 7, 9, 10, 11)


def _generated(seed: int = 1, requests: int = 6, workers: int = 2, side: int = 4) -> Instance:
    generated = generate_instance(seed, requests, workers, side=side)
    return build_instance(graph_from_schema(generated.graph), generated.instance)


def _write_generated(tmp_path: Path, **kwargs) -> Path:
    assert DispatchApp().run(['generate', '--out', str(tmp_path), *_flags(kwargs)]) == 0
    return tmp_path


def _flags(options: dict) -> list:
    flags = []
    for key, value in options.items():
        flags += [f'--{key.replace("_", "-")}', str(value)]
    return flags


def test_syntax_errors_carry_the_line() -> None:
    with pytest.raises(InstanceValidationError, match='line 3'):
        parse_json('{\n "workers": [\n', InstanceFile, 'instance.json')


def test_schema_errors_carry_the_field() -> None:
    text = json.dumps({'workers': [{'id': 'w', 'start_time': 0, 'end_time': 10}]})

    with pytest.raises(InstanceValidationError, match=r'workers\.0\.vehicle_type'):
        parse_json(text, InstanceFile)


def test_missing_fields_take_the_scenario_defaults(line) -> None:
    document = InstanceFile.model_validate(
        {
            'requests': [
                {'id': 'r', 'pickup_vertex': 1, 'delivery_vertex': 2, 'earliest_pickup': 1000}
            ],
            'workers': [WORKER],
        }
    )

    instance = build_instance(line, document)

    request, worker = instance.requests[0], instance.workers[0]
    assert request.load == 1
    assert request.latest_delivery == 3400.0
    assert (request.pickup_service, request.delivery_service) == (90.0, 90.0)
    assert request.release_time == 1000.0
    assert request.vehicle_types == frozenset({'car'})
    assert request.pickup_point == (1000.0, 0.0)
    assert worker.capacity == 3
    assert worker.end_vertex == 0


def test_coordinates_snap_to_the_nearest_vertex(line) -> None:
    document = InstanceFile.model_validate(
        {
            'requests': [
                {
                    'id': 'r',
                    'pickup_x': 1100.0,
                    'pickup_y': 5.0,
                    'delivery_vertex': 3,
                    'earliest_pickup': 0,
                }
            ],
            'workers': [WORKER],
        }
    )

    request = build_instance(line, document).requests[0]

    assert request.pickup_vertex == 1
    assert request.pickup_point == (1100.0, 5.0)


def test_graph_and_forecast_files_load_from_plain_json(tmp_path) -> None:
    ttf = {'car': {'period_s': 200.0, 'breakpoints': [[0, 60], [100, 120]]}}
    graph = {
        'vertices': [{'id': 0, 'x': 0.0, 'y': 0.0}, {'id': 1, 'x': 1000.0, 'y': 0.0}],
        'arcs': [
            {'tail': 0, 'head': 1, 'length_m': 1000.0, 'ttf': ttf},
            {'tail': 1, 'head': 0, 'length_m': 1000.0, 'ttf': ttf},
        ],
    }
    request = {'id': 'r', 'pickup_vertex': 0, 'delivery_vertex': 1, 'earliest_pickup': 100}
    write_json(tmp_path / 'graph.json', graph)
    write_json(tmp_path / 'instance.json', {'requests': [request], 'workers': [WORKER]})
    write_json(tmp_path / 'forecasts.json', [{**request, 'id': 'f', 'probability': 0.5}])

    instance = load_instance(tmp_path / 'graph.json', tmp_path / 'instance.json')
    forecasts = load_forecasts(instance.graph, tmp_path / 'forecasts.json')

    arc = instance.graph.arcs_between(0, 1)[0]
    assert arc.length == 1000.0
    assert arc.ttfs['car'].period == 200.0
    assert arc.travel_time('car', 100.0) == pytest.approx(120.0)
    assert [(f.id, f.probability, f.is_virtual) for f in forecasts] == [('f', 0.5, True)]
    write_json(tmp_path / 'graph.json', {**graph, 'arcs': [{**graph['arcs'][0], 'length': 1000.0}]})
    with pytest.raises(InstanceValidationError, match=r'arcs\.0\.length'):
        load_instance(tmp_path / 'graph.json', tmp_path / 'instance.json')


@pytest.mark.parametrize(
    'requests, workers',
    [
        ([{'id': 'r', 'pickup_vertex': 9, 'delivery_vertex': 2, 'earliest_pickup': 0}], [WORKER]),
        (
            [
                {
                    'id': 'r',
                    'pickup_vertex': 1,
                    'delivery_vertex': 2,
                    'earliest_pickup': 0,
                    'vehicle_types': ['bike'],
                }
            ],
            [WORKER],
        ),
        ([], [WORKER, WORKER]),
        ([], [{**WORKER, 'vehicle_type': 'bike'}]),
    ],
)
def test_inconsistent_instances_are_rejected(line, requests, workers) -> None:
    document = InstanceFile.model_validate({'requests': requests, 'workers': workers})

    with pytest.raises(InstanceValidationError):
        build_instance(line, document)


def test_generator_is_deterministic() -> None:
    first = generate_instance(3, 10, 2, side=5, history_days=2)
    second = generate_instance(3, 10, 2, side=5, history_days=2)
    other = generate_instance(4, 10, 2, side=5)

    assert dump_json(first.graph) == dump_json(second.graph)
    assert dump_json(first.instance) == dump_json(second.instance)
    assert dump_json(first.history) == dump_json(second.history)
    assert dump_json(first.instance) != dump_json(other.instance)
    assert len(first.graph.vertices) == 25
    assert len(first.graph.arcs) == 2 * 2 * 5 * 4
    assert first.history.days == 2
    assert len(first.history.requests) == 20


def test_generated_files_load_back(tmp_path) -> None:
    generated = generate_instance(2, 5, 2, side=4)
    write_json(tmp_path / 'graph.json', generated.graph)
    write_json(tmp_path / 'instance.json', generated.instance)

    instance = load_instance(tmp_path / 'graph.json', tmp_path / 'instance.json')

    assert len(instance.requests) == 5
    assert [w.id for w in instance.workers] == ['w000', 'w001']
    assert len(instance.fingerprint) == 16
    keys = [(r.release_time, r.id) for r in instance.requests]
    assert keys == sorted(keys)


def test_compute_metrics(line_router) -> None:
    busy, idle = make_worker('a', 0), make_worker('b', 3)
    served = realize_route(
        Subtour.empty(busy).insert(make_request('r', 1, 2, ep=1000.0), 0, 0),
        CostMetric.TIME,
        line_router,
    )
    forecast_only = realize_route(
        Subtour.empty(idle).insert(make_request('f', 1, 2, ep=1000.0, probability=0.9), 0, 0),
        CostMetric.TIME,
        line_router,
    )

    metrics = compute_metrics([served, forecast_only], 3, CostMetric.TIME, 1)

    assert (metrics.served, metrics.rejected, metrics.workers) == (1, 2, 2)
    assert metrics.total_length_km == pytest.approx(4.0)
    assert metrics.total_travel_time_h == pytest.approx(400.0 / 3600.0)
    assert metrics.path_len_avg_km == pytest.approx(2.0)
    assert metrics.path_len_var_km2 == pytest.approx(4.0)
    assert metrics.objective == pytest.approx(400.0)
    assert metrics.workloads_km == {'a': pytest.approx(4.0), 'b': 0.0}


def test_path_length_spread_skips_workers_off_shift(line_router) -> None:
    busy, later = make_worker('a', 0), make_worker('b', 3, start_time=30000.0, end_time=40000.0)
    served = realize_route(
        Subtour.empty(busy).insert(make_request('r', 1, 2, ep=1000.0), 0, 0),
        CostMetric.TIME,
        line_router,
    )
    idle = realize_route(Subtour.empty(later), CostMetric.TIME, line_router)

    metrics = compute_metrics([served, idle], 1, CostMetric.TIME, 1, horizon=(1000.0, 3400.0))

    assert metrics.workers == 2
    assert metrics.path_len_avg_km == pytest.approx(4.0)
    assert metrics.path_len_var_km2 == pytest.approx(0.0)
    assert metrics.workloads_km == {'a': pytest.approx(4.0), 'b': 0.0}

    overlapping = compute_metrics([served, idle], 1, CostMetric.TIME, 1, horizon=(1000.0, 35000.0))

    assert overlapping.path_len_avg_km == pytest.approx(2.0)


def test_instance_horizon(line) -> None:
    requests = [make_request('a', 1, 2, ep=1000.0, rt=400.0), make_request('b', 2, 1, ep=2000.0, ld=6000.0)]

    assert Instance(line, requests, [make_worker('w', 0)]).horizon == (400.0, 6000.0)
    assert Instance(line, [], [make_worker('w', 0)]).horizon is None


def test_replay_accounts_for_every_request() -> None:
    instance = _generated()

    result = ReplayService(RunConfig()).replay(instance)

    metrics = result.metrics
    assert metrics.served + metrics.rejected == len(instance.requests)
    decided = result.events.of_kind('assignment') + result.events.of_kind('rejection')
    assert sorted(e['request'] for e in decided) == sorted(r.id for r in instance.requests)
    assert metrics.served == len(result.fleet.assignments)
    assert all(check_feasible(route).feasible for route in result.fleet.routes.values())
    times = [e['t'] for e in result.events.records]
    assert times == sorted(times)


@pytest.mark.parametrize(
    'scheduler_config',
    [
        SchedulerConfig(),
        SchedulerConfig(metric=CostMetric.DISTANCE, norm=Norm.L2),
        SchedulerConfig(wb_enabled=True, rr_enabled=True),
    ],
)
def test_replay_is_deterministic(scheduler_config) -> None:
    instance = _generated(seed=5, requests=8)
    config = RunConfig(scheduler_config=scheduler_config)

    first = ReplayService(config).replay(instance)
    second = ReplayService(config).replay(instance)

    assert first.events.records == second.events.records
    assert first.metrics.row() == second.metrics.row()


def test_prophet_without_forecasts_matches_insertion() -> None:
    instance = _generated(seed=7, requests=8)
    prophet = RunConfig(scheduler=SchedulerKind.PROPHET, forecast_path=Path('unused'))

    plain = ReplayService(RunConfig()).replay(instance)
    seeded = ReplayService(prophet).replay(instance, [])

    assert seeded.events.records == plain.events.records
    assert seeded.metrics.row() == plain.metrics.row()
    assert prophet.variant == 'prophet:time-l1'


def test_prophet_needs_a_forecast_file() -> None:
    with pytest.raises(ConfigurationError):
        RunConfig(scheduler=SchedulerKind.PROPHET)


def test_perfect_forecasts_are_matched() -> None:
    instance = _generated(seed=2, requests=6)
    config = RunConfig(scheduler=SchedulerKind.PROPHET, forecast_path=Path('unused'))

    result = ReplayService(config).replay(instance, perfect_forecasts(instance.requests))

    seeded = {e['forecast'] for e in result.events.of_kind('seed')}
    matched = {e['forecast'] for e in result.events.of_kind('match')}
    assert matched <= seeded
    assert not any(n.request.is_virtual for r in result.fleet.routes.values() for n in r.nodes if n.is_service)
    assert result.metrics.served + result.metrics.rejected == len(instance.requests)


def _row(variant: str, served: float, length: float, rejected: float = 0.0, fingerprint: str = 'abc'):
    values = {
        'served': served,
        'rejected': rejected,
        'workers': 2.0,
        'total_travel_time_h': 1.0,
        'total_length_km': length,
        'path_len_avg_km': length / 2,
        'path_len_var_km2': 0.0,
        'objective': length,
    }
    return ReportRow(variant, fingerprint, values)


def test_compare_runs_computes_relative_improvement() -> None:
    rows = compare_runs([_row('base', 10, 100.0), _row('new', 12, 80.0, rejected=2.0)])

    new = rows[1]
    assert new.deltas['served'] == pytest.approx(-0.2)
    assert new.deltas['total_length_km'] == pytest.approx(0.2)
    assert new.deltas['rejected'] is None
    assert rows[0].deltas['rejected'] == 0.0
    assert 'workers' not in new.deltas
    assert '20.00%' in report_csv(rows)


def test_compare_runs_errors() -> None:
    with pytest.raises(ReportError):
        compare_runs([])
    with pytest.raises(ReportError):
        compare_runs([_row('a', 1, 1.0), _row('b', 1, 1.0, fingerprint='other')])
    with pytest.raises(ReportError):
        compare_runs([_row('a', 1, 1.0), _row('b', 1, 1.0)], baseline='missing')
    single = compare_runs([_row('a', 1, 1.0)])
    assert single[0].deltas == {}


def test_outputs_round_trip_through_the_metrics_file(tmp_path) -> None:
    instance = _generated()
    config = RunConfig()
    result = ReplayService(config).replay(instance)

    paths = write_outputs(tmp_path, config, 'abc', result, baseline=result.metrics)

    assert sorted(p.name for p in paths) == ['events.jsonl', 'metrics.csv', 'routes.json', 'timing.csv']
    rows = read_metrics(tmp_path)
    assert [r.variant for r in rows] == ['baseline', 'insertion:time-l1']
    assert rows[1].values['served'] == result.metrics.served
    assert rows[1].values['total_length_km'] == pytest.approx(result.metrics.total_length_km, abs=1e-6)
    events = (tmp_path / 'events.jsonl').read_text().splitlines()
    assert len(events) == len(result.events.records)
    routes = json.loads((tmp_path / 'routes.json').read_text())
    assert sorted(routes) == [w.id for w in instance.workers]


def test_read_metrics_errors(tmp_path) -> None:
    with pytest.raises(ReportError):
        read_metrics(tmp_path / 'missing.csv')
    bad = tmp_path / 'metrics.csv'
    bad.write_text('variant,instance,served\nx,abc,nope\n')
    with pytest.raises(ReportError):
        read_metrics(bad)


def test_baseline_routes(tmp_path, line) -> None:
    instance = Instance(line, [make_request('r', 1, 2, ep=1000.0)], [make_worker('w', 0)])
    path = write_json(tmp_path / 'baseline.json', [{'worker': 'w', 'nodes': ['p_r', 'd_r']}])

    metrics = evaluate_baseline(instance, path)

    assert (metrics.served, metrics.rejected) == (1, 0)
    assert metrics.total_length_km == pytest.approx(4.0)
    for routes in (
        [{'worker': 'x', 'nodes': ['p_r', 'd_r']}],
        [{'worker': 'w', 'nodes': ['x_r', 'd_r']}],
        [{'worker': 'w', 'nodes': ['p_r', 'p_r']}],
    ):
        write_json(path, routes)
        with pytest.raises(InstanceValidationError):
            evaluate_baseline(instance, path)


def test_run_repository(run_database) -> None:
    instance = _generated()
    config = RunConfig(seed=9)
    result = ReplayService(config).replay(instance)
    repository = RunRepository()

    repository.save_run(config, 'abc', result.metrics)
    repository.save_run(config, 'other', result.metrics)

    records = repository.runs_for('abc')
    assert len(records) == 1
    assert records[0].variant == 'insertion:time-l1'
    assert records[0].seed == 9
    assert records[0].metrics().served == result.metrics.served
    assert len(repository.runs_for()) == 2


def test_cli_generate_run_and_report(tmp_path, capsys) -> None:
    data = _write_generated(tmp_path / 'data', seed=1, requests=6, workers=2, side=4)
    files = ['--graph', str(data / 'graph.json'), '--instance', str(data / 'instance.json')]
    app = DispatchApp()

    assert app.run(['run', *files, '--out', str(tmp_path / 'plain')]) == 0
    assert DispatchApp().run(['run', *files, '--rr', '--wb', '--out', str(tmp_path / 'tuned')]) == 0
    assert (
        DispatchApp().run(
            ['report', str(tmp_path / 'plain'), str(tmp_path / 'tuned'), '--out', str(tmp_path / 'report')]
        )
        == 0
    )

    output = capsys.readouterr().out
    assert 'insertion:time-l1+wb+rr' in output
    report = (tmp_path / 'report' / 'report.csv').read_text()
    assert report.startswith('variant,instance,served')
    assert 'delta_served' in report


def test_cli_reports_failures_with_exit_status(tmp_path) -> None:
    code = DispatchApp().run(
        ['run', '--graph', str(tmp_path / 'g.json'), '--instance', str(tmp_path / 'i.json'), '--out', str(tmp_path)]
    )

    assert code == 1
    assert DispatchApp().run(['report', str(tmp_path / 'nothing')]) == 1


def test_cli_forecasts_feed_the_prophet_scheduler(tmp_path) -> None:
    data = _write_generated(tmp_path, seed=4, requests=8, workers=2, side=4, history_days=3)
    graph = str(data / 'graph.json')

    assert DispatchApp().run(
        ['forecast', '--graph', graph, '--history', str(data / 'history.json'), '--out', str(data / 'history-forecasts.json')]
    ) == 0
    assert DispatchApp().run(
        ['forecast', '--graph', graph, '--perfect-from', str(data / 'instance.json'), '--out', str(data / 'perfect.json')]
    ) == 0

    merged = read_json(data / 'history-forecasts.json', ForecastFile).root
    assert merged and all(0 < f.probability <= 1 for f in merged)
    perfect = read_json(data / 'perfect.json', ForecastFile).root
    assert len(perfect) == 8 and all(f.probability == 1.0 for f in perfect)

    out = data / 'prophet'
    assert DispatchApp().run(
        ['run', '--graph', graph, '--instance', str(data / 'instance.json'), '--prophet', str(data / 'perfect.json'), '--out', str(out)]
    ) == 0
    assert read_metrics(out)[0].variant == 'prophet:time-l1'


def test_cli_records_runs(tmp_path, run_database, capsys) -> None:
    data = _write_generated(tmp_path, seed=1, requests=4, workers=1, side=4)
    files = ['--graph', str(data / 'graph.json'), '--instance', str(data / 'instance.json')]

    assert DispatchApp().run(['run', *files, '--record', '--out', str(tmp_path / 'run')]) == 0
    assert DispatchApp().run(['report', '--from-db']) == 0

    assert 'insertion:time-l1' in capsys.readouterr().out
    assert len(RunRepository().runs_for()) == 1


def test_cli_milp_export_and_check(tmp_path) -> None:
    data = _write_generated(tmp_path, seed=6, requests=2, workers=1, side=4)
    files = ['--graph', str(data / 'graph.json'), '--instance', str(data / 'instance.json')]

    assert DispatchApp().run(['milp-export', *files, '--out', str(tmp_path / 'model.lp')]) == 0
    assert DispatchApp().run(
        ['milp-check', *files, '--solve', '--out', str(tmp_path / 'check.json'), '--cuts-out', str(tmp_path / 'cuts.lp')]
    ) == 0

    assert (tmp_path / 'model.lp').read_text().startswith('\\ relaxed pickup-and-delivery model')
    document = json.loads((tmp_path / 'check.json').read_text())
    assert document['solution']['check']['status'] in ('feasible', 'repaired', 'rejected')
    assert document['solution']['served'] <= 2


@pytest.mark.benchmark
@pytest.mark.parametrize('seed', PROPHET_SEEDS)
def test_perfect_forecasts_never_raise_the_objective(seed: int) -> None:
    instance = _generated(seed=seed, requests=40, workers=4, side=8)
    prophet = RunConfig(scheduler=SchedulerKind.PROPHET, forecast_path=Path('unused'))

    plain = ReplayService(RunConfig()).replay(instance).metrics
    seeded = ReplayService(prophet).replay(instance, perfect_forecasts(instance.requests)).metrics

    assert seeded.objective <= plain.objective + 1e-6


@pytest.mark.benchmark
def test_squared_norm_spreads_workload_more_evenly() -> None:
    variance = {Norm.L1: 0.0, Norm.L2: 0.0}
    for seed in range(5):
        instance = _generated(seed=seed, requests=40, workers=4, side=8)
        for norm in variance:
            config = RunConfig(scheduler_config=SchedulerConfig(norm=norm))
            variance[norm] += ReplayService(config).replay(instance).metrics.path_len_var_km2

    assert variance[Norm.L2] <= variance[Norm.L1]
