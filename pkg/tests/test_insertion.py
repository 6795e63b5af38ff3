import math
from typing import Tuple

import numpy as np
import pytest
from builders import (
    make_graph,
    make_request,
    make_worker,
    random_graph,
    random_requests,
    random_workers,
)

from td_dispatch.core.exceptions import ConfigurationError, IndicatorUndefinedError
from td_dispatch.features.insertion.data import (
    CandidateStatus,
    FleetState,
    Norm,
    SchedulerConfig,
)
from td_dispatch.features.insertion.service import InsertionService, detour_pairs, insert_request
from td_dispatch.features.pd_core.data import CostMetric, Subtour
from td_dispatch.features.pd_core.service import check_feasible, realize_route, relabel_suffix
from td_dispatch.features.simulation.data import Instance
from td_dispatch.features.simulation.generator import generate_instance
from td_dispatch.features.simulation.instance import build_instance, graph_from_schema
from td_dispatch.features.td_metric.service import Router
from td_dispatch.shared.utils.numeric import Tolerance

COMBINATIONS = [(metric, norm) for metric in CostMetric for norm in Norm]
PRUNED = (CandidateStatus.PRUNED_CAPACITY, CandidateStatus.PRUNED_SLACK)


def _brute_force(service: InsertionService, fleet: FleetState, request) -> Tuple[float, tuple]:
    """Best score by realising every gated (worker, i, j) from scratch."""
    metric, power = service.config.metric, service.config.norm.power
    best, where = math.inf, None
    for worker in fleet.workers:
        if worker.vehicle_type not in request.vehicle_types:
            continue
        route = fleet.routes[worker.id]
        old = route.cost(metric) ** power
        last = len(route.nodes) - 2
        for i in range(last + 1):
            following = route.nodes[i + 1]
            if following.is_service and route.labels[i + 1].departure < request.release_time - Tolerance.TIME:
                continue
            for j in range(i, last + 1):
                candidate = realize_route(
                    insert_request(route, request, i, j), route.metric, fleet.router, route.time_legs
                )
                if not check_feasible(candidate).feasible:
                    continue
                score = candidate.cost(metric) ** power - old
                if score < best - Tolerance.SCORE:
                    best, where = score, (worker.id, i, j)
    return best, where


@pytest.mark.parametrize('metric, norm', COMBINATIONS)
@pytest.mark.parametrize('seed', range(25))
def test_best_insertion_matches_exhaustive_search(seed: int, metric: CostMetric, norm: Norm) -> None:
    rng = np.random.default_rng(seed)
    graph = random_graph(rng, 9)
    workers = random_workers(rng, graph, int(rng.integers(1, 4)), capacity=2)
    requests = random_requests(rng, graph, 5)
    service = InsertionService(SchedulerConfig(metric=metric, norm=norm))
    fleet = FleetState.create(workers, Router(graph), metric)

    for request in requests:
        fleet.clock = max(fleet.clock, request.release_time)
        expected, where = _brute_force(service, fleet, request)

        decision = service.best_insertion(fleet, request)

        if where is None:
            assert not decision.accepted
        else:
            assert decision.accepted
            assert decision.score == pytest.approx(expected, abs=1e-6)
            assert (decision.worker_id, decision.i, decision.j) == where
            assert check_feasible(decision.route).feasible
        service.commit(fleet, decision)


@pytest.mark.parametrize('seed', range(40))
def test_pruned_candidates_are_infeasible(seed: int) -> None:
    rng = np.random.default_rng(seed)
    graph = random_graph(rng, 9)
    workers = random_workers(rng, graph, int(rng.integers(1, 4)), capacity=2)
    requests = random_requests(rng, graph, 6)
    service = InsertionService(SchedulerConfig())
    fleet = FleetState.create(workers, Router(graph), CostMetric.TIME)

    for request in requests:
        fleet.clock = max(fleet.clock, request.release_time)
        for worker in fleet.workers:
            route = fleet.routes[worker.id]
            indicators = service.compute_indicators(route, fleet.router)
            last = len(route.nodes) - 2
            for i in range(last + 1):
                for j in range(i, last + 1):
                    candidate = service.try_insert(route, indicators, request, i, j, fleet.router)
                    if candidate.status not in PRUNED:
                        continue
                    for m in range(j, last + 1) if candidate.prunes_row else (j,):
                        realised = realize_route(
                            insert_request(route, request, i, m),
                            route.metric,
                            fleet.router,
                            route.time_legs,
                        )
                        assert not check_feasible(realised).feasible, (worker.id, i, m)
        service.assign_request(fleet, request)


def test_indicators_need_a_feasible_route(line_router) -> None:
    worker = make_worker('w', 0, end_time=1250.0)
    request = make_request('r', 1, 2, ep=1000.0)
    route = realize_route(Subtour.empty(worker).insert(request, 0, 0), CostMetric.TIME, line_router)
    service = InsertionService(SchedulerConfig())

    with pytest.raises(IndicatorUndefinedError):
        service.compute_indicators(route, line_router)


def test_indicators_of_a_simple_route(line_router) -> None:
    worker = make_worker('w', 0, end_time=5000.0)
    request = make_request('r', 1, 2, ep=1000.0, ld=2000.0)
    route = realize_route(Subtour.empty(worker).insert(request, 0, 0), CostMetric.TIME, line_router)

    indicators = InsertionService(SchedulerConfig()).compute_indicators(route, line_router)

    assert indicators.ddl[2] == 2000.0
    assert indicators.ddl[3] == 5000.0
    # ld - [(a(d) - d(p)) + ps - b(p)] with a 900 s wait at the pickup
    assert indicators.ddl[1] == pytest.approx(2800.0)
    assert indicators.slack[2] == pytest.approx(5000.0 - 1300.0)
    assert indicators.slack[1] == pytest.approx(2000.0 - 1100.0)
    assert indicators.slack[0] == pytest.approx(min(2800.0 - 100.0, 900.0 + 900.0))


def test_capacity_prunes_the_whole_row(line_router) -> None:
    worker = make_worker('w', 0, capacity=2)
    held = make_request('a', 1, 3, ep=1000.0, load=2)
    route = realize_route(Subtour.empty(worker).insert(held, 0, 0), CostMetric.TIME, line_router)
    service = InsertionService(SchedulerConfig())
    indicators = service.compute_indicators(route, line_router)

    candidate = service.try_insert(
        route, indicators, make_request('b', 2, 3, ep=1000.0), 1, 1, line_router
    )

    assert candidate.status is CandidateStatus.PRUNED_CAPACITY
    assert candidate.prunes_row


def test_tight_deadline_prunes_on_slack(line_router) -> None:
    worker = make_worker('w', 0)
    tight = make_request('a', 1, 2, ep=100.0, ld=200.0)
    route = realize_route(Subtour.empty(worker).insert(tight, 0, 0), CostMetric.TIME, line_router)
    service = InsertionService(SchedulerConfig())
    indicators = service.compute_indicators(route, line_router)

    candidate = service.try_insert(
        route, indicators, make_request('b', 3, 2, ep=0.0), 0, 1, line_router
    )

    assert candidate.status is CandidateStatus.PRUNED_SLACK
    assert candidate.prunes_row


def test_detour_pairs(line_router) -> None:
    worker = make_worker('w', 0)
    a = make_request('a', 1, 2, ep=1000.0)
    b = make_request('b', 2, 3, ep=1000.0)
    route = realize_route(Subtour.empty(worker).insert(a, 0, 0), CostMetric.TIME, line_router)

    assert detour_pairs(route, b, 1, 1) == {('p_a', 'p_b'), ('p_b', 'd_b'), ('d_b', 'd_a')}
    assert detour_pairs(route, b, 0, 2) == {
        ('s_w', 'p_b'),
        ('p_b', 'p_a'),
        ('d_a', 'd_b'),
        ('d_b', 'e_w'),
    }


def test_distance_metric_falls_back_to_time_optimal_detours(two_path_case) -> None:
    graph, request, worker = two_path_case
    fleet = FleetState.create([worker], Router(graph), CostMetric.DISTANCE)
    fleet.clock = request.release_time
    service = InsertionService(SchedulerConfig(metric=CostMetric.DISTANCE))

    assert not service.best_insertion(fleet, request).accepted

    decision = service.assign_request(fleet, request)

    assert decision.accepted
    assert decision.contingency
    assert ('p_r', 'd_r') in decision.route.time_legs
    assert decision.route.length == pytest.approx(3000.0)
    assert fleet.assignments == {'r': 'w'}


def test_time_metric_has_no_contingency(two_path_case) -> None:
    graph, request, worker = two_path_case
    fleet = FleetState.create([worker], Router(graph), CostMetric.TIME)
    fleet.clock = request.release_time

    decision = InsertionService(SchedulerConfig()).assign_request(fleet, request)

    assert decision.accepted and not decision.contingency
    assert decision.route.travel_time == pytest.approx(3420.0)


def test_release_gate_keeps_the_past_fixed(line_router) -> None:
    worker = make_worker('w', 0)
    early = make_request('a', 1, 2, ep=100.0, rt=0.0)
    fleet = FleetState.create([worker], line_router, CostMetric.TIME)
    service = InsertionService(SchedulerConfig())
    service.assign_request(fleet, early)

    late = make_request('b', 1, 3, ep=500.0, rt=500.0)
    fleet.clock = 500.0
    decision = service.assign_request(fleet, late)

    assert decision.accepted
    assert decision.i >= 2
    assert [n.name for n in fleet.routes['w'].nodes][:3] == ['s_w', 'p_a', 'd_a']


def test_pickup_before_the_shift_end_waits_for_the_release(line_router) -> None:
    fleet = FleetState.create([make_worker('w', 0)], line_router, CostMetric.TIME)
    request = make_request('r', 1, 2, ep=500.0, rt=500.0)
    fleet.clock = request.release_time

    decision = InsertionService(SchedulerConfig()).assign_request(fleet, request)

    route = decision.route
    assert [n.name for n in route.nodes] == ['s_w', 'p_r', 'd_r', 'e_w']
    assert route.labels[0].departure == 0.0
    assert route.legs[0].departure == pytest.approx(500.0)
    assert route.labels[1].arrival == pytest.approx(600.0)
    assert route.labels[1].waiting == 0.0
    assert relabel_suffix(route, 1, line_router).labels == route.labels


def test_forecast_pickup_is_not_held(line_router) -> None:
    worker = make_worker('w', 0)
    route = realize_route(Subtour.empty(worker), CostMetric.TIME, line_router)
    forecast = make_request('f', 1, 2, ep=500.0, probability=0.9)

    seeded = realize_route(insert_request(route, forecast, 0, 0), CostMetric.TIME, line_router)

    assert seeded.labels[1].arrival == pytest.approx(100.0)
    assert seeded.labels[1].waiting == pytest.approx(400.0)


def test_vehicle_type_restricts_workers() -> None:
    graph = make_graph(
        [(0, 1, 1000.0, 100.0), (1, 0, 1000.0, 100.0)], vehicle_types=('car', 'van')
    )
    fleet = FleetState.create(
        [make_worker('v', 0, vehicle_type='van'), make_worker('w', 1)],
        Router(graph),
        CostMetric.TIME,
    )
    decision = InsertionService(SchedulerConfig()).assign_request(
        fleet, make_request('r', 0, 1, ep=100.0)
    )
    assert decision.worker_id == 'w'


def test_ties_go_to_the_smallest_worker_id(line_router) -> None:
    fleet = FleetState.create(
        [make_worker('b', 0), make_worker('a', 0)], line_router, CostMetric.TIME
    )
    decision = InsertionService(SchedulerConfig()).assign_request(
        fleet, make_request('r', 1, 2, ep=100.0)
    )
    assert decision.worker_id == 'a'


def test_rejection_is_recorded(line_router) -> None:
    fleet = FleetState.create([make_worker('w', 0, end_time=150.0)], line_router, CostMetric.TIME)
    decision = InsertionService(SchedulerConfig()).assign_request(
        fleet, make_request('r', 1, 2, ep=100.0)
    )
    assert not decision.accepted
    assert fleet.rejected == ['r']


def test_workload_balancer_penalises_overloaded_workers(line_router) -> None:
    busy, idle = make_worker('a', 0), make_worker('b', 3)
    fleet = FleetState.create([busy, idle], line_router, CostMetric.TIME)
    fleet.routes['a'] = realize_route(
        Subtour.empty(busy).insert(make_request('r', 1, 2, ep=100.0), 0, 0),
        CostMetric.TIME,
        line_router,
    )
    fleet.clock = 500.0
    service = InsertionService(SchedulerConfig(wb_enabled=True, wb_threshold=1.5, wb_penalty=2.0))

    assert service.apply_wb(10.0, busy, fleet) == pytest.approx(30.0)
    assert service.apply_wb(10.0, idle, fleet) == pytest.approx(10.0)


def test_workload_balancer_ignores_workers_off_shift(line_router) -> None:
    busy, later = make_worker('a', 0), make_worker('b', 3, start_time=10000.0)
    fleet = FleetState.create([busy, later], line_router, CostMetric.TIME)
    fleet.routes['a'] = realize_route(
        Subtour.empty(busy).insert(make_request('r', 1, 2, ep=100.0), 0, 0),
        CostMetric.TIME,
        line_router,
    )
    fleet.clock = 500.0
    service = InsertionService(SchedulerConfig(wb_enabled=True))

    assert service.wb_multiplier(busy, fleet) == 1.0


def test_scheduler_config_bounds() -> None:
    with pytest.raises(ConfigurationError):
        SchedulerConfig(wb_threshold=0.5)
    with pytest.raises(ConfigurationError):
        SchedulerConfig(wb_penalty=0.0)
    assert SchedulerConfig(metric=CostMetric.DISTANCE, norm=Norm.L2, rr_enabled=True).label == 'dist-l2+rr'


def _small_instance(seed: int) -> Instance:
    generated = generate_instance(seed, 8, 3, side=6)
    graph = graph_from_schema(generated.graph)
    return build_instance(graph, generated.instance)


@pytest.mark.parametrize('seed', range(20))
def test_relocation_never_worsens_the_objective(seed: int) -> None:
    instance = _small_instance(seed)
    config = SchedulerConfig(rr_enabled=True)
    service = InsertionService(config)
    fleet = FleetState.create(instance.workers, Router(instance.graph), config.metric)

    for request in instance.requests:
        fleet.clock = max(fleet.clock, request.release_time)
        service.assign_request(fleet, request)
        before = fleet.objective(config.metric, config.norm)
        assigned = len(fleet.assignments)

        moves = service.relocate_requests(fleet)

        after = fleet.objective(config.metric, config.norm)
        assert after <= before + Tolerance.IMPROVEMENT
        assert len(fleet.assignments) == assigned
        for move in moves:
            assert move.objective_after < move.objective_before
        assert all(check_feasible(route).feasible for route in fleet.routes.values())
