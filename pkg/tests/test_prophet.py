import pytest
from builders import make_request, make_worker

from td_dispatch.core.exceptions import ConfigurationError, ConsistencyError
from td_dispatch.features.insertion.data import FleetState, SchedulerConfig
from td_dispatch.features.pd_core.data import CostMetric
from td_dispatch.features.pd_core.service import check_feasible
from td_dispatch.features.prophet.data import BindingStatus, ForecastBinding, ProphetConfig
from td_dispatch.features.prophet.service import ProphetService


def _names(route) -> list:
    return [node.name for node in route.nodes]


def _seeded(router, forecast, **worker) -> tuple:
    fleet = FleetState.create([make_worker('w', 0, **worker)], router, CostMetric.TIME)
    service = ProphetService(SchedulerConfig())
    service.seed_forecasts(fleet, [forecast])
    return service, fleet


def test_unreliable_forecast_loses_its_delivery(line_router) -> None:
    forecast = make_request('f', 3, 2, ep=5000.0, probability=0.5)

    service, fleet = _seeded(line_router, forecast)

    route = fleet.routes['w']
    assert _names(route) == ['s_w', 'p_f', 'e_w']
    assert service.bindings['f'].status is BindingStatus.PENDING
    assert service.bindings['f'].worker_id == 'w'


def test_reliable_forecast_is_deactivated(line_router) -> None:
    forecast = make_request('f', 3, 2, ep=5000.0, probability=0.9)

    _, fleet = _seeded(line_router, forecast)

    route = fleet.routes['w']
    assert _names(route) == ['s_w', 'p_f', 'd_f', 'e_w']
    for node in route.nodes[1:3]:
        assert node.request.load == 0
        assert node.request.latest_delivery == float('inf')
    assert [label.load for label in route.labels] == [0, 0, 0, 0]
    assert check_feasible(route).feasible


def test_forecast_that_fits_nowhere_is_dropped(line_router) -> None:
    forecast = make_request('f', 3, 2, ep=5000.0, probability=0.9)

    service, fleet = _seeded(line_router, forecast, end_time=4000.0)

    assert service.bindings['f'].status is BindingStatus.DROPPED
    assert _names(fleet.routes['w']) == ['s_w', 'e_w']


def test_real_request_ignores_an_unreliable_forecast(line_router) -> None:
    forecast = make_request('f', 3, 2, ep=5000.0, probability=0.5)
    service, fleet = _seeded(line_router, forecast, end_time=20000.0)
    request = make_request('r', 1, 2, ep=1000.0)
    fleet.clock = request.release_time

    assert service.match_or_expire(fleet, request) is None
    decision = service.handle_real_request(fleet, request)

    assert decision.accepted
    assert (decision.i, decision.j) == (0, 1)
    assert decision.ignored == frozenset({'f'})
    assert decision.score == pytest.approx(-200.0)
    assert _names(fleet.routes['w']) == ['s_w', 'p_r', 'd_r', 'e_w']
    assert service.bindings['f'].status is BindingStatus.DROPPED
    assert fleet.assignments == {'r': 'w'}


def test_reliable_forecast_is_never_ignored(line_router) -> None:
    forecast = make_request('f', 3, 2, ep=5000.0, probability=0.9)
    service, fleet = _seeded(line_router, forecast)
    request = make_request('r', 1, 2, ep=1000.0)
    fleet.clock = request.release_time

    decision = service.handle_real_request(fleet, request)

    assert decision.accepted and not decision.ignored
    assert 'p_f' in _names(fleet.routes['w'])
    assert service.bindings['f'].pending


def test_matching_request_verifies_the_forecast(line_router) -> None:
    forecast = make_request('f', 1, 2, ep=1000.0, probability=0.9)
    service, fleet = _seeded(line_router, forecast)
    request = make_request('r', 1, 2, ep=1200.0, rt=500.0)

    decision = service.match_or_expire(fleet, request)

    assert decision is not None
    assert decision.matched_forecast == 'f'
    assert decision.worker_id == 'w'
    assert service.bindings['f'].status is BindingStatus.VERIFIED
    assert service.bindings['f'].real_id == 'r'
    route = fleet.routes['w']
    assert _names(route) == ['s_w', 'p_r', 'd_r', 'e_w']
    assert route.labels[1].departure == pytest.approx(1200.0)
    assert route.nodes[1].request.load == 1
    assert check_feasible(route).feasible
    assert fleet.assignments == {'r': 'w'}


def test_request_outside_the_window_does_not_match(line_router) -> None:
    forecast = make_request('f', 1, 2, ep=1000.0, probability=0.9)
    service, fleet = _seeded(line_router, forecast)

    far = make_request('r', 1, 2, ep=2000.0, rt=500.0)
    elsewhere = make_request('q', 2, 1, ep=1000.0, rt=500.0)

    assert service.match_or_expire(fleet, far) is None
    assert service.match_or_expire(fleet, elsewhere) is None
    assert service.bindings['f'].pending


def test_unreliable_forecast_matches_by_pickup_only(line_router) -> None:
    forecast = make_request('f', 1, 2, ep=1000.0, probability=0.5)
    service, fleet = _seeded(line_router, forecast)
    request = make_request('r', 1, 3, ep=1100.0, rt=500.0)

    decision = service.match_or_expire(fleet, request)

    assert decision is not None
    route = fleet.routes['w']
    assert _names(route) == ['s_w', 'p_r', 'd_r', 'e_w']
    assert check_feasible(route).feasible


def test_stale_forecast_expires(line_router) -> None:
    forecast = make_request('f', 1, 2, ep=1000.0, probability=0.9)
    service, fleet = _seeded(line_router, forecast)

    assert service.match_or_expire(fleet, 1800.0) is None
    assert service.bindings['f'].pending

    service.match_or_expire(fleet, 2000.0)

    assert service.bindings['f'].status is BindingStatus.EXPIRED
    assert _names(fleet.routes['w']) == ['s_w', 'e_w']
    assert fleet.clock == 2000.0


def test_binding_twice_is_inconsistent() -> None:
    binding = ForecastBinding('f', 'w')
    binding.bind('r')
    with pytest.raises(ConsistencyError):
        binding.bind('q')


def test_prophet_config_bounds() -> None:
    with pytest.raises(ConfigurationError):
        ProphetConfig(match_window=-1.0)
    with pytest.raises(ConfigurationError):
        ProphetConfig(probability_threshold=1.5)
