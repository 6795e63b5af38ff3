import math

import networkx as nx
import numpy as np
import pytest
from builders import make_graph, random_graph, random_ttf

from td_dispatch.core.exceptions import (
    ConfigurationError,
    FifoViolationError,
    InvalidPathError,
    MalformedFunctionError,
)
from td_dispatch.features.td_metric.data import LegMetric, TravelTimeFunction
from td_dispatch.features.td_metric.service import (
    Router,
    compose_arrival,
    earliest_arrival,
    evaluate_ttf,
    shortest_distance,
    snap_to_graph,
)


def _digraph(graph) -> nx.DiGraph:
    g = nx.DiGraph()
    g.add_nodes_from(graph.vertices)
    for arc in graph.arcs:
        g.add_edge(arc.tail, arc.head, length=arc.length)
    return g


def test_ttf_interpolates_and_wraps() -> None:
    f = TravelTimeFunction(100.0, ((0.0, 10.0), (50.0, 20.0)))

    assert evaluate_ttf(f, 0.0) == pytest.approx(10.0)
    assert evaluate_ttf(f, 25.0) == pytest.approx(15.0)
    assert evaluate_ttf(f, 75.0) == pytest.approx(15.0)
    assert evaluate_ttf(f, 125.0) == pytest.approx(15.0)
    assert evaluate_ttf(f, -25.0) == pytest.approx(15.0)


def test_constant_ttf() -> None:
    f = TravelTimeFunction.constant(42.0)
    assert f.is_constant
    assert all(evaluate_ttf(f, t) == 42.0 for t in (0.0, 1234.5, 86399.0, 200000.0))


def test_steep_descent_is_rejected() -> None:
    with pytest.raises(FifoViolationError):
        make_graph([(0, 1, 100.0, TravelTimeFunction(100.0, ((0.0, 100.0), (10.0, 50.0))))])


def test_descent_of_exactly_minus_one_is_allowed() -> None:
    graph = make_graph([(0, 1, 100.0, TravelTimeFunction(100.0, ((0.0, 60.0), (50.0, 10.0))))])
    assert len(graph.arcs) == 1


def test_empty_breakpoints_are_rejected() -> None:
    with pytest.raises(MalformedFunctionError):
        make_graph([(0, 1, 100.0, TravelTimeFunction(100.0, ()))])


def test_arrival_time_is_non_decreasing() -> None:
    rng = np.random.default_rng(7)
    f = random_ttf(rng)
    departures = np.sort(rng.uniform(0.0, 3 * f.period, size=10_000))
    arrivals = [t + evaluate_ttf(f, t) for t in departures]
    assert all(a <= b + 1e-9 for a, b in zip(arrivals, arrivals[1:]))


@pytest.mark.parametrize('seed', range(50))
def test_later_departures_never_arrive_earlier(seed: int) -> None:
    rng = np.random.default_rng(500 + seed)
    graph = random_graph(rng, int(rng.integers(3, 9)))
    successors = {}
    for arc in graph.arcs:
        successors.setdefault(arc.tail, []).append(arc.head)
    path = [int(rng.integers(len(graph.vertices)))]
    for _ in range(int(rng.integers(1, 8))):
        path.append(int(rng.choice(successors[path[-1]])))
    origin, target = path[0], int(rng.choice(sorted(graph.vertices)))

    for _ in range(20):
        t1, t2 = sorted(float(t) for t in rng.uniform(0.0, 3 * 7200.0, size=2))

        assert compose_arrival(path, graph, 'car', t1)[0] <= compose_arrival(path, graph, 'car', t2)[0] + 1e-6
        early = earliest_arrival(graph, 'car', origin, t1)[target][0]
        late = earliest_arrival(graph, 'car', origin, t2)[target][0]
        assert early <= late + 1e-6


@pytest.mark.parametrize('seed', range(200))
def test_earliest_arrival_matches_path_enumeration(seed: int) -> None:
    rng = np.random.default_rng(seed)
    graph = random_graph(rng, int(rng.integers(3, 8)))
    g = _digraph(graph)
    origin = int(rng.integers(len(graph.vertices)))
    departure = float(rng.uniform(0.0, 7200.0))

    labels = earliest_arrival(graph, 'car', origin, departure)

    for target in graph.vertices:
        if target == origin:
            assert labels[target][0] == departure
            continue
        best = min(
            compose_arrival(path, graph, 'car', departure)[0]
            for path in nx.all_simple_paths(g, origin, target)
        )
        assert labels[target][0] == pytest.approx(best, abs=1e-6)


@pytest.mark.parametrize('seed', range(20))
def test_time_optimal_leg_agrees_with_one_to_all_search(seed: int) -> None:
    rng = np.random.default_rng(1000 + seed)
    graph = random_graph(rng, 9)
    router = Router(graph)
    origin = int(rng.integers(9))
    departure = float(rng.uniform(0.0, 7200.0))
    labels = earliest_arrival(graph, 'car', origin, departure)

    for target in graph.vertices:
        leg = router.time_optimal_leg('car', origin, target, departure)
        assert leg.arrival == pytest.approx(labels[target][0], abs=1e-6)
        assert leg.path[0] == origin and leg.path[-1] == target
        arrival, length = compose_arrival(leg.path, graph, 'car', departure)
        assert arrival == pytest.approx(leg.arrival, abs=1e-6)
        assert length == pytest.approx(leg.length)
        assert router.travel_time_lower_bound('car', origin, target) <= leg.travel_time + 1e-6


@pytest.mark.parametrize('seed', range(20))
def test_shortest_distance_matches_networkx(seed: int) -> None:
    rng = np.random.default_rng(2000 + seed)
    graph = random_graph(rng, 10)
    expected = nx.single_source_dijkstra_path_length(_digraph(graph), 0, weight='length')

    labels = shortest_distance(graph, 0)

    assert set(labels) == set(expected)
    for vertex, distance in expected.items():
        assert labels[vertex][0] == pytest.approx(distance)


def test_distance_and_time_optimal_legs_differ(two_path_case) -> None:
    graph, _, _ = two_path_case
    router = Router(graph)

    shortest = router.leg('car', 1, 2, 27000.0, LegMetric.DISTANCE)
    fastest = router.leg('car', 1, 2, 27000.0, LegMetric.TIME)

    assert shortest.path == (1, 3, 2)
    assert shortest.length == pytest.approx(1000.0)
    assert shortest.arrival == pytest.approx(31500.0)
    assert fastest.path == (1, 4, 2)
    assert fastest.length == pytest.approx(3000.0)
    assert fastest.arrival == pytest.approx(30420.0)


def test_leg_to_the_same_vertex_is_empty(line_router) -> None:
    leg = line_router.time_optimal_leg('car', 2, 2, 500.0)
    assert leg.length == 0.0
    assert leg.travel_time == 0.0
    assert leg.path == (2,)


def test_unreachable_leg_has_infinite_arrival() -> None:
    router = Router(make_graph([(0, 1, 100.0, 10.0)]))

    leg = router.time_optimal_leg('car', 1, 0, 0.0)

    assert math.isinf(leg.arrival)
    assert leg.path == ()
    assert math.isinf(router.shortest_length(1, 0))


def test_compose_arrival_rejects_missing_arc(line) -> None:
    with pytest.raises(InvalidPathError):
        compose_arrival([0, 2], line, 'car', 0.0)


def test_compose_arrival_folds_along_the_path(line) -> None:
    arrival, length = compose_arrival([0, 1, 2, 3], line, 'car', 50.0)
    assert arrival == pytest.approx(350.0)
    assert length == pytest.approx(3000.0)


def test_unknown_vehicle_type(line) -> None:
    with pytest.raises(ConfigurationError):
        earliest_arrival(line, 'bike', 0, 0.0)


def test_snap_prefers_smallest_id_on_ties(line) -> None:
    assert snap_to_graph(line, (500.0, 0.0)) == 0
    assert snap_to_graph(line, (1600.0, 30.0)) == 2
    assert snap_to_graph(line, (9000.0, 0.0)) == 3


def test_snap_needs_coordinates() -> None:
    with pytest.raises(ConfigurationError):
        snap_to_graph(make_graph([(0, 1, 100.0, 10.0)]), (0.0, 0.0))
