from typing import Tuple

import pytest
from builders import line_graph, make_graph, make_request, make_worker

from td_dispatch.core.db import Database
from td_dispatch.features.pd_core.data import Request, Worker
from td_dispatch.features.td_metric.data import RoadGraph
from td_dispatch.features.td_metric.service import Router


@pytest.fixture
def line() -> RoadGraph:
    return line_graph()


@pytest.fixture
def line_router(line: RoadGraph) -> Router:
    return Router(line)


@pytest.fixture
def two_path_case() -> Tuple[RoadGraph, Request, Worker]:
    """
    Pickup at 7:30 on vertex 1, delivery by 8:30 on vertex 2. The short way
    through vertex 3 is 1000 m and arrives at 8:45; the long way through
    vertex 4 is 3000 m and arrives at 8:27.
    """
    graph = make_graph(
        [
            (1, 3, 500.0, 2250.0),
            (3, 2, 500.0, 2250.0),
            (1, 4, 1500.0, 1710.0),
            (4, 2, 1500.0, 1710.0),
        ],
        vertices=[1, 2, 3, 4],
    )
    request = make_request('r', 1, 2, ep=27000.0, ld=30600.0, rt=26000.0)
    worker = make_worker('w', 1, start_time=26000.0, end_time=36000.0, end=2)
    return graph, request, worker


@pytest.fixture
def run_database():
    Database.configure('sqlite:///:memory:')
    yield Database.get_instance()
    Database.close()
    Database.configure(None)
