import numpy as np
import pytest

from gaspipe_dse import study
from gaspipe_dse.network import GasNetwork, Node, Pipeline, builtin_benchmark
from gaspipe_dse.simulator import bundled_scenario


@pytest.fixture(scope="session")
def bench() -> GasNetwork:
    return builtin_benchmark()


@pytest.fixture(scope="session")
def normal_run(bench):
    return study.run_study(bench, bundled_scenario("normal"))


def two_node(load_source_bar=27.8, length_km=5.0, diameter=0.6) -> GasNetwork:
    return GasNetwork.create(
        [Node(1, "source", load_source_bar), Node(2, "sink")],
        [Pipeline(1, 2, length_km, diameter)],
    )


def single_source_tree() -> GasNetwork:
    """Source 1 feeding 2 -> {3, 4}."""
    return GasNetwork.create(
        [Node(1, "source", 30.0), Node(2, "sink"), Node(3, "sink"), Node(4, "sink")],
        [Pipeline(1, 2, 4.0, 0.5), Pipeline(2, 3, 6.0, 0.4), Pipeline(2, 4, 3.0, 0.2)],
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
