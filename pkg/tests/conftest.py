import pytest

from wsn_tradeoff.gmrf import ConstantDecay, IIDDecay, build_model
from wsn_tradeoff.scenarios import chain3_scenario, indep_scenario, line_layout
from wsn_tradeoff.topology import build_nn_graph


@pytest.fixture(scope="session")
def indep8():
    return indep_scenario(8, 100.0, 1.0)


@pytest.fixture(scope="session")
def chain3():
    return chain3_scenario(10.0, 1.0, 0.25)


@pytest.fixture
def chain_model():
    layout = line_layout(3)
    return build_model(layout, build_nn_graph(layout), 1.0, ConstantDecay(0.25))


def iid_model(k, sigma_sq=1.0):
    layout = line_layout(k)
    return build_model(layout, build_nn_graph(layout), sigma_sq, IIDDecay())


def random_layout(rng, n):
    from wsn_tradeoff.topology import SensorLayout

    return SensorLayout(rng.uniform(0, 10, size=(n, 2)))
