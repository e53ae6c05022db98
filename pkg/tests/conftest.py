import numpy as np
import pytest

from pbto import nlp, scenarios


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture(scope="session")
def plane_problem():
    return nlp.assemble(scenarios.figure3_scenario())


@pytest.fixture(scope="session")
def baseline_problem():
    return nlp.assemble(scenarios.figure3_scenario(mode="baseline"))


@pytest.fixture(scope="session")
def standing():
    sc = scenarios.standing_scenario(n_nodes=10, T_total=1.0, name="standing")
    return nlp.assemble(sc), scenarios.standing_solution(sc)
