import pytest

from metroslice.config import build_world, default_scenario_path, load_scenario


@pytest.fixture(scope="session")
def scenario():
    # Loaded once; tests must not mutate it (use dataclasses.replace).
    return load_scenario(default_scenario_path())


@pytest.fixture()
def world(scenario):
    return build_world(scenario)
