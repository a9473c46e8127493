import pytest

from btw.config import settings
from btw.dsl import parse
from btw.engine import init_instance, load_scenario

from helpers import ROAD_CLOSURES, SCENARIOS, build


@pytest.fixture(autouse=True)
def default_settings():
    saved = settings.model_dump()
    yield
    for name, value in saved.items():
        setattr(settings, name, value)


@pytest.fixture(scope="session")
def road_closures_text():
    return ROAD_CLOSURES.read_text(encoding="utf-8")


@pytest.fixture(scope="session")
def road_closures_ast(road_closures_text):
    return parse(road_closures_text, str(ROAD_CLOSURES))


@pytest.fixture
def road_closures(road_closures_text):
    return build(road_closures_text, str(ROAD_CLOSURES))


@pytest.fixture
def scenario_state(road_closures):
    def make(name: str, seed: int = 0):
        registry, model = road_closures
        return init_instance(model, registry, load_scenario(SCENARIOS / f"{name}.jsonl"), seed)
    return make
