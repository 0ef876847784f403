import sys
from pathlib import Path

import pytest

from rrara.world import ObjectSpec, Rect, ScenarioConfig

FIXTURES = Path(__file__).parent / "fixtures"


def make_config(**overrides) -> ScenarioConfig:
    base = dict(
        width=5,
        height=5,
        objects=(ObjectSpec(1, (0, 4), 5.0),),
        shelter=Rect(4, 0, 4, 0),
        agent_start=(2, 2),
        initial_fires=(),
        spread_prob=0.0,
        visibility_radius=10,
        frame_budget=500,
    )
    base.update(overrides)
    return ScenarioConfig(**base)


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
