from pathlib import Path

import pytest

from marknav.world import BUNDLED_SCENARIOS, load_bundled_scenario

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def scenarios():
    """All four bundled scenarios, loaded once per session."""
    return {name: load_bundled_scenario(name) for name in BUNDLED_SCENARIOS}


@pytest.fixture(scope="session")
def fixtures_dir():
    return FIXTURES
