import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from camcp import load_builtin

GOLDEN = Path(__file__).parent / "golden"


@pytest.fixture(scope="session")
def travel_scenario():
    return load_builtin("travel")


@pytest.fixture(scope="session")
def wedding_scenario():
    return load_builtin("wedding_p5")


@pytest.fixture(scope="session")
def golden_dir():
    return GOLDEN
