import sys
from pathlib import Path

import pytest

HERE = Path(__file__).parent
sys.path.insert(0, str(HERE))

CLEVELAND = HERE / "data" / "cleveland.csv"

# criterion lines collected by test_acceptance and echoed at the end of the run
ACCEPTANCE_LINES = {}


@pytest.fixture
def cleveland_path():
    return CLEVELAND


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
