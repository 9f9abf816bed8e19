import json
from importlib import resources

import pytest

from resure._backend import available_backends

ACCEPTANCE_LINES = []


@pytest.fixture(params=sorted(available_backends()))
def kern(request):
    """Each importable kernel backend in turn."""
    return available_backends()[request.param]


@pytest.fixture(scope="session")
def demo_raw():
    return json.loads(resources.files("resure").joinpath("configs/demo.json").read_text())


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
