import pytest
from hypothesis import settings

from rlz.syntax import Level

settings.register_profile("rlz", max_examples=60, deadline=None)
settings.load_profile("rlz")

ST, F, FW = Level.ST, Level.F, Level.FOMEGA


@pytest.fixture(params=[ST, F, FW], ids=lambda lv: lv.value)
def level(request):
    return request.param


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: the numbered acceptance criteria")


def pytest_terminal_summary(terminalreporter, config):
    from test_acceptance import ACCEPTANCE_LINES
    lines = config.stash.get(ACCEPTANCE_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
