import numpy as np
import pytest
from hypothesis import settings

from ares import load_scenario

settings.register_profile("ares", deadline=None, max_examples=60)
settings.load_profile("ares")


@pytest.fixture(scope="session")
def scenario():
    return load_scenario()


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


_VERDICTS: dict[int, str] = {}


@pytest.fixture
def verdict(request):
    """Record and print one PASS/FAIL line for an acceptance criterion."""
    reporter = request.config.pluginmanager.get_plugin("terminalreporter")

    def record(k: int, ok: bool, detail: str) -> bool:
        line = f"{'PASS' if ok else 'FAIL'} criterion {k}: {detail}"
        _VERDICTS[k] = line
        if reporter is not None:
            reporter.write_line("")
            reporter.write_line(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for k in sorted(_VERDICTS):
            terminalreporter.write_line(_VERDICTS[k])
