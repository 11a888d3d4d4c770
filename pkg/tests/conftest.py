import time

import pytest

from mtlue.pipeline import DESK_CONFIG, default_fixture, fit_model

# filled by test_acceptance; printed once at the end of the session
ACCEPTANCE_LINES: dict[int, str] = {}
# wall-clock seconds of the shared session fixtures
TIMINGS: dict[str, float] = {}


@pytest.fixture(scope="session")
def fixture_corpus():
    return default_fixture(42)


@pytest.fixture(scope="session")
def desk_model(fixture_corpus):
    """Four-task model on the default synthetic fixture (about half a minute)."""
    start = time.perf_counter()
    model = fit_model(fixture_corpus, DESK_CONFIG)
    TIMINGS["desk_model"] = time.perf_counter() - start
    return model


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
