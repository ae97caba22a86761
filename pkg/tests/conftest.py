"""Shared pytest hooks: the acceptance suite's per-criterion PASS/FAIL summary."""

import pytest

_RESULTS_KEY = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_RESULTS_KEY] = {}


@pytest.fixture(scope="session")
def acceptance_results(pytestconfig):
    return pytestconfig.stash[_RESULTS_KEY]


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(_RESULTS_KEY, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        status, title, detail = results[n]
        line = f"criterion {n}: {status} - {title}"
        if detail:
            line += f" ({detail})"
        terminalreporter.write_line(line)
