import os

import pytest
from hypothesis import settings

from contentgen.corpus import build_vocab, read_canonical, to_context_windows
from contentgen.lexicon import load_function_lexicon

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")

DATA = os.path.join(os.path.dirname(__file__), "data")
TOY_CORPUS = os.path.join(DATA, "toy_dialogs.txt")


@pytest.fixture(scope="session")
def lex():
    return load_function_lexicon()


@pytest.fixture(scope="session")
def toy_dialogs():
    return read_canonical(TOY_CORPUS)


@pytest.fixture(scope="session")
def toy_vocab(toy_dialogs):
    return build_vocab(toy_dialogs, 10000)


@pytest.fixture(scope="session")
def toy_windows(toy_dialogs):
    return [w for d in toy_dialogs for w in to_context_windows(d)]


# One pass/fail line per acceptance criterion, printed after the run.
_criteria: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion checked by this test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    key = (marker.args[0], marker.args[1])
    if report.when == "call" or report.outcome != "passed":
        status = "SKIP" if report.skipped else ("PASS" if report.passed else "FAIL")
        previous = _criteria.get(key)
        if previous in (None, "PASS") or status == "FAIL":
            _criteria[key] = status


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for (number, title), status in sorted(_criteria.items()):
        terminalreporter.write_line(f"criterion {number} [{status}] {title}")
