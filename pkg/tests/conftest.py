import pytest

from mdl_lstm.golden import build_golden
from mdl_lstm.grammar import GrammarConfig, make_splits


@pytest.fixture(scope="session")
def golden():
    return build_golden()


@pytest.fixture(scope="session")
def splits():
    return make_splits(GrammarConfig(0.3, 100), 1000, (1, 1500))


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def criterion_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
