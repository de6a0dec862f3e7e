import pytest

from _support import catalog, ieee33_cp, ieee33_zip

# (criterion, status, detail) lines printed at the end of the run
ACCEPTANCE_LINES: list[tuple[str, str, str]] = []


@pytest.fixture(scope="session")
def cat():
    return catalog()


@pytest.fixture(scope="session")
def feeder_zip():
    return ieee33_zip()


@pytest.fixture(scope="session")
def feeder_cp():
    return ieee33_cp()


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for name, status, detail in ACCEPTANCE_LINES:
        terminalreporter.write_line(f"[{status}] {name}: {detail}")
