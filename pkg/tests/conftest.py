import pytest

from surro.climates import default_locations


@pytest.fixture(scope="session")
def locations():
    return default_locations()


@pytest.fixture(scope="session")
def years(locations):
    return {k: loc.year() for k, loc in locations.items()}


@pytest.fixture(scope="session")
def alt_years(locations):
    return {k: loc.year(alternate=True) for k, loc in locations.items()}


ACCEPTANCE_LINES = {}


def record_criterion(number, passed, detail):
    line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
