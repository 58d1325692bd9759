from importlib import resources
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from wardplanner.capacity import CapacityInstance
from wardplanner.demand import percentage_scenarios
from wardplanner.patients import derive_features, parse_patient_csv

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

DATA = Path(str(resources.files("wardplanner") / "data"))
TABLE4_LOS = [5, 3, 4, 4, 3, 1, 1, 5, 1, 1, 4, 1, 4, 2, 5]
ILLUSTRATIVE_BASE = {("COTE", "R1"): 16.67, ("T&O", "R1"): 19.01}


@pytest.fixture
def data_dir():
    return DATA


@pytest.fixture
def illustrative():
    return CapacityInstance.from_json(DATA / "illustrative_instance.json")


@pytest.fixture
def illustrative_demand():
    return percentage_scenarios(ILLUSTRATIVE_BASE, [1.0, 1.2, 0.8], [0.4, 0.3, 0.3],
                                ["COTE", "T&O"], ["R1"])


@pytest.fixture
def table4_records():
    res = parse_patient_csv(DATA / "table4_patients.csv")
    assert not res.rejects
    return res.records


@pytest.fixture
def table4_rows(table4_records):
    return derive_features(table4_records)


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
