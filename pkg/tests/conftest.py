import pytest

from csdtrain import fixtures
from csdtrain.calibration import calibrate_default
from csdtrain.simengine import EnergyModelParams, Pipeline, SyncModel


@pytest.fixture(scope="session")
def cluster():
    return fixtures.cluster()


@pytest.fixture(scope="session")
def mobilenet():
    return fixtures.network("mobilenetv2")


@pytest.fixture(scope="session")
def calibrated(cluster, mobilenet):
    """(pipeline, sync_fit, energy_fit) fitted to the shipped energy table."""
    pipe = Pipeline(cluster)
    sync_fit, energy_fit = calibrate_default(
        pipe,
        {"mobilenetv2": mobilenet},
        fixtures.energy_targets(),
        SyncModel.from_cluster(cluster),
        EnergyModelParams.from_cluster(cluster),
    )
    return pipe, sync_fit, energy_fit


_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line for a criterion; the lines are echoed at session end."""

    def record(tag: str, ok: bool, detail: str) -> bool:
        line = f"{'PASS' if ok else 'FAIL'} {tag}: {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
