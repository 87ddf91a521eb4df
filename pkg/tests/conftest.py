import glob
import sys
from pathlib import Path

import pytest

from loadpatch.ingestion import align_and_segment, ingest_load_csv, ingest_temperature_csv, write_days
from loadpatch.preprocess import prepare, write_prepared
from loadpatch.synthetic import generate

SEED = 7

# the golden-prompt generator lives beside its fixtures and is imported by tests
sys.path.insert(0, str(Path(__file__).parent / "fixtures"))


@pytest.fixture(scope="session")
def raw_dir(tmp_path_factory):
    """Eleven synthetic meters over one summer plus hourly temperature."""
    out = tmp_path_factory.mktemp("raw")
    generate(out)
    return out


@pytest.fixture(scope="session")
def days(raw_dir):
    temp = ingest_temperature_csv(raw_dir / "temperature.csv")
    out = []
    for path in sorted(glob.glob(str(raw_dir / "user*.csv"))):
        user = path.rsplit("/", 1)[-1][:-4]
        out += align_and_segment(ingest_load_csv(path, user), temp)
    return out


@pytest.fixture(scope="session")
def prepared(days):
    return prepare(days, SEED)


@pytest.fixture(scope="session")
def prepared_file(tmp_path_factory, prepared):
    path = tmp_path_factory.mktemp("prep") / "prepared.jsonl"
    write_prepared(prepared, path)
    return path


@pytest.fixture(scope="session")
def days_file(tmp_path_factory, days):
    path = tmp_path_factory.mktemp("days") / "days.jsonl"
    write_days(days, path)
    return path


# -- acceptance summary ----------------------------------------------------------

_ACCEPTANCE: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, name): acceptance criterion covered by a test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when != "call" and report.passed:
        return
    number, name = marker.args
    if report.failed or number not in _ACCEPTANCE:
        _ACCEPTANCE[number] = (name, "FAIL" if report.failed else "PASS")


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        name, verdict = _ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:>2} {verdict}  {name}")
