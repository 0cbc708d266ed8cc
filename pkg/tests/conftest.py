from pathlib import Path

import numpy as np
import pytest

from osm_localizer.osm_ingest import GeoPoint, LocalFrame, build_geometry, parse_osm_xml
from osm_localizer.taxonomy import load_taxonomy

DATA = Path(__file__).parent / "data"
FIXTURE_ORIGIN = GeoPoint(48.0, 11.0)


@pytest.fixture(scope="session")
def data_dir() -> Path:
    return DATA


@pytest.fixture(scope="session")
def taxonomy():
    return load_taxonomy()


@pytest.fixture(scope="session")
def fixture_frame():
    return LocalFrame.at(FIXTURE_ORIGIN)


def load_canvas(name, taxonomy, frame):
    doc = parse_osm_xml((DATA / name).read_bytes())
    return doc, build_geometry(doc, frame, taxonomy)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance criteria report one line each; the summary repeats them in order
ACCEPTANCE_LINES: dict = {}


def record_acceptance(number: int, ok: bool, detail: str) -> None:
    line = f"ACCEPTANCE {number:2d} {'PASS' if ok else 'FAIL'}: {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
