import numpy as np
import pytest

from qubitrad import core_data
from qubitrad.geometry import parse_geometry
from qubitrad.transport import build_physics


@pytest.fixture(scope="session")
def library():
    return core_data.load_library()


@pytest.fixture(scope="session")
def nuclides():
    return core_data.NuclideLibrary()


def make_model(text):
    return parse_geometry(text, source="<test>")


def physics_for(model, library, **kw):
    return build_physics(library, model.materials, **kw)


# bare chip in vacuum, dimensions of the bundled chip (mm)
BARE_CHIP = "volume chip box 5.95 3.5 0.1625 silicon world 0 0 0 active\n"


@pytest.fixture(scope="session")
def bare_chip():
    return make_model(BARE_CHIP)


def slab_model(material, thickness_cm, half_side_mm=1000.0):
    hz = thickness_cm * 10.0 / 2.0
    return make_model(f"volume slab box {half_side_mm} {half_side_mm} {hz!r} {material} world 0 0 0 active\n")


def unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE_LINES = []


def record_criterion(number, ok, detail):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
