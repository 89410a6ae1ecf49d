import numpy as np
import pytest

from asquant.core import BACKGROUND, CHAMBER, CORNEO_SCLERA, IRIS, LabelMask, Point, ScanMeta, SpurPair
from asquant.phantom import PhantomSpec, generate


def plate_scene(gap_px=40, iris_px=50, contact=False, lens_gap=True, width=400):
    """Horizontal wall over two flat iris leaves: the parallel-plate angle.

    Wall edge at y = 19.5, anterior iris edge at 19.5 + gap, posterior iris
    edge ``iris_px`` lower; pupil columns 180..219 open down to a flat lens
    edge at y = 150.5 (or to the image border with ``lens_gap=False``).
    """
    top = 20 + gap_px
    bottom = top + iris_px
    height = 151 if not lens_gap else 200
    d = np.full((height, width), BACKGROUND, dtype=np.uint8)
    d[:20] = CORNEO_SCLERA
    d[20:bottom] = CHAMBER
    leaves = np.r_[0:180, 220:width]
    d[(20 if contact else top):bottom, leaves] = IRIS
    d[bottom:151, 180:220] = CHAMBER
    mask = LabelMask(d)
    spurs = SpurPair(Point(50.0, 19.5), Point(width - 51.0, 19.5))
    return mask, spurs


@pytest.fixture(scope="session")
def plate():
    return plate_scene()


@pytest.fixture(scope="session")
def meta10():
    return ScanMeta(10.0, 10.0)


@pytest.fixture(scope="session")
def default_phantom():
    return generate(PhantomSpec())


# ---------------------------------------------------- acceptance summary

_CRITERIA: dict = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py::test_criterion_" not in report.nodeid:
        return
    key = report.nodeid.split("::test_criterion_")[1].split("_")[0]
    if report.when == "call" or report.failed:
        _CRITERIA[key] = _CRITERIA.get(key, True) and report.passed


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_CRITERIA, key=int):
        terminalreporter.write_line(f"criterion {key}: {'PASS' if _CRITERIA[key] else 'FAIL'}")
