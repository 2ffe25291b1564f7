import numpy as np
import pytest
from hypothesis import settings

from magshape.problems.die_press import DiePressConfig, DiePressModel

settings.register_profile("default", max_examples=50, deadline=None)
settings.load_profile("default")


@pytest.fixture(scope="session")
def de_model():
    return DiePressModel(DiePressConfig())


@pytest.fixture(scope="session")
def affine_model():
    return DiePressModel(DiePressConfig(parametrization="affine"))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# one summary line per acceptance criterion, collected from test_acceptance.py
_CRITERIA: dict[tuple[int, str], tuple[str, str]] = {}


@pytest.fixture
def criterion(record_property):
    def record(number: int, title: str, detail: str = ""):
        record_property("criterion", number)
        record_property("title", title)
        record_property("detail", detail)
    return record


def pytest_runtest_logreport(report):
    if report.when != "call":
        return
    props = dict(report.user_properties)
    if "criterion" in props:
        _CRITERIA[props["criterion"], props["title"]] = (report.outcome, props["detail"])


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for k, title in sorted(_CRITERIA):
        outcome, detail = _CRITERIA[k, title]
        status = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"criterion {k}: {status}  {title}  [{detail}]")
