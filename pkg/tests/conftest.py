import sys

import numpy as np
import pytest

from beamlab import (
    Elastic,
    KelvinVoigt,
    ModelSpec,
    NonsimpleThermo,
    ThermoTypeI,
    ThermoTypeII,
    TipBody,
)

ALL_LAWS = {
    "elastic": Elastic(),
    "kelvin_voigt": KelvinVoigt(),
    "thermo_type1": ThermoTypeI(),
    "thermo_type2": ThermoTypeII(),
    "nonsimple": NonsimpleThermo(),
}


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def default_tip():
    return TipBody()


@pytest.fixture(params=sorted(ALL_LAWS))
def law(request):
    return ALL_LAWS[request.param]


@pytest.fixture(params=["free", "hybrid"])
def boundary_tip(request):
    return TipBody() if request.param == "hybrid" else None


@pytest.fixture
def any_spec(law, boundary_tip):
    return ModelSpec(law=law, tip=boundary_tip)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[key])
