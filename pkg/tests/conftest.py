from __future__ import annotations

import math

import pytest

from droopcert.freqresp import RationalTransferFunction, default_grid
from droopcert.units import (ConstantParams, GflPllParams, GfmDroopParams, VsmParams, gfl_srf_pll_tf, gfm_droop_tf,
                             unit_droop_matrix, vsm_tf)


@pytest.fixture(scope="session")
def grid():
    return default_grid()


@pytest.fixture(scope="session")
def analytic_tfs():
    return {
        "gfm": gfm_droop_tf(GfmDroopParams(0.05, 0.05)),
        "vsm": vsm_tf(VsmParams(2.0, 20.0)),
        "gfl": gfl_srf_pll_tf(GflPllParams()),
        "const": RationalTransferFunction.constant(0.05),
    }


@pytest.fixture(scope="session")
def reference_units():
    return {
        "gfm": unit_droop_matrix("GfmDroop", GfmDroopParams(0.05, 0.05)),
        "vsm": unit_droop_matrix("Vsm", VsmParams(2.0, 20.0)),
        "gfl": unit_droop_matrix("GflPll", GflPllParams()),
        "const": unit_droop_matrix("Constant", ConstantParams(0.05)),
    }


def wrap_deg(x: float) -> float:
    return (x + 180.0) % 360.0 - 180.0


def deg(x: float) -> float:
    return math.radians(x)


def pytest_terminal_summary(terminalreporter):
    from tests import acceptance_log

    if acceptance_log.LINES:
        terminalreporter.section("acceptance criteria")
        for line in acceptance_log.LINES:
            terminalreporter.write_line(line)
