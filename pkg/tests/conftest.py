from __future__ import annotations

import numpy as np
import pytest

from cmctube.approx import CorrectorSet, corrector_scheme
from cmctube.geometry import ellipsoid, find_closed_geodesic, flat_line, latitude_circle, plane, planar_ellipse, sphere
from cmctube.tube import make_context


@pytest.fixture(scope="session")
def flat_curve():
    return flat_line(plane(), 2 * np.pi, 16)


@pytest.fixture(scope="session")
def equator():
    return latitude_circle(sphere(), 0.0, 32)


@pytest.fixture(scope="session")
def ellipse_k():
    return find_closed_geodesic(ellipsoid(), planar_ellipse(1.0, 1.2, 64))


@pytest.fixture(scope="session")
def flat_ctx(flat_curve):
    return make_context(flat_curve, 0.3, cap_resolution=16)


@pytest.fixture(scope="session")
def equator_ctx(equator):
    return make_context(equator, 0.2, cap_resolution=16)


@pytest.fixture(scope="session")
def ellipse_ctx(ellipse_k):
    return make_context(ellipse_k, 0.2, cap_resolution=24, n_y=64)


@pytest.fixture(scope="session")
def ellipse_correctors(ellipse_ctx):
    return corrector_scheme(ellipse_ctx, 3)


@pytest.fixture(scope="session")
def flat_correctors(flat_ctx):
    return CorrectorSet(flat_ctx)


_ACCEPTANCE: list[str] = []


@pytest.fixture(scope="session")
def acceptance_lines() -> list[str]:
    return _ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
