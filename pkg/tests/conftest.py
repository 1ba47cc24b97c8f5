import numpy as np
import pytest

from thermotled import kernels, presets
from thermotled.materials import HyperelasticParams
from thermotled.mesh import load_mesh

UNIT_TET = """$nodes 4
1 0 0 0
2 1 0 0
3 0 1 0
4 0 0 1
$elements 1 T4
1 1 2 3 4
"""

UNIT_CUBE = """$nodes 8
1 0 0 0
2 1 0 0
3 1 1 0
4 0 1 0
5 0 0 1
6 1 0 1
7 1 1 1
8 0 1 1
$elements 1 H8
1 1 2 3 4 5 6 7 8
"""

MU = presets.SOFT_TISSUE_MU
KAPPA = presets.SOFT_TISSUE_KAPPA


@pytest.fixture
def unit_tet():
    return load_mesh(UNIT_TET)


@pytest.fixture
def unit_cube():
    return load_mesh(UNIT_CUBE)


@pytest.fixture
def tissue():
    return presets.soft_tissue()


@pytest.fixture
def liver():
    return presets.liver()


@pytest.fixture
def iso_params():
    return HyperelasticParams(MU, KAPPA)


@pytest.fixture
def ti_params():
    return HyperelasticParams(MU, KAPPA, 2.0 * MU)


@pytest.fixture(params=kernels.available_backends())
def backend(request):
    return kernels.load_backend(request.param)


def random_spd(rng, n, spread=0.2):
    """Right Cauchy-Green tensors of random deformation gradients near identity."""
    F = np.eye(3) + spread * rng.uniform(-1, 1, size=(n, 3, 3))
    F[np.linalg.det(F) <= 0] = np.eye(3)
    return np.swapaxes(F, 1, 2) @ F


# one line per acceptance criterion, printed after the run
ACCEPTANCE: dict[int, tuple[str, bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        name, ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d} {'PASS' if ok else 'FAIL'}  {name}: {detail}")
