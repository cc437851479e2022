import json
from pathlib import Path

import numpy as np
import pytest

from bernoulli_ledger import dynamics as dy
from bernoulli_ledger import spectral as sp

ORACLES = json.loads((Path(__file__).parent / "oracles" / "reference_values.json").read_text())

# Lines collected by test_acceptance.py, printed once at the end of the run.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def scalar(grid, func):
    """ScalarField from a function of the coordinate arrays."""
    return sp.ScalarField(grid, np.broadcast_to(func(*grid.coords()), grid.shape))


def random_scalar(grid, seed=0, kmax=4):
    """Real band-limited random field with wavenumbers |k_i| <= kmax."""
    rng = np.random.default_rng(seed)
    coef = np.zeros(grid.shape, dtype=complex)
    idx = np.ix_(*[np.r_[0 : kmax + 1, grid.n - kmax : grid.n]] * grid.dim)
    coef[idx] = rng.standard_normal(coef[idx].shape) + 1j * rng.standard_normal(coef[idx].shape)
    return sp.ScalarField(grid, np.real(np.fft.ifftn(coef)) * grid.n)


@pytest.fixture
def grid2():
    return sp.Grid(2, 64)


@pytest.fixture
def grid3():
    return sp.Grid(3, 32)


@pytest.fixture
def tg64():
    return dy.init_taylor_green_2d(sp.Grid(2, 64), nu=0.01)


@pytest.fixture
def random2d():
    return dy.init_random_solenoidal(sp.Grid(2, 128), seed=0, peak_wavenumber=3.0, nu=0.01)


@pytest.fixture
def random3d():
    return dy.init_random_solenoidal(sp.Grid(3, 32), seed=0, peak_wavenumber=2.0, nu=0.05)
