import os
from pathlib import Path

for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(var, "1")

import numpy as np
import pytest

from intpolymin.poly import read_poly_file

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def diophantine():
    return read_poly_file(FIXTURES / "diophantine.poly", 2)


@pytest.fixture(scope="session")
def variety():
    return read_poly_file(FIXTURES / "variety.poly", 3)


@pytest.fixture(scope="session")
def univariate():
    return read_poly_file(FIXTURES / "univariate.poly", 1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
