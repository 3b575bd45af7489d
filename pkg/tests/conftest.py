import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from kgaudit import backend  # noqa: E402


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    # compile the numba lane once so timed tests measure compute, not JIT
    backend.warmup()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
