import numpy as np
import pytest

from fedheat import kernels


@pytest.fixture(scope="session", autouse=True)
def _warm_kernels():
    # compile (or load from disk cache) every jitted kernel once, so no
    # individual test pays the JIT bill or times compilation by accident
    kernels.warmup()
    kernels.set_workers(kernels.max_workers())


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
