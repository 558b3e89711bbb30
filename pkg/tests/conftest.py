import pytest

from zslkit import kernels


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    # compile the numba kernel once so timed tests measure runtime, not JIT
    kernels.warmup()
