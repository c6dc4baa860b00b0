import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))  # respserver helper

from hllrt._kernel import _pykernel


def _load_compiled():
    try:
        from hllrt._kernel import _ckernel
    except ImportError:
        return None
    return _ckernel


@pytest.fixture(scope="session")
def pure_kernel():
    return _pykernel


@pytest.fixture(scope="session")
def compiled_kernel():
    kernel = _load_compiled()
    if kernel is None:
        pytest.skip("compiled kernel not built")
    return kernel
