import numpy as np
import pytest

from crashsma import _backend, _pykernels
from crashsma.haar import decompose, reconstruct
from crashsma.sma import sma_estimate
from crashsma.threshold import pure_profile, threshold_grid

compiled = pytest.mark.skipif(not _backend.available(), reason="compiled extension not built")


def test_python_backend_always_available():
    assert _backend.get("python") is _pykernels


def test_unknown_backend():
    with pytest.raises(ValueError):
        _backend.get("fortran")


@compiled
@pytest.mark.parametrize("n", [2, 3, 7, 100, 1023, 4096])
def test_bitwise_parity(n):
    rng = np.random.default_rng(n)
    y = rng.poisson(rng.uniform(0.1, 8, n))
    a = decompose(y, backend="python")
    b = decompose(y, backend="compiled")
    np.testing.assert_array_equal(a.sums, b.sums)
    np.testing.assert_array_equal(a.diffs, b.diffs)
    s, d = a.sums[:, 0], a.diffs[:, 0]
    grid = threshold_grid(s, 40)
    np.testing.assert_array_equal(pure_profile(s, d, grid, backend="python"), pure_profile(s, d, grid, backend="compiled"))
    td = a.diffs * 0.5
    np.testing.assert_array_equal(
        reconstruct(a.coarse_sums, td, backend="python"), reconstruct(a.coarse_sums, td, backend="compiled")
    )
    np.testing.assert_array_equal(
        sma_estimate(y, backend="python").estimates, sma_estimate(y, backend="compiled").estimates
    )
