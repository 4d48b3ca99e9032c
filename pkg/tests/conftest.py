import numpy as np
import pytest

import vesselbench.nn.functional as F


@pytest.fixture(autouse=True)
def _finite_guard():
    """Run the whole suite with the per-op NaN guard enabled."""
    old = F.CHECK_FINITE
    F.CHECK_FINITE = True
    yield
    F.CHECK_FINITE = old


def rel_close(analytic, numeric):
    """Max-norm relative gradient error: max|a - n| / max(scale, tiny),
    scale being the larger max-norm of the two gradients. Elementwise
    ratios are meaningless below the float32 finite-difference noise
    floor (~1e-7 * |f| / 2h), so the error is measured against the
    tensor's gradient scale."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = max(np.abs(analytic).max(), np.abs(numeric).max(), 1e-12)
    return float(np.abs(analytic - numeric).max() / scale), scale


def assert_grad_close(analytic, numeric, rtol):
    err, _ = rel_close(analytic, numeric)
    assert err < rtol, f"max relative gradient error {err:.3e} >= {rtol:g}"
