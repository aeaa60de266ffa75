import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spdefind.exceptions import RankDeficientWarning
from spdefind.stlsq import STLSQRegressor, StlsqConfig, stlsq, stlsq_iterations


def orthonormal(n, k, seed=0):
    q, _ = np.linalg.qr(np.random.default_rng(seed).normal(size=(n, k)))
    return q


def test_orthonormal_example():
    D = orthonormal(50, 3)
    coef, active = stlsq(D, 2 * D[:, 0] + 0.1 * D[:, 1])
    np.testing.assert_array_equal(active, [True, False, False])
    assert coef[0] == pytest.approx(2.0)
    assert coef[1] == 0.0 and coef[2] == 0.0


def test_zero_threshold_is_least_squares(rng):
    D, y = rng.normal(size=(30, 4)), rng.normal(size=30)
    coef, active = stlsq(D, y, StlsqConfig(threshold=0.0))
    assert active.all()
    np.testing.assert_allclose(coef, np.linalg.lstsq(D, y, rcond=None)[0])


def problem(seed):
    r = np.random.default_rng(seed)
    D = r.normal(size=(60, 6))
    beta = r.choice([0.0, 0.0, 1.0, -2.0, 0.4], size=6)
    return D, D @ beta + 0.3 * r.normal(size=60)


@given(st.integers(0, 10_000), st.floats(0.05, 1.5))
def test_stlsq_invariants(seed, lam):
    D, y = problem(seed)
    cfg = StlsqConfig(threshold=lam)
    coef, active = stlsq(D, y, cfg)
    assert np.all(coef[~active] == 0.0)
    assert np.all(np.abs(coef[active]) >= lam)
    # idempotence: refitting on the returned support keeps it
    if active.any():
        sub, sub_active = stlsq(D[:, active], y, cfg)
        assert sub_active.all()
        np.testing.assert_allclose(sub, coef[active])


@given(st.integers(0, 10_000))
def test_support_never_grows(seed):
    D, y = problem(seed)
    sizes = []
    for iters in range(1, 8):
        _, active, _ = stlsq_iterations(D, y, StlsqConfig(threshold=0.6, max_iters=iters))
        sizes.append(active.sum())
    assert all(b <= a for a, b in zip(sizes, sizes[1:]))


def test_rank_deficient_warns(rng):
    x = rng.normal(size=20)
    D = np.column_stack([x, x, rng.normal(size=20)])
    with pytest.warns(RankDeficientWarning):
        stlsq(D, 3 * x)


def test_config_validation():
    with pytest.raises(ValueError):
        StlsqConfig(threshold=-1)
    with pytest.raises(ValueError):
        StlsqConfig(max_iters=0)


def test_regressor(rng):
    D = orthonormal(40, 4, seed=3)
    y = 1.5 * D[:, 2]
    reg = STLSQRegressor(threshold=0.3).fit(D, y)
    np.testing.assert_array_equal(reg.support_, [False, False, True, False])
    np.testing.assert_allclose(reg.predict(D), y, atol=1e-12)
    assert reg.get_params() == {"threshold": 0.3, "max_iters": 20, "ridge": 0.0}
    with pytest.raises(ValueError):
        reg.predict(D[:, :3])
