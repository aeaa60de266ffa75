import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from spdefind.exceptions import NegativeVariance, ZeroTruth
from spdefind.library import generate_terms
from spdefind.metrics import GroundTruth, diffusion_amplitude, fpr, relative_l2
from spdefind.simulate import Grid1d, allen_cahn_model, heat_model, nagumo_model


def test_relative_l2_examples():
    assert relative_l2([1, 2], [1, 2]) == 0.0
    assert relative_l2([1, 0, -1], [0.9, 0, -1]) == pytest.approx(0.070711, abs=1e-6)
    with pytest.raises(ZeroTruth):
        relative_l2([0, 0], [1, 0])
    with pytest.raises(ValueError):
        relative_l2([1], [1, 2])


finite = st.floats(-1e3, 1e3, allow_nan=False)


@given(arrays(float, 5, elements=finite), arrays(float, 5, elements=finite),
       st.floats(0.01, 100).map(lambda c: c) | st.floats(-100, -0.01))
def test_relative_l2_homogeneous(a, b, c):
    if np.linalg.norm(a) < 1e-6:
        return
    assert relative_l2(c * a, c * b) == pytest.approx(relative_l2(a, b), rel=1e-9, abs=1e-12)


def test_fpr_examples():
    truth = np.zeros(35, dtype=bool)
    truth[:4] = True
    sel = truth.copy()
    assert fpr(sel, truth) == 0.0
    sel[10:14] = True
    assert fpr(sel, truth) == pytest.approx(11.4286, abs=1e-4)
    assert fpr(np.ones(35, bool), truth) == pytest.approx(100 * 31 / 35)


@given(arrays(bool, 12), arrays(bool, 12))
def test_fpr_range(sel, truth):
    v = fpr(sel, truth)
    assert 0 <= v <= 100
    assert (v == 0) == bool(np.all(~sel | truth))


def test_amplitude():
    assert diffusion_amplitude(1.0) == 1.0
    assert diffusion_amplitude(0.9801) == pytest.approx(0.99)
    assert diffusion_amplitude(4.0) == 2.0
    with pytest.warns(UserWarning):
        assert diffusion_amplitude(-1e-8) == 0.0
    with pytest.raises(NegativeVariance):
        diffusion_amplitude(-1e-3)


def test_truth_vectors():
    terms = generate_terms(6, 4)
    names = [t.name for t in terms]
    t = GroundTruth.from_model(nagumo_model(), terms)
    nz = {names[k]: v for k, v in enumerate(t.drift) if v}
    assert nz == {"u": 0.5, "u^2": 0.5, "u^3": -1.0, "u_xx": 1.0}
    assert {names[k] for k in np.flatnonzero(t.diffusion)} == {"1"}
    assert t.stacked.shape == (70,)
    ac = GroundTruth.from_model(allen_cahn_model(), generate_terms(6, 5))
    assert ac.drift_support.sum() == 3
    heat = GroundTruth.from_model(heat_model(noise=2.0), generate_terms(6, 5), Grid1d(20.0, 64), True)
    assert heat.diffusion[0] == pytest.approx(4.0 / (20.0 / 64))
