import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from pedsim.errors import DivisionError, ParameterError, ShapeError
from pedsim.metrics import compare_blocks, nmse, ssim, write_report_csv
from pedsim.signatures import SignatureMatrix


def _rand(seed, shape=(100, 100)):
    return np.random.default_rng(seed).normal(size=shape)


def test_nmse_identities():
    x = _rand(0)
    assert nmse(x, x) == 0.0
    assert nmse(2 * x, x) == 1.0


def test_nmse_small_perturbation():
    rng = np.random.default_rng(1)
    meas = rng.normal(size=(30, 30))
    meas /= np.linalg.norm(meas)
    u = rng.normal(size=meas.shape)
    u /= np.linalg.norm(u)
    eps = 1e-3
    assert abs(nmse(meas + eps * u, meas) - eps ** 2) < 1e-12


def test_nmse_reference_is_second_argument():
    a, b = _rand(2), _rand(3)
    assert nmse(a, b) != nmse(b, a)


def test_ssim_identical():
    x = _rand(4)
    assert abs(ssim(x, x) - 1) < 1e-12
    assert ssim(np.full((5, 5), 3.0), np.full((5, 5), 3.0)) == 1.0


def test_ssim_negated():
    x = _rand(5)
    x -= x.mean()
    assert ssim(-x, x) == pytest.approx(-1.0, abs=1e-12)


def test_ssim_independent_near_zero():
    for trial in range(20):
        a, b = _rand(100 + 2 * trial), _rand(101 + 2 * trial)
        assert abs(ssim(a, b)) < 0.1


@given(arrays(float, (6, 7), elements=st.floats(-100, 100)), arrays(float, (6, 7), elements=st.floats(-100, 100)))
def test_ssim_symmetric(a, b):
    assert ssim(a, b) == ssim(b, a)


def test_ssim_constant_inputs_stay_finite():
    a = np.zeros((4, 4))
    b = np.zeros((4, 4))
    b[0, 0] = 1.0
    assert np.isfinite(ssim(a, b))


def test_shape_and_division_errors():
    with pytest.raises(ShapeError):
        nmse(np.zeros((2, 3)), np.ones((3, 2)))
    with pytest.raises(ShapeError):
        ssim(np.zeros((2, 3)), np.ones((3, 2)))
    with pytest.raises(DivisionError):
        nmse(np.ones(4), np.zeros(4))
    with pytest.raises(ParameterError):
        nmse(np.ones(4), np.ones(4), domain="log")


def _sig(values):
    n, m = values.shape
    return SignatureMatrix("range_time", values, (("range_m", np.arange(n)), ("time_s", np.arange(m))))


def test_signature_domains():
    sim = _sig(np.array([[-100.0, 0.0], [-10.0, -50.0]]))
    meas = _sig(np.array([[-60.0, 0.0], [-10.0, -45.0]]))
    # identical once floored at -40 dB
    assert nmse(sim, meas) == 0.0 and ssim(sim, meas) == 1.0
    assert nmse(sim, meas, domain="linear") > 0


def test_nine_block_series(tmp_path):
    sims = [_rand(200 + i, (20, 20)) for i in range(9)]
    meas = [s + 0.1 * _rand(300 + i, (20, 20)) for i, s in enumerate(sims)]
    rep = compare_blocks(sims, meas)
    assert len(rep.blocks) == 9
    assert rep.nmse == pytest.approx(np.mean([b[1] for b in rep.blocks]))
    write_report_csv(rep, tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "block,nmse,ssim" and len(lines) == 10
    with pytest.raises(ShapeError):
        compare_blocks(sims, meas[:8])
