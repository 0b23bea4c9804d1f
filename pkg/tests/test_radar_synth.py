import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import C, direct_dft
from pedsim.errors import ConfigError, FormatError
from pedsim.radar_synth import (
    DEFAULT_RADAR, RadarDataCube, derive_params, read_cube, read_cube_array, synthesize, write_cube,
)


@pytest.fixture(scope="module")
def params():
    return derive_params()


def test_default_resolutions(params):
    assert params.range_resolution == 0.075
    assert abs(params.doppler_resolution - 15.9) < 0.1
    assert params.doppler_resolution == pytest.approx(1 / (1024 * 61.2e-6), rel=1e-12)


def test_default_sample_count(params):
    assert params.n_samples == 512


def test_double_bandwidth_halves_range_bin():
    assert derive_params(bandwidth=4e9).range_resolution == 0.0375


def test_chirp_longer_than_pri_rejected():
    with pytest.raises(ConfigError):
        derive_params(t_upchirp=70e-6)
    with pytest.raises(ConfigError):
        derive_params(f_c=-1.0)
    with pytest.raises(ConfigError):
        derive_params({"bogus": 1.0})


def test_t_long_is_computed(params):
    assert params.t_long == pytest.approx(2 * 1024 * 61.2e-6)
    assert DEFAULT_RADAR["cpis_per_block"] == 2


def test_zero_scatterers(params):
    cube = synthesize(np.zeros(0), np.zeros((16, 0)), params)
    assert cube.data.shape == (512, 16) and not np.any(cube.data)


def test_static_scatterer_range_bin(params):
    cube = synthesize([1.0], np.full(8, 3.75), params)
    for p in range(8):
        spec = np.abs(direct_dft(cube.data[:, p])) ** 2
        assert np.argmax(spec) - 256 == 50


def test_closing_scatterer_phase_ramp(params):
    v = 1.5
    r = 3.75 - v * np.arange(64) * params.t_pri
    cube = synthesize([1.0], r, params, residual_video_phase=False)
    step = np.angle(cube.data[0, 1:] / cube.data[0, :-1])
    expect = 2 * math.pi * 77e9 * 2 * v * params.t_pri / C
    assert np.allclose(step, expect, atol=1e-9)


def test_phase_invariant_without_rvp(params):
    r = np.linspace(2.0, 5.0, 50)
    cube = synthesize([1.0], r, params, residual_video_phase=False)
    want = np.angle(np.exp(-1j * 4 * math.pi * 77e9 * r / C))
    assert np.allclose(np.angle(cube.data[0] * np.exp(-1j * want)), 0, atol=1e-9)


def test_rvp_adds_quadratic_phase(params):
    r = np.array([3.75])
    on = synthesize([1.0], r, params)
    off = synthesize([1.0], r, params, residual_video_phase=False)
    tau = 2 * 3.75 / C
    assert np.angle(on.data[0, 0] / off.data[0, 0]) == pytest.approx(-math.pi * params.gamma * tau ** 2, abs=1e-12)


amps = st.lists(st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False),
                min_size=3, max_size=3)


@given(amps, amps)
def test_linearity(a1, a2):
    p = derive_params(chirps_per_cpi=4, cpis_per_block=1)
    rng = np.random.default_rng(0)
    r = rng.uniform(1, 8, size=(6, 3))
    lhs = synthesize(np.add(a1, a2), r, p).data
    rhs = synthesize(a1, r, p).data + synthesize(a2, r, p).data
    assert np.allclose(lhs, rhs, rtol=0, atol=1e-12 * max(1.0, np.abs(lhs).max()))


@given(st.complex_numbers(min_magnitude=1e-3, max_magnitude=1e3, allow_nan=False))
def test_scaling(s):
    p = derive_params(chirps_per_cpi=4, cpis_per_block=1)
    r = np.array([[2.0], [2.01], [2.02]])
    base = synthesize([1.0], r, p).data
    scaled = synthesize([s], r, p).data
    assert np.array_equal(scaled, s * base)


def test_aliasing_warning(params):
    with pytest.warns(RuntimeWarning):
        synthesize([1.0], np.full(2, 40.0), params)


def test_first_sample_gated_by_delay():
    p = derive_params(f_s=100e6, t_upchirp=51.2e-6)
    # tau = 2 * 30 / c = 200 ns spans two samples at 10 ns
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        y = synthesize([1.0], np.array([30.0]), p).data[:, 0]
    valid = (np.arange(len(y)) + 1) * 1e-8 >= 2e-7 - 1e-18
    assert np.all(y[~valid] == 0) and np.all(y[valid] != 0)


def test_cube_round_trip(tmp_path, params):
    rng = np.random.default_rng(3)
    data = (rng.normal(size=(512, 5)) + 1j * rng.normal(size=(512, 5))).astype(np.complex64)
    write_cube(RadarDataCube(data, params), tmp_path / "c.rdc")
    raw = (tmp_path / "c.rdc").read_bytes()
    assert raw[:4] == b"RDC1" and len(raw) == 16 + 8 * 512 * 5
    assert np.array_equal(read_cube(tmp_path / "c.rdc", params).data, data)


def test_cube_bad_magic(tmp_path):
    (tmp_path / "x.rdc").write_bytes(b"XXXX" + bytes(12))
    with pytest.raises(FormatError):
        read_cube_array(tmp_path / "x.rdc")
