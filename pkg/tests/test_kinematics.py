import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pedsim.em_sbr import RcsSeries
from pedsim.errors import RangeError
from pedsim.kinematics import (
    PrfTrackSet, interpolate_rcs, interpolate_tracks, max_span, prf_grid, rcs_interpolant,
)
from pedsim.scene_io import MarkerTrackSet

PRI = 61.2e-6


def _markers(fn, n=61, rate=60.0):
    t = np.arange(n) / rate
    return MarkerTrackSet(t, fn(t)[:, None, :], ["m1"])


def test_linear_track_exact():
    m = _markers(lambda t: np.column_stack([1.0 + t, 0.5 + 0 * t, 0 * t]))
    span = max_span(m.times, PRI)
    tr = interpolate_tracks(m, radar_pos=(0, 0, 0), pri=PRI, span=span)
    expect = 1.0 + tr.times
    assert np.max(np.abs(tr.positions[:, 0, 0] - expect)) < 1e-12
    assert np.allclose(tr.ranges[:, 0], np.hypot(expect, 0.5), atol=1e-12)


def test_sine_track_error_small():
    w = 2 * math.pi * 2.0
    m = _markers(lambda t: np.column_stack([3 + 0.1 * np.sin(w * t), 0 * t, 0 * t]))
    # stay clear of the free end conditions
    t0, span = 0.1, int(0.8 / PRI)
    tr = interpolate_tracks(m, radar_pos=(0, 0, 0), pri=PRI, span=span, t0=t0)
    exact = 3 + 0.1 * np.sin(w * tr.times)
    assert np.max(np.abs(tr.positions[:, 0, 0] - exact)) < 1e-4


def test_request_beyond_last_frame():
    m = _markers(lambda t: np.column_stack([1 + t, 0 * t, 0 * t]), n=10)
    with pytest.raises(RangeError):
        interpolate_tracks(m, pri=PRI, span=max_span(m.times, PRI) + 10)
    with pytest.raises(RangeError):
        prf_grid(m.times, PRI, 5, t0=-1.0)


def test_range_at_radar_is_error():
    m = _markers(lambda t: np.column_stack([0 * t, 0 * t, 0.65 + 0 * t]), n=4)
    with pytest.raises(RangeError):
        interpolate_tracks(m, pri=PRI, span=3)


def test_grid_is_uniform():
    g = prf_grid(np.arange(61) / 60, PRI, 1000)
    assert g[0] == 0.0
    assert np.allclose(np.diff(g), PRI, rtol=1e-9)


def _series(values, rate=60.0):
    values = np.asarray(values, dtype=float)
    return RcsSeries(np.arange(len(values)) / rate, {"vv": values}, rate)


def test_constant_rcs():
    out = interpolate_rcs(_series(np.full(20, 0.3)), PRI, 2000)
    assert np.allclose(out, 0.3, rtol=1e-12)


def test_linear_rcs_exact():
    s = _series(0.2 + np.arange(20) * 0.01)
    out = interpolate_rcs(s, PRI, 4000)
    t = np.arange(4000) * PRI
    assert np.allclose(out, 0.2 + 0.6 * t, rtol=0, atol=1e-12)


def test_knot_fidelity():
    rng = np.random.default_rng(4)
    s = _series(rng.uniform(0, 1, 69))
    spline = rcs_interpolant(s)
    assert np.max(np.abs(spline(s.times) - s.sigma["vv"])) < 1e-9


@given(st.lists(st.floats(0.0, 5.0), min_size=4, max_size=30))
def test_clamped_nonnegative(vals):
    s = _series(vals)
    out = interpolate_rcs(s, 1 / 600, max_span(s.times, 1 / 600))
    assert np.all(out >= 0)


def test_spike_clamps_ringing_to_zero():
    out = interpolate_rcs(_series([0, 0, 0, 5, 0, 0, 0]), PRI, max_span(np.arange(7) / 60, PRI))
    assert out.min() == 0.0


def test_from_ranges_and_block():
    tr = PrfTrackSet.from_ranges(np.linspace(3, 4, 100), PRI)
    assert tr.n_scatterers == 1
    sub = tr.block(10, 20)
    assert sub.span == 10 and sub.t0 == pytest.approx(10 * PRI)
    with pytest.raises(RangeError):
        tr.block(90, 101)
