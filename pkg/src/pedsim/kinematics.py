"""Resampling of marker tracks and RCS series from video rate to the radar PRF.

Both operations use a natural cubic spline (zero second derivative at the
ends) evaluated on the uniform grid ``t0 + p * pri`` for ``p = 0 .. span-1``.
Nothing is extrapolated: asking for instants outside the source time range
raises :class:`~pedsim.errors.RangeError`.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import ParameterError, RangeError

# Grid instants may overshoot the last source sample by this fraction of the
# source duration (accumulated rounding of t0 + p * pri).
TIME_SLACK = 1e-9

RADAR_POSITION = (0.0, 0.0, 0.65)


@dataclass
class PrfTrackSet:
    """Scatterer positions and radial ranges on the PRI grid.

    ``positions`` is (span, B, 3) and ``ranges`` is (span, B), both in meters.
    """

    pri_s: float
    t0: float
    positions: np.ndarray
    ranges: np.ndarray
    radar_pos: np.ndarray
    names: list

    @property
    def span(self):
        return self.positions.shape[0]

    @property
    def n_scatterers(self):
        return self.positions.shape[1]

    @property
    def times(self):
        return self.t0 + np.arange(self.span) * self.pri_s

    def block(self, start, stop):
        """Sub-span of PRIs ``[start, stop)``."""
        if not 0 <= start < stop <= self.span:
            raise RangeError(f"PRI block [{start}, {stop}) outside span {self.span}")
        return PrfTrackSet(
            self.pri_s, self.t0 + start * self.pri_s, self.positions[start:stop],
            self.ranges[start:stop], self.radar_pos, list(self.names),
        )

    @classmethod
    def from_ranges(cls, ranges, pri_s, t0=0.0):
        """Track set defined only by ranges (positions placed on the +x axis)."""
        ranges = np.asarray(ranges, dtype=float)
        if ranges.ndim == 1:
            ranges = ranges[:, None]
        if np.any(ranges <= 0):
            raise RangeError("radial ranges must be positive")
        pos = np.zeros(ranges.shape + (3,))
        pos[..., 0] = ranges
        names = [f"s{b + 1:02d}" for b in range(ranges.shape[1])]
        return cls(float(pri_s), float(t0), pos, ranges, np.zeros(3), names)


def prf_grid(source_times, pri, span, t0=None):
    """Uniform PRI instants, checked to lie inside ``source_times``."""
    source_times = np.asarray(source_times, dtype=float)
    if pri <= 0:
        raise ParameterError("pri must be positive")
    if int(span) != span or span < 1:
        raise ParameterError("span must be a positive integer")
    if len(source_times) < 2:
        raise RangeError("at least two source samples are needed to interpolate")
    start = source_times[0] if t0 is None else float(t0)
    grid = start + np.arange(int(span)) * pri
    lo, hi = source_times[0], source_times[-1]
    slack = TIME_SLACK * (hi - lo)
    if grid[0] < lo - slack or grid[-1] > hi + slack:
        raise RangeError(
            f"requested {grid[0]:.6g}..{grid[-1]:.6g} s outside data {lo:.6g}..{hi:.6g} s"
        )
    return np.clip(grid, lo, hi)


def max_span(source_times, pri, t0=None):
    """Largest number of PRIs that fits inside ``source_times`` from ``t0``."""
    source_times = np.asarray(source_times, dtype=float)
    start = source_times[0] if t0 is None else float(t0)
    room = source_times[-1] - start
    return int(np.floor(room / pri * (1 + TIME_SLACK))) + 1 if room >= 0 else 0


def interpolate_tracks(markers, radar_pos=RADAR_POSITION, pri=61.2e-6, span=1, t0=None):
    """Spline every marker coordinate onto the PRI grid and compute radial ranges."""
    grid = prf_grid(markers.times, pri, span, t0)
    spline = CubicSpline(markers.times, markers.positions, axis=0, bc_type="natural")
    pos = spline(grid)
    radar_pos = np.asarray(radar_pos, dtype=float).reshape(3)
    ranges = np.linalg.norm(pos - radar_pos, axis=2)
    if np.any(ranges <= 0):
        raise RangeError("a scatterer coincides with the radar position")
    return PrfTrackSet(float(pri), float(grid[0]), pos, ranges, radar_pos, list(markers.names))


def rcs_interpolant(series, pair="vv"):
    """Natural cubic spline through the linear sigma samples of ``pair``."""
    if pair not in series.sigma:
        raise ParameterError(f"series has no {pair!r} values")
    if len(series.times) < 2:
        raise RangeError("at least two RCS frames are needed to interpolate")
    return CubicSpline(series.times, series.sigma[pair], bc_type="natural")


def interpolate_rcs(series, pri, span, pair="vv", t0=None):
    """Linear sigma on the PRI grid; spline undershoots below zero are clamped."""
    grid = prf_grid(series.times, pri, span, t0)
    return np.maximum(rcs_interpolant(series, pair)(grid), 0.0)
