"""FMCW waveform parameters and synthesis of the dechirped data cube Y[n, p].

Each scatterer with reflectivity ``a`` at range ``r[p]`` (delay ``tau =
2 r / c``) adds, at fast-time sample ``n = 0 .. N-1`` (time ``t = n T_s``
after the chirp start) of PRI ``p``::

    a * exp(-j 2 pi f_c tau) * exp(+j 2 pi gamma t tau) * exp(-j pi gamma tau^2)

The last factor is the residual video phase and can be switched off. A
sample only exists once the delayed echo overlaps the sampling interval,
i.e. when ``(n + 1) T_s >= tau``; earlier samples are zero.
"""
from __future__ import annotations

import math
import struct
import warnings
from dataclasses import dataclass

import numpy as np

from .constants import SPEED_OF_LIGHT
from .errors import ConfigError, FormatError, ParameterError

DEFAULT_RADAR = {
    "f_c": 77e9,
    "bandwidth": 2e9,
    "f_s": 10e6,
    "t_upchirp": 51.2e-6,
    "t_pri": 61.2e-6,
    "chirps_per_cpi": 1024,
    "cpis_per_block": 2,
}

CUBE_MAGIC = b"RDC1"


@dataclass(frozen=True)
class RadarParams:
    f_c: float
    bandwidth: float
    f_s: float
    t_upchirp: float
    t_pri: float
    chirps_per_cpi: int
    cpis_per_block: int = 1
    c: float = SPEED_OF_LIGHT

    @property
    def gamma(self):
        return self.bandwidth / self.t_upchirp

    @property
    def t_s(self):
        return 1.0 / self.f_s

    @property
    def n_samples(self):
        return int(round(self.f_s * self.t_upchirp))

    @property
    def wavelength(self):
        return self.c / self.f_c

    @property
    def range_resolution(self):
        return self.c / (2 * self.bandwidth)

    @property
    def doppler_resolution(self):
        return 1.0 / (self.chirps_per_cpi * self.t_pri)

    @property
    def max_range(self):
        return self.n_samples * self.range_resolution

    @property
    def block_pris(self):
        return self.chirps_per_cpi * self.cpis_per_block

    @property
    def t_long(self):
        return self.block_pris * self.t_pri


def derive_params(config=None, **overrides):
    """Validated :class:`RadarParams` from a mapping (77 GHz automotive defaults)."""
    cfg = dict(DEFAULT_RADAR)
    if config:
        cfg.update(config)
    cfg.update(overrides)
    unknown = set(cfg) - set(DEFAULT_RADAR) - {"c"}
    if unknown:
        raise ConfigError(f"unknown radar keys: {sorted(unknown)}")
    for key, val in cfg.items():
        if not (isinstance(val, (int, float)) and math.isfinite(val) and val > 0):
            raise ConfigError(f"radar parameter {key} must be a positive number, got {val!r}")
    for key in ("chirps_per_cpi", "cpis_per_block"):
        if int(cfg[key]) != cfg[key]:
            raise ConfigError(f"{key} must be an integer")
        cfg[key] = int(cfg[key])
    if cfg["t_upchirp"] > cfg["t_pri"]:
        raise ConfigError(
            f"up-chirp {cfg['t_upchirp']:.3g} s longer than the PRI {cfg['t_pri']:.3g} s"
        )
    params = RadarParams(**cfg)
    if params.n_samples < 2:
        raise ConfigError(f"only {params.n_samples} fast-time samples per chirp; need >= 2")
    return params


@dataclass
class RadarDataCube:
    """Complex samples ``Y[n, p]``: fast time along rows, PRIs along columns."""

    data: np.ndarray
    params: RadarParams

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.complex128)
        if self.data.ndim != 2:
            raise FormatError("data cube must be two-dimensional")
        if self.data.shape[0] != self.params.n_samples:
            raise FormatError(
                f"cube has {self.data.shape[0]} fast-time rows, params imply {self.params.n_samples}"
            )
        if not np.all(np.isfinite(self.data)):
            raise FormatError("data cube has non-finite entries")

    @property
    def n_pris(self):
        return self.data.shape[1]


def synthesize(reflectivities, ranges, params, residual_video_phase=True, noise_std=0.0, seed=None):
    """Cube for reflectivities ``(B,)`` and per-PRI ranges ``(LP, B)``.

    Contributions are added scatterer by scatterer in index order, so the
    result is deterministic. ``noise_std`` adds circular complex white noise
    of that standard deviation per sample, drawn from ``seed``.
    """
    a = np.asarray(reflectivities, dtype=np.complex128).reshape(-1)
    ranges = np.asarray(ranges, dtype=float)
    if ranges.ndim == 1:
        ranges = ranges[:, None]
    if ranges.shape[1] != len(a):
        raise ParameterError(f"{len(a)} reflectivities for {ranges.shape[1]} range tracks")
    N = params.n_samples
    LP = ranges.shape[0]
    if np.any(ranges > params.max_range):
        warnings.warn(
            f"scatterer beyond the unambiguous range {params.max_range:.2f} m; it will alias",
            RuntimeWarning, stacklevel=2,
        )
    t = np.arange(N) * params.t_s
    t_end = (np.arange(N) + 1) * params.t_s
    y = np.zeros((N, LP), dtype=np.complex128)
    for b in range(len(a)):
        if a[b] == 0:
            continue
        tau = 2 * ranges[:, b] / params.c
        phase = -2 * math.pi * params.f_c * tau
        if residual_video_phase:
            phase = phase - math.pi * params.gamma * tau ** 2
        beat = np.exp(1j * 2 * math.pi * params.gamma * np.outer(t, tau))
        valid = t_end[:, None] >= tau[None, :]
        y += a[b] * np.where(valid, beat * np.exp(1j * phase)[None, :], 0.0)
    if noise_std > 0:
        rng = np.random.default_rng(seed)
        y += noise_std / math.sqrt(2) * (rng.standard_normal(y.shape) + 1j * rng.standard_normal(y.shape))
    return RadarDataCube(y, params)


def synthesize_cube(scatterers, params, residual_video_phase=True, noise_std=0.0, seed=None):
    """Cube for a :class:`~pedsim.estimation.ScattererSet` over its track span."""
    return synthesize(
        scatterers.reflectivities, scatterers.tracks.ranges, params,
        residual_video_phase=residual_video_phase, noise_std=noise_std, seed=seed,
    )


# ---------------------------------------------------------------------- binary io


def _write_matrix(path, magic, payload, rows, cols):
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sIII", magic, rows, cols, 0))
        fh.write(payload)


def _read_header(path, magic):
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 16:
        raise FormatError(f"{path}: truncated header")
    got, rows, cols, _ = struct.unpack("<4sIII", raw[:16])
    if got != magic:
        raise FormatError(f"{path}: bad magic {got!r}, expected {magic!r}")
    return rows, cols, raw[16:]


def write_cube(cube, path):
    """16-byte header (magic, N, LP, reserved) then row-major complex64 little-endian."""
    n, lp = cube.data.shape
    _write_matrix(path, CUBE_MAGIC, cube.data.astype("<c8").tobytes(order="C"), n, lp)


def read_cube_array(path):
    n, lp, body = _read_header(path, CUBE_MAGIC)
    if len(body) != 8 * n * lp:
        raise FormatError(f"{path}: payload has {len(body)} bytes, expected {8 * n * lp}")
    return np.frombuffer(body, dtype="<c8").reshape(n, lp).astype(np.complex128)


def read_cube(path, params):
    return RadarDataCube(read_cube_array(path), params)
