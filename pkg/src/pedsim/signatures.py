"""Range-time, Doppler-time and range-Doppler signatures, plus OS-CFAR.

All transforms are plain (unnormalized) DFTs with zero range / zero Doppler
moved to the centre (``fftshift``), so bin ``g`` runs over ``-N/2 .. N/2-1``.
Stored values are ``10 log10 |X|^2`` clipped at an internal floor of -300
dB; the -40 dB display floor is applied only by the exporters.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np
import scipy.signal
from scipy.optimize import brentq

from .constants import DISPLAY_FLOOR_DB, INTERNAL_FLOOR_DB
from .errors import ConfigError, FormatError, ParameterError

SIG_MAGIC = b"SIG1"
KINDS = ("range_time", "doppler_time", "range_doppler")
_ALIASES = {"rect": "boxcar", "rectangular": "boxcar", "none": "boxcar", "hanning": "hann"}


def window(name, n):
    """Periodic window of length ``n`` by name (any scipy window without parameters)."""
    key = str(name).strip().lower()
    key = _ALIASES.get(key, key)
    try:
        return scipy.signal.get_window(key, n, fftbins=True).astype(float)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"unknown window {name!r}: {exc}") from None


def to_db(power):
    with np.errstate(divide="ignore"):
        db = 10 * np.log10(np.asarray(power, dtype=float))
    return np.maximum(db, INTERNAL_FLOOR_DB)


@dataclass
class SignatureMatrix:
    """dB image with its two axes.

    ``axes`` holds ``(name, values)`` for rows then columns, e.g.
    ``("range_m", ...)`` and ``("time_s", ...)`` for a range-time map.
    """

    kind: str
    values: np.ndarray
    axes: tuple
    window: str = "hann"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ParameterError(f"unknown signature kind {self.kind!r}")
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise FormatError("signature values must be two-dimensional")
        (_, rows), (_, cols) = self.axes
        if len(rows) != self.values.shape[0] or len(cols) != self.values.shape[1]:
            raise FormatError("axis lengths do not match the value matrix")

    @property
    def shape(self):
        return self.values.shape

    def linear(self):
        return 10 ** (self.values / 10)

    def display(self, floor_db=DISPLAY_FLOOR_DB):
        return np.maximum(self.values, floor_db)


def _centered_bins(n):
    return np.arange(-(n // 2), n - n // 2)


def range_spectrum(data, win="hann"):
    """Windowed, centred DFT along fast time (axis 0) of a ``(N, ...)`` array."""
    n = data.shape[0]
    h = window(win, n).reshape((n,) + (1,) * (data.ndim - 1))
    return np.fft.fftshift(np.fft.fft(data * h, axis=0), axes=0)


def range_time(cube, window_name="hann"):
    """Per-PRI fast-time spectrum; rows are range bins g*dr, columns PRI times."""
    p = cube.params
    x = range_spectrum(cube.data, window_name)
    rng = _centered_bins(p.n_samples) * p.range_resolution
    times = np.arange(cube.n_pris) * p.t_pri
    return SignatureMatrix("range_time", to_db(np.abs(x) ** 2), (("range_m", rng), ("time_s", times)),
                           window_name)


def _cpi_count(cube):
    P = cube.params.chirps_per_cpi
    if cube.n_pris < P:
        raise ParameterError(f"cube has {cube.n_pris} PRIs, fewer than one CPI of {P}")
    return cube.n_pris // P


def doppler_time(cube, window_name="hann", range_summed=False):
    """Per-CPI slow-time spectrum of the first fast-time sample.

    Rows are Doppler bins d*df_D, columns CPI start times. With
    ``range_summed=True`` the power is instead summed over all range bins of
    a per-CPI range-Doppler map; that variant is not the default.
    """
    p = cube.params
    P = p.chirps_per_cpi
    L = _cpi_count(cube)
    h = window(window_name, P)
    cols = []
    for l in range(L):
        blk = cube.data[:, l * P:(l + 1) * P]
        if range_summed:
            x = np.fft.fft(range_spectrum(blk, window_name) * h[None, :], axis=1)
            cols.append(np.sum(np.abs(x) ** 2, axis=0))
        else:
            cols.append(np.abs(np.fft.fft(blk[0] * h)) ** 2)
    power = np.fft.fftshift(np.stack(cols, axis=1), axes=0)
    dop = _centered_bins(P) * p.doppler_resolution
    times = np.arange(L) * P * p.t_pri
    meta = {"range_summed": bool(range_summed)}
    return SignatureMatrix("doppler_time", to_db(power), (("doppler_hz", dop), ("time_s", times)),
                           window_name, meta)


def range_doppler(cube, cpi_index=0, window_name="hann"):
    """2-D spectrum of CPI ``cpi_index`` (0-based) with a separable window.

    Rows are range bins, columns Doppler bins.
    """
    p = cube.params
    P = p.chirps_per_cpi
    L = _cpi_count(cube)
    if not 0 <= cpi_index < L:
        raise ParameterError(f"cpi_index {cpi_index} outside 0..{L - 1}")
    blk = cube.data[:, cpi_index * P:(cpi_index + 1) * P]
    h2 = np.outer(window(window_name, p.n_samples), window(window_name, P))
    x = np.fft.fftshift(np.fft.fft2(blk * h2))
    rng = _centered_bins(p.n_samples) * p.range_resolution
    dop = _centered_bins(P) * p.doppler_resolution
    return SignatureMatrix("range_doppler", to_db(np.abs(x) ** 2), (("range_m", rng), ("doppler_hz", dop)),
                           window_name, {"cpi_index": int(cpi_index)})


def doppler_to_velocity(doppler_hz, wavelength):
    return np.asarray(doppler_hz) * wavelength / 2


# ------------------------------------------------------------------------ OS-CFAR


def os_cfar_training_count(guard, train, ndim=2):
    outer = 2 * (guard + train) + 1
    inner = 2 * guard + 1
    return outer ** ndim - inner ** ndim


def os_cfar_pfa(n_train, k, alpha):
    """False-alarm probability of OS-CFAR in exponential (square-law) noise.

    With ``X_(k)`` the k-th smallest of ``n_train`` cells and threshold
    ``alpha * X_(k)``: ``Pfa = prod_{i=0}^{k-1} (n - i) / (n - i + alpha)``.
    """
    return math.exp(_log_pfa(n_train, k, alpha))


def _log_pfa(n_train, k, alpha):
    i = np.arange(k)
    return float(np.sum(np.log(n_train - i) - np.log(n_train - i + alpha)))


def os_cfar_alpha(n_train, k, pfa):
    """Scale factor giving the design ``pfa``."""
    if not 0 < pfa < 1:
        raise ParameterError("pfa must lie in (0, 1)")
    return brentq(lambda a: _log_pfa(n_train, k, a) - math.log(pfa), 1e-12, 1e12,
                  xtol=1e-14, rtol=1e-14)


def os_cfar(matrix, guard=2, train=4, k=None, alpha=None, pfa=1e-3, chunk_rows=64):
    """Ordered-statistics CFAR detection mask on linear power.

    ``matrix`` is a :class:`SignatureMatrix` (dB, converted to power) or a
    1-D/2-D array of linear power. The training region is the square ring of
    width ``train`` outside a guard ring of width ``guard`` around each cell.
    A cell is detected when it exceeds ``alpha`` times the k-th smallest
    training value. Near the edges the ring is cut by the matrix border and
    ``k`` is scaled by the fraction of training cells still available.
    ``alpha`` defaults to the value giving ``pfa`` for the full ring.
    """
    x = matrix.linear() if isinstance(matrix, SignatureMatrix) else np.asarray(matrix, dtype=float)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None, :]
    if x.ndim != 2:
        raise ParameterError("os_cfar expects a 1-D or 2-D matrix")
    if guard < 0 or train < 1:
        raise ParameterError("guard must be >= 0 and train >= 1")
    ndim = 1 if squeeze else 2
    n_full = os_cfar_training_count(guard, train, ndim)
    if k is None:
        k = max(1, int(round(0.75 * n_full)))
    if not 1 <= k <= n_full:
        raise ParameterError(f"rank k={k} outside 1..{n_full}")
    if alpha is None:
        alpha = os_cfar_alpha(n_full, k, pfa)
    w = guard + train
    wr = 0 if squeeze else w
    gr = 0 if squeeze else guard
    ring = np.ones((2 * wr + 1, 2 * w + 1), dtype=bool)
    ring[wr - gr:wr + gr + 1, w - guard:w + guard + 1] = False
    padded = np.pad(x, ((wr, wr), (w, w)), constant_values=np.nan)
    views = np.lib.stride_tricks.sliding_window_view(padded, ring.shape)
    mask = np.zeros(x.shape, dtype=bool)
    for r0 in range(0, x.shape[0], chunk_rows):
        r1 = min(r0 + chunk_rows, x.shape[0])
        cells = views[r0:r1][..., ring]  # (rows, cols, n_full)
        n_avail = np.sum(~np.isnan(cells), axis=-1)
        srt = np.sort(cells, axis=-1)  # NaN sorts last
        k_eff = np.maximum(1, np.floor(k * n_avail / n_full + 0.5).astype(np.int64))
        k_eff = np.minimum(k_eff, np.maximum(n_avail, 1))
        stat = np.take_along_axis(srt, (k_eff - 1)[..., None], axis=-1)[..., 0]
        mask[r0:r1] = (n_avail > 0) & (x[r0:r1] > alpha * stat)
    return mask[0] if squeeze else mask


# ------------------------------------------------------------------------ exports


def write_signature_csv(sig, path, floor_db=DISPLAY_FLOOR_DB):
    """Values in dB, one matrix row per line, first column the row-axis value."""
    (rname, rows), (cname, cols) = sig.axes
    vals = sig.display(floor_db) if floor_db is not None else sig.values
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{rname}\\{cname}," + ",".join(repr(float(c)) for c in cols) + "\n")
        for rv, line in zip(rows.tolist(), vals.tolist()):
            fh.write(repr(float(rv)) + "," + ",".join(repr(v) for v in line) + "\n")


def write_signature_binary(sig, path):
    """``SIG1`` header (rows, cols as uint32) followed by row-major float32 dB values."""
    r, c = sig.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sIII", SIG_MAGIC, r, c, 0))
        fh.write(sig.values.astype("<f4").tobytes(order="C"))


def read_signature_binary(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 16:
        raise FormatError(f"{path}: truncated header")
    magic, r, c, _ = struct.unpack("<4sIII", raw[:16])
    if magic != SIG_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if len(raw) - 16 != 4 * r * c:
        raise FormatError(f"{path}: payload size mismatch")
    return np.frombuffer(raw[16:], dtype="<f4").reshape(r, c).astype(float)


def write_heatmap(sig, path, floor_db=DISPLAY_FLOOR_DB):
    """8-bit PGM (P5), ``[floor, max] -> [0, 255]``, plus ``<path>.txt`` axis metadata."""
    vals = sig.display(floor_db)
    top = float(vals.max())
    span = top - floor_db
    if span > 0:
        img = np.floor((vals - floor_db) / span * 255 + 0.5)
    else:
        img = np.zeros_like(vals)
    img = np.clip(img, 0, 255).astype(np.uint8)
    rows, cols = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{cols} {rows}\n255\n".encode("ascii"))
        fh.write(img.tobytes())
    (rname, rvals), (cname, cvals) = sig.axes
    with open(str(path) + ".txt", "w", encoding="utf-8") as fh:
        fh.write(f"kind = {sig.kind}\nwindow = {sig.window}\n")
        fh.write(f"floor_db = {floor_db!r}\nmax_db = {top!r}\n")
        fh.write(f"rows = {rname} {float(rvals[0])!r} .. {float(rvals[-1])!r} ({len(rvals)})\n")
        fh.write(f"cols = {cname} {float(cvals[0])!r} .. {float(cvals[-1])!r} ({len(cvals)})\n")
