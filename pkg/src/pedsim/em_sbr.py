"""Shooting-and-bouncing-rays (SBR) RCS of triangulated dielectric bodies.

Conventions
-----------
* Elevation is 0: rays travel parallel to the x-y ground plane.
* Azimuth ``phi`` points from the target toward the antenna, ``u(phi) =
  (cos phi, sin phi, 0)``. Incident rays therefore propagate along
  ``-u(phi_i)`` and the scattered field is observed along ``u(phi_s)``.
* Polarization basis for propagation direction ``k``: ``h = z x k / |z x k|``
  and ``v = k x h`` (equal to +z for horizontal propagation).
* Polarization pairs are written transmit-then-receive: ``"hv"`` transmits
  h and receives v.
* Fresnel coefficients use the local basis ``s = d x n`` (perpendicular),
  ``p_i = s x d`` and ``p_r = s x d_r`` (parallel). With that choice a perfect
  conductor has ``G_perp = -1`` and ``G_par = +1``.

Each ray that hits the body is reflected up to ``max_bounces`` times. At its
last hit point the incident and reflected ray fields define physical-optics
surface currents on the footprint of the ray tube (area ``ray_spacing**2 /
cos(theta)``), and those currents radiate toward the receiver. The far-field
amplitude is scaled so that ``sigma = 4*pi*|E_s|**2`` reproduces the flat
plate ``4*pi*A**2/lambda**2`` at normal incidence. Radiating from currents
rather than from an exit aperture keeps single-bounce backscatter free of
spurious cross-polarization and makes the hv and vh results reciprocal.
"""
from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .constants import SPEED_OF_LIGHT, VACUUM_PERMITTIVITY
from .errors import FormatError, ParameterError
from .geometry import TraceStats, build_groups, pack_scene

POLARIZATIONS = ("h", "v")
ALL_PAIRS = ("vv", "hh", "hv", "vh")
DEFAULT_GROUPS = 32
CHUNK_RAYS = 2048


@dataclass(frozen=True)
class Material:
    relative_permittivity: float = 1.0
    conductivity: float = 0.0
    perfect_conductor: bool = False

    def __post_init__(self):
        if self.conductivity < 0:
            raise ParameterError("conductivity must be >= 0")
        if not self.perfect_conductor and self.relative_permittivity < 1:
            raise ParameterError("relative permittivity must be >= 1 for a dielectric")

    def complex_permittivity(self, f_c):
        """eps_r + sigma / (j 2 pi f eps0)."""
        return complex(self.relative_permittivity) + self.conductivity / (
            1j * 2 * math.pi * f_c * VACUUM_PERMITTIVITY
        )

    @classmethod
    def pec(cls):
        return cls(1.0, 0.0, True)


# Skin at the two automotive bands.
SKIN_77GHZ = Material(6.63, 38.1)
SKIN_24GHZ = Material(50.0, 1.0)
PEC = Material.pec()


@dataclass(frozen=True)
class AspectConfig:
    phi_i_deg: float = 0.0
    phi_s_deg: float | None = None
    f_c: float = 77e9
    tx_polarization: str = "v"
    rx_polarization: str = "v"
    max_bounces: int = 3
    ray_spacing: float | None = None
    coarse: bool = False

    def __post_init__(self):
        if self.f_c <= 0:
            raise ParameterError("carrier frequency must be positive")
        if self.max_bounces < 1:
            raise ParameterError("max_bounces must be >= 1")
        for p in (self.tx_polarization, self.rx_polarization):
            if p not in POLARIZATIONS:
                raise ParameterError(f"polarization must be 'h' or 'v', got {p!r}")
        if self.ray_spacing is not None:
            if self.ray_spacing <= 0:
                raise ParameterError("ray_spacing must be positive")
            if self.ray_spacing > self.wavelength / 10 * (1 + 1e-12) and not self.coarse:
                raise ParameterError(
                    f"ray_spacing {self.ray_spacing:.3g} m exceeds lambda/10 = "
                    f"{self.wavelength / 10:.3g} m; set coarse=True to allow it"
                )

    @property
    def wavelength(self):
        return SPEED_OF_LIGHT / self.f_c

    @property
    def wavenumber(self):
        return 2 * math.pi / self.wavelength

    @property
    def spacing(self):
        return self.wavelength / 10 if self.ray_spacing is None else self.ray_spacing

    @property
    def scattered_deg(self):
        return self.phi_i_deg if self.phi_s_deg is None else self.phi_s_deg

    @property
    def monostatic(self):
        return self.scattered_deg == self.phi_i_deg

    @property
    def pair(self):
        return self.tx_polarization + self.rx_polarization


def azimuth_vector(phi_deg):
    phi = math.radians(phi_deg)
    return np.array([math.cos(phi), math.sin(phi), 0.0])


def polarization_basis(k):
    """(h, v) unit vectors for propagation direction ``k``."""
    k = np.asarray(k, dtype=float)
    h = np.cross([0.0, 0.0, 1.0], k)
    h /= np.linalg.norm(h)
    v = np.cross(k, h)
    return h, v


def fresnel_coefficients(material, f_c, incidence_angle):
    """(G_perp, G_par) for a plane wave in air hitting ``material``.

    G_perp = (cos - sqrt(eps - sin^2)) / (cos + sqrt(eps - sin^2))
    G_par  = (eps cos - sqrt(eps - sin^2)) / (eps cos + sqrt(eps - sin^2))

    ``eps`` is the complex permittivity at ``f_c``. The parallel coefficient
    follows the sign convention in the module docstring (PEC gives +1).
    """
    if not 0 <= incidence_angle < math.pi / 2:
        raise ParameterError("incidence angle must lie in [0, pi/2)")
    eps = material.complex_permittivity(f_c) if not material.perfect_conductor else 1.0 + 0j
    gp, gl = _kernels.fresnel(eps, material.perfect_conductor, math.cos(incidence_angle))
    return complex(gp), complex(gl)


def pairwise_sum(values):
    """Fixed-order pairwise reduction along axis 0.

    The tree shape depends only on the length of the input, so results do not
    depend on how the rows were produced (thread count, chunking).
    """
    x = np.asarray(values)
    if len(x) == 0:
        return np.zeros(x.shape[1:], dtype=x.dtype)
    while len(x) > 1:
        if len(x) % 2:
            x = np.concatenate([x, np.zeros((1,) + x.shape[1:], dtype=x.dtype)])
        x = x[0::2] + x[1::2]
    return x[0]


@dataclass
class RayGrid:
    origins: np.ndarray
    spacing: float
    shape: tuple

    @property
    def tube_area(self):
        return self.spacing ** 2

    @property
    def n_rays(self):
        return len(self.origins)


def launch_grid(mesh, k_inc, spacing, margin_cells=1):
    """Parallel ray origins on a plane normal to ``k_inc``.

    Cell edges are anchored at the projected bounding-box minimum so that a
    face aligned with the box is tiled by whole cells; rays sit at cell
    centres.
    """
    if mesh.n_triangles == 0:
        return RayGrid(np.zeros((0, 3)), spacing, (0, 0))
    h, v = polarization_basis(k_inc)
    pts = mesh.vertices[np.unique(mesh.triangles)]
    u = pts @ h
    w = pts @ v
    s = pts @ k_inc
    nu = int(math.ceil((u.max() - u.min()) / spacing)) + 2 * margin_cells
    nw = int(math.ceil((w.max() - w.min()) / spacing)) + 2 * margin_cells
    nu = max(nu, 1)
    nw = max(nw, 1)
    uc = u.min() + (np.arange(nu) - margin_cells + 0.5) * spacing
    wc = w.min() + (np.arange(nw) - margin_cells + 0.5) * spacing
    extent = float(np.ptp(s)) + float(np.ptp(u)) + float(np.ptp(w))
    s0 = s.min() - 0.01 - 1e-3 * extent
    uu, ww = np.meshgrid(uc, wc, indexing="ij")
    origins = (
        uu.reshape(-1, 1) * h + ww.reshape(-1, 1) * v + s0 * np.asarray(k_inc)
    )
    return RayGrid(np.ascontiguousarray(origins), spacing, (nu, nw))


@dataclass
class TraceResult:
    """Far-field vectors per transmit polarization plus work counters.

    ``field[q]`` is the complex 3-vector E_s for transmit polarization ``q``;
    project onto ``rx_basis`` to get scalar amplitudes.
    """

    field: dict
    rx_basis: dict
    stats: TraceStats
    n_hit_rays: int = 0

    def amplitude(self, pair):
        tx, rx = pair[0], pair[1]
        return complex(self.rx_basis[rx] @ self.field[tx])

    def rcs(self, pair):
        return 4 * math.pi * abs(self.amplitude(pair)) ** 2

    @property
    def amplitudes(self):
        return {p: self.amplitude(p) for p in ALL_PAIRS}


def default_threads():
    return os.cpu_count() or 1


def trace_frame(mesh, material, aspect, groups=None, n_groups=DEFAULT_GROUPS, threads=1,
                grid=None):
    """Trace one mesh frame and return the scattered far field.

    ``groups`` may be a prebuilt list of :class:`BoundingGroup`; otherwise
    ``n_groups`` median-split groups are built. ``threads`` workers trace
    disjoint ray chunks; the reduction is independent of the worker count.
    """
    k_inc = -azimuth_vector(aspect.phi_i_deg)
    k_scat = azimuth_vector(aspect.scattered_deg)
    h_i, v_i = polarization_basis(k_inc)
    h_s, v_s = polarization_basis(k_scat)
    rx_basis = {"h": h_s, "v": v_s}
    zero = {"h": np.zeros(3, complex), "v": np.zeros(3, complex)}
    if mesh.n_triangles == 0:
        return TraceResult(zero, rx_basis, TraceStats())
    if grid is None:
        grid = launch_grid(mesh, k_inc, aspect.spacing)
    if grid.n_rays == 0:
        return TraceResult(zero, rx_basis, TraceStats())
    if groups is None:
        groups = build_groups(mesh, n_groups)
    scene = pack_scene(mesh, groups)
    if material.perfect_conductor:
        eps = 1.0 + 0j
    else:
        eps = material.complex_permittivity(aspect.f_c)
    tx_basis = np.ascontiguousarray(np.stack([h_i, v_i]))

    n = grid.n_rays
    out_field = np.empty((n, 2, 3), dtype=np.complex128)
    out_tests = np.empty(n, dtype=np.int64)
    out_hits = np.empty(n, dtype=np.int64)

    def run(lo_hi):
        lo, hi = lo_hi
        _kernels.sbr_batch(
            grid.origins[lo:hi], k_inc, scene.normals, scene.v0, scene.e1, scene.e2,
            scene.cross_norm, scene.box_min, scene.box_max, scene.offsets, scene.members,
            eps, bool(material.perfect_conductor), aspect.wavenumber, k_scat, tx_basis,
            int(aspect.max_bounces), grid.tube_area,
            out_field[lo:hi], out_tests[lo:hi], out_hits[lo:hi],
        )

    chunks = [(lo, min(lo + CHUNK_RAYS, n)) for lo in range(0, n, CHUNK_RAYS)]
    threads = max(1, int(threads))
    if threads == 1:
        for c in chunks:
            run(c)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(run, chunks))

    total = pairwise_sum(out_field)
    stats = TraceStats(
        triangle_tests=int(out_tests.sum()),
        box_tests=int(np.sum(out_hits + (out_hits < aspect.max_bounces))) * scene.n_groups,
        rays=n,
    )
    fields = {"h": total[0], "v": total[1]}
    return TraceResult(fields, rx_basis, stats, int(np.count_nonzero(out_hits)))


@dataclass
class RcsSeries:
    """Linear RCS (m^2) per frame for each polarization pair."""

    times: np.ndarray
    sigma: dict
    frame_rate: float = float("nan")
    aspect: AspectConfig | None = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.sigma = {p: np.asarray(v, dtype=float) for p, v in self.sigma.items()}
        for p, v in self.sigma.items():
            if p not in ALL_PAIRS:
                raise ParameterError(f"unknown polarization pair {p!r}")
            if v.shape != self.times.shape:
                raise FormatError("RCS series length must match the frame count")
            if np.any(v < 0) or not np.all(np.isfinite(v)):
                raise FormatError(f"RCS values for {p} must be finite and >= 0")

    def __len__(self):
        return len(self.times)

    def dbsm(self, pair):
        return to_dbsm(self.sigma[pair])


def to_dbsm(sigma):
    with np.errstate(divide="ignore"):
        return 10 * np.log10(np.asarray(sigma, dtype=float))


def from_dbsm(db):
    return 10 ** (np.asarray(db, dtype=float) / 10)


def rcs_sequence(frames, material, aspect, pairs=ALL_PAIRS, n_groups=DEFAULT_GROUPS, threads=1):
    """Trace every frame and collect sigma = 4 pi |E_s|^2 for each pair."""
    pairs = tuple(pairs)
    for p in pairs:
        if p not in ALL_PAIRS:
            raise ParameterError(f"unknown polarization pair {p!r}")
    values = {p: [] for p in pairs}
    for fr in frames:
        res = trace_frame(fr, material, aspect, n_groups=n_groups, threads=threads)
        for p in pairs:
            values[p].append(res.rcs(p))
    times = np.array([fr.timestamp for fr in frames], dtype=float)
    rate = (len(times) - 1) / (times[-1] - times[0]) if len(times) > 1 else float("nan")
    return RcsSeries(times, values, rate, aspect)


def bistatic_sweep(mesh, material, aspect, phi_s_values, n_groups=DEFAULT_GROUPS, threads=1):
    """RCS for every pair versus scattered azimuth, incident angle held fixed."""
    groups = build_groups(mesh, n_groups)
    k_inc = -azimuth_vector(aspect.phi_i_deg)
    grid = launch_grid(mesh, k_inc, aspect.spacing)
    rows = {p: [] for p in ALL_PAIRS}
    for phi_s in phi_s_values:
        asp = replace(aspect, phi_s_deg=float(phi_s))
        res = trace_frame(mesh, material, asp, groups=groups, threads=threads, grid=grid)
        for p in ALL_PAIRS:
            rows[p].append(res.rcs(p))
    return np.asarray(phi_s_values, dtype=float), {p: np.array(v) for p, v in rows.items()}


# ----------------------------------------------------------------------- CSV io

RCS_COLUMNS = ["frame", "time_s", "sigma_vv_dbsm", "sigma_hh_dbsm", "sigma_hv_dbsm", "sigma_vh_dbsm"]


def _fmt_db(x):
    return repr(float(x))


def write_rcs_csv(series, path):
    """Write ``frame,time_s,sigma_vv_dbsm,...``; pairs not computed are left empty."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(RCS_COLUMNS)
        for f, t in enumerate(series.times.tolist()):
            row = [str(f), repr(t)]
            for p in ("vv", "hh", "hv", "vh"):
                row.append(_fmt_db(to_dbsm(series.sigma[p][f])) if p in series.sigma else "")
            w.writerow(row)


def read_rcs_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != RCS_COLUMNS:
            raise FormatError(f"{path}: expected header {','.join(RCS_COLUMNS)}")
        times, cols = [], {p: [] for p in ("vv", "hh", "hv", "vh")}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(RCS_COLUMNS):
                raise FormatError(f"{path}:{lineno}: ragged row")
            times.append(float(row[1]))
            for p, cell in zip(("vv", "hh", "hv", "vh"), row[2:]):
                cols[p].append(cell)
    sigma = {}
    for p, cells in cols.items():
        if all(c == "" for c in cells):
            continue
        sigma[p] = from_dbsm([float(c) for c in cells])
    times = np.array(times)
    rate = (len(times) - 1) / (times[-1] - times[0]) if len(times) > 1 else float("nan")
    return RcsSeries(times, sigma, rate)


def write_bistatic_csv(phi_s, sigma, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["phi_s_deg", "sigma_vv_dbsm", "sigma_hh_dbsm", "sigma_hv_dbsm", "sigma_vh_dbsm"])
        for i, ph in enumerate(np.asarray(phi_s).tolist()):
            w.writerow([repr(ph)] + [_fmt_db(to_dbsm(sigma[p][i])) for p in ("vv", "hh", "hv", "vh")])
