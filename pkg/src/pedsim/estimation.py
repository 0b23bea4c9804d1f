"""Point-scatterer reflectivities from ray-traced RCS by complex least squares.

For one block of ``L * P`` PRIs, ``K`` rows are sampled about ``M`` PRIs
apart. Row ``k`` of ``Phi`` holds the two-way phases
``exp(-j 2 pi f_c 2 r_b[p_k] / c)`` of the ``B`` scatterers and ``Psi[k]``
holds ``sqrt(sigma_vv[p_k])``. Solving ``Phi A = Psi`` in the least-squares
sense gives the reflectivities ``A`` for that block.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .constants import SPEED_OF_LIGHT
from .errors import FormatError, ParameterError, RangeError, SingularityError, UnderdeterminedError

# Systems with a 2-norm condition number above this are refused.
MAX_CONDITION = 1e12


def row_count(M, L, P):
    """K = LP / M rounded to the nearest integer (halves round up)."""
    if M < 1 or L < 1 or P < 1:
        raise ParameterError("M, L and P must all be >= 1")
    return max(1, int(math.floor(L * P / M + 0.5)))


def row_indices(K, LP):
    """0-based PRIs of the K rows, spread uniformly over ``[0, LP-1]``."""
    if K == 1:
        return np.zeros(1, dtype=np.int64)
    k = np.arange(K)
    return np.floor(k * (LP - 1) / (K - 1) + 0.5).astype(np.int64)


def phase_matrix(ranges, f_c):
    """exp(-j 2 pi f_c 2 r / c) for an array of ranges."""
    return np.exp(-1j * 2 * math.pi * f_c * 2 * np.asarray(ranges) / SPEED_OF_LIGHT)


@dataclass
class RegressionSystem:
    phi: np.ndarray
    psi: np.ndarray
    row_pri_indices: np.ndarray
    M: int
    L: int
    P: int
    block: int = 0
    pri_s: float = float("nan")

    @property
    def K(self):
        return self.phi.shape[0]

    @property
    def B(self):
        return self.phi.shape[1]

    @property
    def t_short(self):
        return self.M * self.pri_s

    @property
    def t_long(self):
        return self.L * self.P * self.pri_s


@dataclass
class ScattererSet:
    """Reflectivities of one block together with the tracks they ride on."""

    reflectivities: np.ndarray
    tracks: object
    block: int = 0
    residual: float = float("nan")
    condition: float = float("nan")
    valid_span: tuple = field(default=(0, 0))

    def __post_init__(self):
        self.reflectivities = np.asarray(self.reflectivities, dtype=np.complex128).reshape(-1)
        if not np.all(np.isfinite(self.reflectivities)):
            raise ParameterError("reflectivities must be finite")
        if self.tracks is not None and self.tracks.n_scatterers != len(self.reflectivities):
            raise ParameterError(
                f"{len(self.reflectivities)} reflectivities for {self.tracks.n_scatterers} tracks"
            )

    @property
    def n_scatterers(self):
        return len(self.reflectivities)


def block_count(tracks, L, P):
    return tracks.span // (L * P)


def assemble_system(tracks, rcs, f_c, M, L, P, block=0, strict=True):
    """Build Phi and Psi for PRI block ``block`` of length ``L * P``.

    ``rcs`` is the per-PRI sigma_vv aligned with ``tracks``. Passing a complex
    ``rcs`` is not meaningful; use :func:`system_from_amplitudes` for
    synthetic complex right-hand sides.
    """
    LP = L * P
    K = row_count(M, L, P)
    B = tracks.n_scatterers
    if strict and K < B:
        raise UnderdeterminedError(f"K = {K} rows for B = {B} unknowns (M={M}, L={L}, P={P})")
    start = block * LP
    stop = start + LP
    if block < 0 or stop > tracks.span:
        raise RangeError(f"block {block} needs PRIs [{start}, {stop}) but only {tracks.span} exist")
    rcs = np.asarray(rcs, dtype=float)
    if len(rcs) < stop:
        raise RangeError("RCS series shorter than the requested block")
    if np.any(rcs[start:stop] < 0):
        raise ParameterError("RCS values must be >= 0")
    rows = row_indices(K, LP) + start
    phi = phase_matrix(tracks.ranges[rows], f_c)
    psi = np.sqrt(rcs[rows])
    return RegressionSystem(phi, psi, rows, int(M), int(L), int(P), int(block), tracks.pri_s)


def system_from_amplitudes(tracks, amplitudes, f_c, M, L, P, block=0, strict=True):
    """Same rows as :func:`assemble_system` but with a given complex right-hand side."""
    amplitudes = np.asarray(amplitudes)
    dummy = np.zeros(tracks.span)
    system = assemble_system(tracks, dummy, f_c, M, L, P, block, strict)
    system.psi = amplitudes[system.row_pri_indices].astype(np.complex128)
    return system


def solve_reflectivities(system, transpose=False):
    """Least-squares ``A`` for ``Phi A = Psi`` via a QR factorization.

    Returns ``(A, residual, condition)`` with residual
    ``||Psi - Phi A||^2 / ||Psi||^2``. ``transpose=True`` solves the
    normal equations with the plain transpose ``Phi^T`` instead of the
    conjugate transpose; it is kept only for literal comparisons and is not a
    least-squares solution for complex data.
    """
    phi = np.asarray(system.phi, dtype=np.complex128)
    psi = np.asarray(system.psi).astype(np.complex128)
    K, B = phi.shape
    if K < B:
        raise SingularityError(f"rank at most {K} < {B} unknowns", float("inf"))
    sv = np.linalg.svd(phi, compute_uv=False)
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else float("inf")
    if not cond <= MAX_CONDITION:
        raise SingularityError("regression matrix is rank deficient or ill-conditioned", cond)
    if transpose:
        a = np.linalg.solve(phi.T @ phi, phi.T @ psi)
    else:
        q, r = scipy.linalg.qr(phi, mode="economic")
        a = scipy.linalg.solve_triangular(r, q.conj().T @ psi)
    return a, relative_residual(phi, psi, a), cond


def relative_residual(phi, psi, a):
    psi = np.asarray(psi)
    denom = float(np.vdot(psi, psi).real)
    err = psi - phi @ a
    num = float(np.vdot(err, err).real)
    return num / denom if denom > 0 else 0.0


def estimate_block(tracks, rcs, f_c, M, L, P, block=0, transpose=False):
    """Assemble and solve one block, returning a :class:`ScattererSet`."""
    system = assemble_system(tracks, rcs, f_c, M, L, P, block)
    a, res, cond = solve_reflectivities(system, transpose=transpose)
    LP = L * P
    span = (block * LP, (block + 1) * LP)
    return ScattererSet(a, tracks.block(*span), block, res, cond, span)


@dataclass
class SweepRow:
    M: int
    L: int
    K: int
    mean_residual: float
    n_blocks: int


@dataclass
class SweepTable:
    rows: list
    skipped: list

    def best(self):
        return self.rows[0] if self.rows else None


def sweep_parameters(tracks, rcs, f_c, candidate_M, candidate_L, P, amplitudes=None):
    """Mean relative residual over every complete block for each (M, L).

    Combinations with ``K < B``, no complete block, or only singular blocks
    are skipped and listed in ``skipped`` with the reason. ``amplitudes``
    optionally replaces ``sqrt(rcs)`` with a complex right-hand side.
    """
    rows, skipped = [], []
    B = tracks.n_scatterers
    for L in candidate_L:
        for M in candidate_M:
            K = row_count(M, L, P)
            if K < B:
                skipped.append((M, L, K, f"K={K} < B={B}"))
                continue
            n_blocks = block_count(tracks, L, P)
            if n_blocks == 0:
                skipped.append((M, L, K, "no complete block in the data span"))
                continue
            residuals = []
            for blk in range(n_blocks):
                if amplitudes is None:
                    system = assemble_system(tracks, rcs, f_c, M, L, P, blk)
                else:
                    system = system_from_amplitudes(tracks, amplitudes, f_c, M, L, P, blk)
                try:
                    _, res, _ = solve_reflectivities(system)
                except SingularityError:
                    continue
                residuals.append(res)
            if not residuals:
                skipped.append((M, L, K, "all blocks singular"))
                continue
            rows.append(SweepRow(int(M), int(L), K, float(np.mean(residuals)), len(residuals)))
    rows.sort(key=lambda r: (r.mean_residual, r.K, r.M, r.L))
    return SweepTable(rows, skipped)


# ----------------------------------------------------------------------- CSV io

COEFF_COLUMNS = ["block_index", "b", "re_a", "im_a", "abs_a", "residual"]


def write_coefficients_csv(sets, path):
    """One row per (block, scatterer); ``b`` is 1-based."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(COEFF_COLUMNS)
        for s in sets:
            for b, a in enumerate(s.reflectivities.tolist(), start=1):
                w.writerow([s.block, b, repr(a.real), repr(a.imag), repr(abs(a)), repr(float(s.residual))])


def read_coefficients_csv(path):
    """Return ``{block: (reflectivities, residual)}``."""
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        if next(reader, None) != COEFF_COLUMNS:
            raise FormatError(f"{path}: expected header {','.join(COEFF_COLUMNS)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(COEFF_COLUMNS):
                raise FormatError(f"{path}:{lineno}: ragged row")
            blk, b = int(row[0]), int(row[1])
            vals, res = out.setdefault(blk, ([], float(row[5])))
            if b != len(vals) + 1:
                raise FormatError(f"{path}:{lineno}: scatterer index {b} out of order")
            vals.append(complex(float(row[2]), float(row[3])))
    return {k: (np.array(v, dtype=np.complex128), r) for k, (v, r) in sorted(out.items())}
