"""NMSE and global SSIM between a simulated and a reference signature.

Both functions accept :class:`~pedsim.signatures.SignatureMatrix` objects or
plain arrays. Arrays are used exactly as given. Signature matrices are
mapped to a domain first: ``"db"`` clipped at the -40 dB display floor (the
default, i.e. the images as displayed) or ``"linear"`` power.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .constants import DISPLAY_FLOOR_DB
from .errors import DivisionError, ParameterError, ShapeError
from .signatures import SignatureMatrix

DOMAINS = ("linear", "db")
# A denominator term counts as underflowed below this fraction of D^2.
UNDERFLOW = 1e-12


def as_values(x, domain, floor_db=DISPLAY_FLOOR_DB):
    if domain not in DOMAINS:
        raise ParameterError(f"domain must be one of {DOMAINS}")
    if isinstance(x, SignatureMatrix):
        return x.linear() if domain == "linear" else x.display(floor_db)
    return np.asarray(x, dtype=float)


def _pair(sim, meas, domain, floor_db):
    a = as_values(sim, domain, floor_db)
    b = as_values(meas, domain, floor_db)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch {a.shape} vs {b.shape}")
    return a, b


def nmse(sim, meas, domain="db", floor_db=DISPLAY_FLOOR_DB):
    """||sim - meas||^2 / ||meas||^2; ``meas`` is always the reference."""
    a, b = _pair(sim, meas, domain, floor_db)
    den = float(np.sum(b * b))
    if den == 0:
        raise DivisionError("reference signature is all zeros")
    d = a - b
    return float(np.sum(d * d)) / den


def ssim(sim, meas, domain="db", floor_db=DISPLAY_FLOOR_DB):
    """Global structural similarity (means, variances, covariance of the whole image).

    The stabilising constants ``C1 = (0.01 D)^2`` and ``C2 = (0.03 D)^2``
    (``D`` the joint dynamic range) enter a factor only when its denominator
    has underflowed, so well-conditioned inputs see the constant-free form.
    """
    a, b = _pair(sim, meas, domain, floor_db)
    if a.size == 0:
        raise ShapeError("empty input")
    if np.array_equal(a, b):
        return 1.0
    mu_a, mu_b = float(a.mean()), float(b.mean())
    da, db = a - mu_a, b - mu_b
    var_a, var_b = float(np.mean(da * da)), float(np.mean(db * db))
    cov = float(np.mean(da * db))
    dyn = max(float(a.max()), float(b.max())) - min(float(a.min()), float(b.min()))
    tiny = UNDERFLOW * dyn * dyn
    lum_den = mu_a * mu_a + mu_b * mu_b
    con_den = var_a + var_b
    c1 = (0.01 * dyn) ** 2 if lum_den <= tiny else 0.0
    c2 = (0.03 * dyn) ** 2 if con_den <= tiny else 0.0
    lum = (2 * mu_a * mu_b + c1) / (lum_den + c1)
    con = (2 * cov + c2) / (con_den + c2)
    return lum * con


@dataclass
class ComparisonReport:
    nmse: float
    ssim: float
    blocks: list = field(default_factory=list)  # [(block, nmse, ssim), ...]


def compare(sim, meas, nmse_domain="db", ssim_domain="db"):
    return ComparisonReport(nmse(sim, meas, nmse_domain), ssim(sim, meas, ssim_domain))


def compare_blocks(sims, meases, nmse_domain="db", ssim_domain="db"):
    """Per-block NMSE/SSIM; the summary values are the block means."""
    if len(sims) != len(meases):
        raise ShapeError(f"{len(sims)} simulated blocks vs {len(meases)} reference blocks")
    if not sims:
        raise ShapeError("no blocks to compare")
    rows = [(i, nmse(s, m, nmse_domain), ssim(s, m, ssim_domain)) for i, (s, m) in enumerate(zip(sims, meases))]
    return ComparisonReport(
        float(np.mean([r[1] for r in rows])), float(np.mean([r[2] for r in rows])), rows
    )


def write_report_csv(report, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["block", "nmse", "ssim"])
        rows = report.blocks or [("all", report.nmse, report.ssim)]
        for blk, n, s in rows:
            w.writerow([blk, repr(float(n)), repr(float(s))])
