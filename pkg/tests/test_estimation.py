import math

import numpy as np
import pytest

from pedsim.errors import RangeError, SingularityError, UnderdeterminedError
from pedsim.estimation import (
    RegressionSystem, ScattererSet, assemble_system, estimate_block, phase_matrix,
    read_coefficients_csv, relative_residual, row_count, row_indices, solve_reflectivities,
    sweep_parameters, system_from_amplitudes, write_coefficients_csv,
)
from pedsim.kinematics import PrfTrackSet, interpolate_tracks, max_span
from pedsim.synthetic import walking_markers

F_C = 77e9
PRI = 61.2e-6


@pytest.fixture(scope="module")
def walk_tracks():
    m = walking_markers(60)
    return interpolate_tracks(m, pri=PRI, span=max_span(m.times, PRI))


def _random_a(B, seed=0):
    rng = np.random.default_rng(seed)
    return rng.normal(size=B) + 1j * rng.normal(size=B)


def test_operating_point_rows():
    assert row_count(80, 2, 1024) == 26


def test_row_indices_span_block():
    idx = row_indices(26, 2048)
    assert idx[0] == 0 and idx[-1] == 2047
    assert np.all(np.diff(idx) > 0)
    assert np.allclose(np.diff(idx), 2047 / 25, atol=1)


def test_single_scatterer_zero_range():
    phi = phase_matrix(np.zeros((1, 1)), F_C)
    assert phi.tolist() == [[1]]
    sys = RegressionSystem(phi, np.array([2.0]), np.array([0]), 1, 1, 1)
    a, res, _ = solve_reflectivities(sys)
    assert a[0] == pytest.approx(2.0) and res == 0.0


def test_unit_modulus(walk_tracks):
    phi = assemble_system(walk_tracks, np.ones(walk_tracks.span), F_C, 80, 2, 1024).phi
    assert np.max(np.abs(np.abs(phi) - 1)) < 1e-12


def test_exact_recovery(walk_tracks):
    a_true = _random_a(23)
    amps = phase_matrix(walk_tracks.ranges, F_C) @ a_true
    sys = system_from_amplitudes(walk_tracks, amps, F_C, 80, 2, 1024)
    assert sys.K == 26
    a, res, cond = solve_reflectivities(sys)
    assert np.linalg.norm(a - a_true) / np.linalg.norm(a_true) < 1e-9
    assert res < 1e-18 and cond < 1e12


def test_static_scatterers_singular():
    tracks = PrfTrackSet.from_ranges(np.tile([[2.0, 2.5, 3.0]], (4096, 1)), PRI)
    sys = assemble_system(tracks, np.ones(4096), F_C, 80, 2, 1024)
    with pytest.raises(SingularityError):
        solve_reflectivities(sys)


def test_underdetermined_and_range(walk_tracks):
    with pytest.raises(UnderdeterminedError):
        assemble_system(walk_tracks, np.ones(walk_tracks.span), F_C, 100, 2, 1024)
    with pytest.raises(RangeError):
        assemble_system(walk_tracks, np.ones(walk_tracks.span), F_C, 80, 2, 1024, block=7)


def test_residual_optimality(walk_tracks):
    rcs = np.abs(phase_matrix(walk_tracks.ranges, F_C) @ _random_a(23, 1)) ** 2
    sys = assemble_system(walk_tracks, rcs, F_C, 80, 2, 1024)
    a, res, _ = solve_reflectivities(sys)
    rng = np.random.default_rng(9)
    scale = 1e-4 * np.linalg.norm(a)
    for _ in range(100):
        d = rng.normal(size=23) + 1j * rng.normal(size=23)
        d *= scale / np.linalg.norm(d)
        assert relative_residual(sys.phi, sys.psi, a + d) > res


def _moving_tracks(B, seed):
    rng = np.random.default_rng(seed)
    t = np.arange(2048) * PRI
    r = rng.uniform(2, 6, B) + np.outer(t, rng.uniform(-2, 2, B))
    return PrfTrackSet.from_ranges(r, PRI)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_phase_shift_covariance(seed):
    tracks = _moving_tracks(6, seed)
    rcs = np.abs(phase_matrix(tracks.ranges, F_C) @ _random_a(6, seed)) ** 2
    base = estimate_block(tracks, rcs, F_C, 80, 2, 1024)
    dr = 0.0123
    moved = estimate_block(PrfTrackSet.from_ranges(tracks.ranges + dr, PRI), rcs, F_C, 80, 2, 1024)
    turn = np.exp(-1j * 4 * math.pi * F_C * dr / 3e8)
    assert np.allclose(moved.reflectivities, base.reflectivities / turn, rtol=1e-9, atol=0)
    assert np.allclose(np.abs(moved.reflectivities), np.abs(base.reflectivities), rtol=1e-9)


def test_transpose_mode_differs_for_complex(walk_tracks):
    amps = phase_matrix(walk_tracks.ranges, F_C) @ _random_a(23, 3)
    sys = system_from_amplitudes(walk_tracks, amps, F_C, 80, 2, 1024)
    a_h, res_h, _ = solve_reflectivities(sys)
    a_t, res_t, _ = solve_reflectivities(sys, transpose=True)
    assert res_t > res_h


def test_sweep_shape(walk_tracks):
    amps = np.abs(phase_matrix(walk_tracks.ranges, F_C) @ _random_a(23, 4))
    table = sweep_parameters(walk_tracks, None, F_C, [10, 20, 80], [2], 1024, amplitudes=amps)
    by_k = {r.K: r.mean_residual for r in table.rows}
    assert set(by_k) == {26, 102, 205}
    assert by_k[205] > by_k[26]
    assert table.best().K == 26


def test_sweep_single_candidate(walk_tracks):
    table = sweep_parameters(walk_tracks, np.ones(walk_tracks.span), F_C, [80], [2], 1024)
    assert len(table.rows) == 1 and table.rows[0].n_blocks == 7


def test_sweep_skips_underdetermined(walk_tracks):
    table = sweep_parameters(walk_tracks, np.ones(walk_tracks.span), F_C, [100], [2], 1024)
    assert not table.rows and table.skipped[0][:3] == (100, 2, 20)


def test_coefficient_csv_round_trip(tmp_path):
    sets = [ScattererSet(_random_a(4, b), None, b, 0.1 * b) for b in range(3)]
    write_coefficients_csv(sets, tmp_path / "c.csv")
    back = read_coefficients_csv(tmp_path / "c.csv")
    assert sorted(back) == [0, 1, 2]
    for s in sets:
        vals, res = back[s.block]
        assert np.array_equal(vals, s.reflectivities) and res == s.residual
