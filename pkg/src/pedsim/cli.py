"""Command-line pipeline: ray tracing -> regression -> synthesis -> signatures -> metrics.

Every stage writes its artifact to the output directory and can also be run
on its own from a previously written artifact.

Exit codes: 0 success, 1 validation or input error, 2 every block failed.
"""
from __future__ import annotations

import argparse
import csv
import glob
import json
import os
import re
import sys
import warnings
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .constants import INTERNAL_FLOOR_DB
from .em_sbr import (
    PEC, SKIN_24GHZ, SKIN_77GHZ, AspectConfig, Material, bistatic_sweep, read_rcs_csv,
    rcs_sequence, write_bistatic_csv, write_rcs_csv,
)
from .errors import PedsimError, SingularityError
from .estimation import (
    ScattererSet, assemble_system, read_coefficients_csv, row_count, solve_reflectivities,
    sweep_parameters, write_coefficients_csv,
)
from .kinematics import interpolate_rcs, interpolate_tracks, max_span
from .metrics import ComparisonReport, nmse, ssim, write_report_csv
from .radar_synth import RadarDataCube, derive_params, read_cube, read_cube_array, synthesize_cube, write_cube
from .scene_io import expand_pattern, load_marker_tracks, load_mesh_sequence, write_marker_tracks, write_mesh_sequence
from .signatures import (
    SignatureMatrix, doppler_time, os_cfar, range_doppler, range_time, write_heatmap,
    write_signature_binary, write_signature_csv,
)

EXIT_OK, EXIT_INVALID, EXIT_ALL_FAILED = 0, 1, 2


class AllBlocksFailed(Exception):
    pass


# ------------------------------------------------------------------ helpers


def _material(cfg):
    a = cfg["aspect"]
    name = a["material"]
    if name == "skin77":
        return SKIN_77GHZ
    if name == "skin24":
        return SKIN_24GHZ
    if name == "pec":
        return PEC
    return Material(a["relative_permittivity"], a["conductivity"])


def _aspect(cfg):
    a = cfg["aspect"]
    return AspectConfig(
        phi_i_deg=a["phi_i_deg"], phi_s_deg=a["phi_s_deg"], f_c=cfg["radar"]["f_c"],
        max_bounces=a["max_bounces"], ray_spacing=a["ray_spacing"], coarse=a["coarse"],
    )


def _require(path, what):
    if not path:
        raise PedsimError(f"config [paths] {what} is not set")
    return path


def _require_file(path, what):
    _require(path, what)
    if not os.path.isfile(path):
        raise FileNotFoundError(f"{what} file not found: {path}")
    return path


def _out_dir(cfg, override):
    out = Path(override or cfg["paths"]["output"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _params(cfg):
    return derive_params(cfg.radar_mapping(cfg["estimation"]["L"]))


def _rcs_stage(cfg, out, threads):
    paths = cfg["paths"]
    if paths["rcs_csv"]:
        return read_rcs_csv(_require_file(paths["rcs_csv"], "rcs_csv"))
    pattern = _require(paths["mesh"], "mesh")
    frames = load_mesh_sequence(pattern, cfg["aspect"]["frame_rate"])
    series = rcs_sequence(
        frames, _material(cfg), _aspect(cfg), pairs=cfg["aspect"]["pairs"],
        n_groups=cfg["aspect"]["groups"], threads=threads,
    )
    write_rcs_csv(series, out / "rcs.csv")
    # later stages see exactly what a standalone run would read back
    return read_rcs_csv(out / "rcs.csv")


def _tracks_stage(cfg, series):
    """Marker tracks and sigma_vv on the PRI grid covering every complete block."""
    markers = load_marker_tracks(_require_file(cfg["paths"]["markers"], "markers"))
    params = _params(cfg)
    t0 = max(float(markers.times[0]), float(series.times[0]))
    span = min(max_span(markers.times, params.t_pri, t0), max_span(series.times, params.t_pri, t0))
    n_blocks = span // params.block_pris
    if n_blocks < 1:
        raise PedsimError(
            f"data cover {span} PRIs, fewer than one block of {params.block_pris}"
        )
    span = n_blocks * params.block_pris
    tracks = interpolate_tracks(markers, cfg["radar"]["position"], params.t_pri, span, t0)
    if "vv" not in series.sigma:
        raise PedsimError("the regression needs sigma_vv; add vv to [aspect] pairs")
    sigma = interpolate_rcs(series, params.t_pri, span, "vv", t0)
    return tracks, sigma, n_blocks, params


def _estimate_stage(cfg, tracks, sigma, n_blocks, params, out):
    e = cfg["estimation"]
    sets, status = [], []
    LP = params.block_pris
    for blk in range(n_blocks):
        try:
            system = assemble_system(tracks, sigma, params.f_c, e["M"], e["L"], params.chirps_per_cpi, blk)
            a, res, cond = solve_reflectivities(system, transpose=e["transpose"])
        except SingularityError as exc:
            print(f"block {blk}: failed: {exc}", file=sys.stderr)
            status.append({"block": blk, "status": "failed", "error": str(exc)})
            continue
        span = (blk * LP, (blk + 1) * LP)
        sets.append(ScattererSet(a, tracks.block(*span), blk, res, cond, span))
        status.append({"block": blk, "status": "ok", "residual": res, "condition": cond})
    write_coefficients_csv(sets, out / "coefficients.csv")
    return sets, status


def _synth_stage(cfg, sets, params, out):
    cubes = []
    noise = cfg["run"]["noise_std"]
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        for s in sets:
            cube = synthesize_cube(
                s, params, residual_video_phase=cfg["signature"]["residual_video_phase"],
                noise_std=noise, seed=cfg["run"]["seed"] + s.block,
            )
            path = out / f"cube_block{s.block:03d}.rdc"
            write_cube(cube, path)
            cubes.append((s.block, read_cube(path, params)))
    aliased = any(issubclass(w.category, RuntimeWarning) for w in caught)
    return cubes, aliased


def _signatures(cube, cfg):
    s = cfg["signature"]
    sigs = {
        "range_time": range_time(cube, s["window"]),
        "doppler_time": doppler_time(cube, s["window"], s["doppler_mode"] == "range_summed"),
    }
    n_cpi = cube.n_pris // cube.params.chirps_per_cpi
    for l in range(n_cpi):
        sigs[f"range_doppler_cpi{l}"] = range_doppler(cube, l, s["window2d"])
    return sigs


def _export(sigs, cfg, directory, tag):
    directory.mkdir(parents=True, exist_ok=True)
    s = cfg["signature"]
    for name, sig in sigs.items():
        base = directory / f"{tag}_{name}"
        if "csv" in s["formats"]:
            write_signature_csv(sig, f"{base}.csv", s["floor_db"])
        if "bin" in s["formats"]:
            write_signature_binary(sig, f"{base}.sig")
        if "pgm" in s["formats"]:
            write_heatmap(sig, f"{base}.pgm", s["floor_db"])


def _signature_stage(cfg, cubes, out):
    result = {}
    for blk, cube in cubes:
        sigs = _signatures(cube, cfg)
        _export(sigs, cfg, out / "signatures", f"block{blk:03d}")
        result[blk] = sigs
    return result


def _cfar_masked(sig, cfg):
    c = cfg["compare"]
    mask = os_cfar(sig, c["guard"], c["train"], c["rank"] or None, None, c["pfa"])
    vals = np.where(mask, sig.values, INTERNAL_FLOOR_DB)
    return SignatureMatrix(sig.kind, vals, sig.axes, sig.window, dict(sig.meta, cfar=True))


def _compare_stage(cfg, sim_sigs, ref_cube_path, params, out):
    """Per-kind reports of simulated blocks against the reference cube blocks."""
    ref = read_cube_array(ref_cube_path)
    if ref.shape[0] != params.n_samples:
        raise PedsimError(f"reference cube has {ref.shape[0]} fast-time rows, expected {params.n_samples}")
    LP = params.block_pris
    c = cfg["compare"]
    rows = {}
    for blk, sigs in sorted(sim_sigs.items()):
        if (blk + 1) * LP > ref.shape[1]:
            print(f"block {blk}: reference cube too short, skipped", file=sys.stderr)
            continue
        ref_sigs = _signatures(RadarDataCube(ref[:, blk * LP:(blk + 1) * LP], params), cfg)
        for name, sim in sigs.items():
            meas = _cfar_masked(ref_sigs[name], cfg) if c["cfar"] else ref_sigs[name]
            kind = "range_doppler" if name.startswith("range_doppler") else name
            rows.setdefault(kind, []).append(
                (len(rows.get(kind, [])), nmse(sim, meas, c["nmse_domain"]), ssim(sim, meas, c["ssim_domain"]))
            )
    reports = {}
    for kind, rr in rows.items():
        rep = ComparisonReport(float(np.mean([r[1] for r in rr])), float(np.mean([r[2] for r in rr])), rr)
        write_report_csv(rep, out / f"report_{kind}.csv")
        reports[kind] = rep
    return reports


def _metadata(cfg, params, status, aliased, out):
    e, s, a = cfg["estimation"], cfg["signature"], cfg["aspect"]
    meta = {
        "divergences": {
            "field_aggregation": "physical-optics currents at the last hit of each ray tube",
            "row_count_rounding": "nearest integer of L*P/M",
            "row_pri_indices": "round(k*(LP-1)/(K-1)), k = 0..K-1",
            "least_squares": "transpose" if e["transpose"] else "hermitian",
            "rcs_interpolation": "natural cubic spline on linear sigma, clamped at 0",
            "rect_window": "sample n (0-based) valid when (n+1)*T_s >= tau",
            "residual_video_phase": bool(s["residual_video_phase"]),
            "doppler_mode": s["doppler_mode"],
            "t_long_s": params.t_long,
            "t_long_differs_from_12_5_ms": abs(params.t_long - 12.5e-3) > 1e-6,
            "coarse_ray_spacing": bool(a["coarse"]),
            "unambiguous_range_exceeded": bool(aliased),
        },
        "derived": {
            "K": row_count(e["M"], e["L"], params.chirps_per_cpi),
            "N": params.n_samples,
            "range_resolution_m": params.range_resolution,
            "doppler_resolution_hz": params.doppler_resolution,
        },
        "blocks": status,
        "config": {sec: vals for sec, vals in cfg.values.items() if sec != "paths"},
    }
    with open(out / "run_metadata.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True, default=list)
        fh.write("\n")


# ------------------------------------------------------------------ commands


def cmd_rcs(cfg, args):
    out = _out_dir(cfg, args.output)
    if not cfg["paths"]["mesh"]:
        raise PedsimError("config [paths] mesh is not set")
    series = _rcs_stage(cfg, out, args.threads)
    print(f"wrote {out / 'rcs.csv'} ({len(series)} frames)")
    if args.bistatic:
        frames = load_mesh_sequence(cfg["paths"]["mesh"], cfg["aspect"]["frame_rate"])
        step = cfg["aspect"]["bistatic_step_deg"]
        phi_s = np.arange(0.0, 360.0, step)
        phi, sigma = bistatic_sweep(frames[0], _material(cfg), _aspect(cfg), phi_s,
                                    n_groups=cfg["aspect"]["groups"], threads=args.threads)
        write_bistatic_csv(phi, sigma, out / "bistatic.csv")
        print(f"wrote {out / 'bistatic.csv'} ({len(phi)} angles)")
    return EXIT_OK


def cmd_estimate(cfg, args):
    out = _out_dir(cfg, args.output)
    series = _rcs_stage(cfg, out, args.threads)
    tracks, sigma, n_blocks, params = _tracks_stage(cfg, series)
    sets, _ = _estimate_stage(cfg, tracks, sigma, n_blocks, params, out)
    print(f"wrote {out / 'coefficients.csv'} ({len(sets)}/{n_blocks} blocks)")
    if not sets:
        raise AllBlocksFailed()
    return EXIT_OK


def cmd_synth(cfg, args):
    out = _out_dir(cfg, args.output)
    coeff_path = _require_file(cfg["paths"]["coefficients"], "coefficients")
    markers = load_marker_tracks(_require_file(cfg["paths"]["markers"], "markers"))
    params = _params(cfg)
    coeffs = read_coefficients_csv(coeff_path)
    if not coeffs:
        raise AllBlocksFailed()
    LP = params.block_pris
    n_blocks = max(coeffs) + 1
    tracks = interpolate_tracks(markers, cfg["radar"]["position"], params.t_pri, n_blocks * LP)
    sets = [
        ScattererSet(a, tracks.block(b * LP, (b + 1) * LP), b, res, valid_span=(b * LP, (b + 1) * LP))
        for b, (a, res) in coeffs.items()
    ]
    cubes, _ = _synth_stage(cfg, sets, params, out)
    print(f"wrote {len(cubes)} cube(s) to {out}")
    return EXIT_OK


def cmd_signature(cfg, args):
    out = _out_dir(cfg, args.output)
    params = _params(cfg)
    files = args.cube or sorted(glob.glob(str(out / "cube_block*.rdc")))
    if not files:
        raise FileNotFoundError("no cube files given or found in the output directory")
    for i, path in enumerate(files):
        cube = RadarDataCube(read_cube_array(path), params)
        stem = Path(path).stem
        tag = stem[len("cube_"):] if re.fullmatch(r"cube_block\d+", stem) else stem
        _export(_signatures(cube, cfg), cfg, out / "signatures", tag)
    print(f"wrote signatures for {len(files)} cube(s) to {out / 'signatures'}")
    return EXIT_OK


def cmd_compare(cfg, args):
    out = _out_dir(cfg, args.output)
    params = _params(cfg)
    ref = args.reference or cfg["paths"]["reference_cube"]
    _require_file(ref, "reference_cube")
    sim_dir = Path(args.sim_dir or out)
    files = sorted(sim_dir.glob("cube_block*.rdc"))
    if not files:
        raise FileNotFoundError(f"no simulated cubes in {sim_dir}")
    sims = {}
    for path in files:
        blk = int(path.stem.replace("cube_block", ""))
        sims[blk] = _signatures(RadarDataCube(read_cube_array(path), params), cfg)
    reports = _compare_stage(cfg, sims, ref, params, out)
    for kind, rep in sorted(reports.items()):
        print(f"{kind}: nmse={rep.nmse:.6g} ssim={rep.ssim:.6g}")
    return EXIT_OK


def cmd_sweep(cfg, args):
    out = _out_dir(cfg, args.output)
    series = _rcs_stage(cfg, out, args.threads)
    e = cfg["estimation"]
    markers = load_marker_tracks(_require_file(cfg["paths"]["markers"], "markers"))
    params = _params(cfg)
    t0 = max(float(markers.times[0]), float(series.times[0]))
    span = min(max_span(markers.times, params.t_pri, t0), max_span(series.times, params.t_pri, t0))
    tracks = interpolate_tracks(markers, cfg["radar"]["position"], params.t_pri, span, t0)
    sigma = interpolate_rcs(series, params.t_pri, span, "vv", t0)
    table = sweep_parameters(tracks, sigma, params.f_c, e["sweep_M"], e["sweep_L"], params.chirps_per_cpi)
    with open(out / "sweep.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["M", "L", "K", "mean_residual", "n_blocks", "note"])
        for r in table.rows:
            w.writerow([r.M, r.L, r.K, repr(r.mean_residual), r.n_blocks, ""])
        for M, L, K, note in table.skipped:
            w.writerow([M, L, K, "", 0, f"skipped: {note}"])
    print(f"wrote {out / 'sweep.csv'} ({len(table.rows)} feasible, {len(table.skipped)} skipped)")
    return EXIT_OK


def cmd_pipeline(cfg, args):
    paths = cfg["paths"]
    # validate inputs before any compute
    _require_file(paths["markers"], "markers")
    if paths["rcs_csv"]:
        _require_file(paths["rcs_csv"], "rcs_csv")
    else:
        _require(paths["mesh"], "mesh")
        if not expand_pattern(paths["mesh"]):
            raise FileNotFoundError(f"no mesh files match {paths['mesh']!r}")
    if paths["reference_cube"]:
        _require_file(paths["reference_cube"], "reference_cube")
    _params(cfg)
    out = _out_dir(cfg, args.output)

    series = _rcs_stage(cfg, out, args.threads)
    tracks, sigma, n_blocks, params = _tracks_stage(cfg, series)
    sets, status = _estimate_stage(cfg, tracks, sigma, n_blocks, params, out)
    cubes, aliased = _synth_stage(cfg, sets, params, out)
    sigs = _signature_stage(cfg, cubes, out)
    if paths["reference_cube"] and sigs:
        _compare_stage(cfg, sigs, paths["reference_cube"], params, out)
    _metadata(cfg, params, status, aliased, out)
    print(f"pipeline: {len(sets)}/{n_blocks} blocks ok, outputs in {out}")
    if not sets:
        raise AllBlocksFailed()
    return EXIT_OK


def cmd_make_fixture(args):
    """Synthetic walking mannequin: mesh frames, markers and a ready config."""
    from .synthetic import walking_markers, walking_sequence

    root = Path(args.directory)
    frames = walking_sequence(args.frames, 60.0)
    write_mesh_sequence(frames, root / "mesh")
    write_marker_tracks(walking_markers(args.frames, 60.0), root / "markers.csv")
    ini = cfgmod.default_ini({
        "paths": {"mesh": "mesh/frame_%04d.obj", "markers": "markers.csv", "output": "out"},
        "aspect": {"pairs": "vv", "ray_spacing": "0.004", "coarse": "true"},
    })
    (root / "config.ini").write_text(ini, encoding="utf-8")
    print(f"wrote fixture with {args.frames} frames to {root}")
    return EXIT_OK


def _resolve_paths(cfg):
    """Relative paths in the config are taken relative to the config file."""
    if not cfg.source:
        return cfg
    base = Path(cfg.source).resolve().parent
    for key, val in cfg["paths"].items():
        if val and not os.path.isabs(val):
            cfg["paths"][key] = str(base / val)
    return cfg


COMMANDS = {
    "rcs": (cmd_rcs, "ray-trace every mesh frame and write rcs.csv"),
    "estimate": (cmd_estimate, "estimate reflectivities per block, write coefficients.csv"),
    "synth": (cmd_synth, "synthesize data cubes from coefficients.csv"),
    "signature": (cmd_signature, "range-time, Doppler-time and range-Doppler exports of cubes"),
    "compare": (cmd_compare, "NMSE/SSIM of simulated cubes against a reference cube"),
    "sweep": (cmd_sweep, "mean regression residual over candidate (M, L)"),
    "pipeline": (cmd_pipeline, "run every stage end to end"),
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="pedsim",
        description=__doc__.splitlines()[0],
        epilog=cfgmod.reference_text(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text, epilog=cfgmod.reference_text(),
                           formatter_class=argparse.RawDescriptionHelpFormatter)
        p.add_argument("--config", "-c", help="INI configuration file")
        p.add_argument("--output", "-o", help="output directory (overrides [paths] output)")
        p.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                       help="ray-tracing worker threads (default: all CPUs)")
        if name == "rcs":
            p.add_argument("--bistatic", action="store_true",
                           help="also sweep phi_s over 0..360 deg for the first frame")
        if name == "signature":
            p.add_argument("cube", nargs="*", help="RDC1 cube files (default: cubes in the output dir)")
        if name == "compare":
            p.add_argument("--sim-dir", help="directory holding cube_block*.rdc (default: output dir)")
            p.add_argument("--reference", help="measured RDC1 cube (overrides [paths] reference_cube)")
    ref = sub.add_parser("config-reference", help="print every configuration key")
    ref.add_argument("--defaults", action="store_true", help="print a default INI file instead")
    fx = sub.add_parser("make-fixture", help="write a synthetic walking-mannequin data set")
    fx.add_argument("directory")
    fx.add_argument("--frames", type=int, default=20)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "config-reference":
            print(cfgmod.default_ini() if args.defaults else cfgmod.reference_text())
            return EXIT_OK
        if args.command == "make-fixture":
            return cmd_make_fixture(args)
        if args.threads < 1:
            raise PedsimError("--threads must be >= 1")
        cfg = _resolve_paths(cfgmod.load_config(args.config))
        return COMMANDS[args.command][0](cfg, args)
    except AllBlocksFailed:
        print("error: every block failed", file=sys.stderr)
        return EXIT_ALL_FAILED
    except (PedsimError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
