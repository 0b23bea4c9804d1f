"""INI run configuration: schema, defaults, parsing and a generated key reference."""
from __future__ import annotations

import configparser
import math
from dataclasses import dataclass

from .errors import ConfigError


def _float(s):
    return float(s)


def _opt_float(s):
    return None if s.strip() == "" else float(s)


def _int(s):
    v = float(s)
    if v != int(v):
        raise ValueError(f"{s!r} is not an integer")
    return int(v)


def _bool(s):
    t = s.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"{s!r} is not a boolean")


def _str(s):
    return s.strip()


def _list(conv):
    def parse(s):
        return [conv(t) for t in s.replace(";", ",").split(",") if t.strip()]
    return parse


def _vec3(s):
    v = _list(float)(s)
    if len(v) != 3:
        raise ValueError("expected three comma-separated numbers")
    return tuple(v)


# section -> key -> (default text, parser, help)
SCHEMA = {
    "paths": {
        "mesh": ("", _str, "mesh frames: printf pattern (frame_%04d.obj), glob or directory"),
        "markers": ("", _str, "marker track CSV (time,<name>_x,<name>_y,<name>_z,...)"),
        "output": ("out", _str, "output directory"),
        "rcs_csv": ("", _str, "existing RCS CSV; when set the ray tracing stage is skipped"),
        "coefficients": ("", _str, "existing coefficient CSV for the synth stage"),
        "reference_cube": ("", _str, "measured RDC1 cube to compare against (optional)"),
    },
    "radar": {
        "f_c": ("77e9", _float, "carrier frequency [Hz]"),
        "bandwidth": ("2e9", _float, "chirp bandwidth [Hz]"),
        "f_s": ("10e6", _float, "fast-time sampling rate [Hz]"),
        "t_upchirp": ("51.2e-6", _float, "up-chirp duration [s]"),
        "t_pri": ("61.2e-6", _float, "pulse repetition interval [s]"),
        "chirps_per_cpi": ("1024", _int, "chirps per coherent processing interval (P)"),
        "position": ("0, 0, 0.65", _vec3, "radar position x, y, z [m]"),
    },
    "aspect": {
        "phi_i_deg": ("0", _float, "incident azimuth [deg], direction from target to radar"),
        "phi_s_deg": ("", _opt_float, "scattered azimuth [deg]; empty means monostatic"),
        "pairs": ("vv, hh, hv, vh", _list(_str), "polarization pairs to trace (transmit then receive)"),
        "material": ("skin77", _str, "skin77, skin24, pec or custom"),
        "relative_permittivity": ("6.63", _float, "eps_r for material = custom"),
        "conductivity": ("38.1", _float, "sigma_c [S/m] for material = custom"),
        "max_bounces": ("3", _int, "specular bounces followed per ray"),
        "ray_spacing": ("", _opt_float, "ray grid spacing [m]; empty means lambda/10"),
        "coarse": ("false", _bool, "allow ray_spacing above lambda/10"),
        "groups": ("32", _int, "bounding groups per mesh frame"),
        "frame_rate": ("60", _float, "mesh and marker frame rate [Hz]"),
        "bistatic_step_deg": ("1", _float, "phi_s step of the rcs --bistatic sweep [deg]"),
    },
    "estimation": {
        "M": ("80", _int, "PRI stride between regression rows"),
        "L": ("2", _int, "CPIs per block (T_long = L P T_PRI)"),
        "transpose": ("false", _bool, "use the plain transpose instead of the Hermitian solve"),
        "sweep_M": ("20, 40, 80, 100, 160", _list(_int), "M candidates for the sweep command"),
        "sweep_L": ("1, 2, 4", _list(_int), "L candidates for the sweep command"),
    },
    "signature": {
        "window": ("hann", _str, "1-D window for range-time and Doppler-time"),
        "window2d": ("hann", _str, "window used on both axes of range-Doppler maps"),
        "doppler_mode": ("first_sample", _str, "first_sample or range_summed"),
        "residual_video_phase": ("true", _bool, "keep the exp(-j pi gamma tau^2) term"),
        "floor_db": ("-40", _float, "display/export floor [dB]"),
        "formats": ("csv, bin, pgm", _list(_str), "exports to write: csv, bin, pgm"),
    },
    "compare": {
        "cfar": ("true", _bool, "apply OS-CFAR to the reference signatures"),
        "guard": ("2", _int, "OS-CFAR guard ring width [cells]"),
        "train": ("4", _int, "OS-CFAR training ring width [cells]"),
        "rank": ("0", _int, "OS-CFAR order statistic k; 0 means 3/4 of the ring"),
        "pfa": ("1e-3", _float, "OS-CFAR design false-alarm probability"),
        "nmse_domain": ("db", _str, "linear or db"),
        "ssim_domain": ("db", _str, "linear or db"),
    },
    "run": {
        "seed": ("0", _int, "seed for stochastic modes (noise)"),
        "noise_std": ("0", _float, "complex white noise std added to synthesized cubes"),
    },
}

MATERIALS = ("skin77", "skin24", "pec", "custom")


@dataclass
class RunConfig:
    values: dict  # section -> key -> parsed value
    source: str = ""

    def __getitem__(self, section):
        return self.values[section]

    def radar_mapping(self, L):
        r = self.values["radar"]
        keys = ("f_c", "bandwidth", "f_s", "t_upchirp", "t_pri", "chirps_per_cpi")
        out = {k: r[k] for k in keys}
        out["cpis_per_block"] = L
        return out


def load_config(path=None, text=None):
    """Parse an INI file (or text); unknown sections or keys are errors."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        if text is not None:
            parser.read_string(text)
        elif path is not None:
            with open(path, encoding="utf-8") as fh:
                parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"{path or '<text>'}: {exc}") from None
    values = {}
    for section, keys in SCHEMA.items():
        values[section] = {}
        given = parser[section] if parser.has_section(section) else {}
        for key, (default, conv, _) in keys.items():
            raw = given.get(key, default)
            try:
                values[section][key] = conv(raw)
            except ValueError as exc:
                raise ConfigError(f"[{section}] {key} = {raw!r}: {exc}") from None
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        for key in parser[section]:
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
    cfg = RunConfig(values, str(path or ""))
    _cross_check(cfg)
    return cfg


def _cross_check(cfg):
    a, e, s, c = cfg["aspect"], cfg["estimation"], cfg["signature"], cfg["compare"]
    if a["material"] not in MATERIALS:
        raise ConfigError(f"material must be one of {MATERIALS}")
    for p in a["pairs"]:
        if p not in ("vv", "hh", "hv", "vh"):
            raise ConfigError(f"unknown polarization pair {p!r}")
    if e["M"] < 1 or e["L"] < 1:
        raise ConfigError("M and L must be >= 1")
    if s["doppler_mode"] not in ("first_sample", "range_summed"):
        raise ConfigError("doppler_mode must be first_sample or range_summed")
    for f in s["formats"]:
        if f not in ("csv", "bin", "pgm"):
            raise ConfigError(f"unknown export format {f!r}")
    for key in ("nmse_domain", "ssim_domain"):
        if c[key] not in ("linear", "db"):
            raise ConfigError(f"{key} must be linear or db")
    if not math.isfinite(a["frame_rate"]) or a["frame_rate"] <= 0:
        raise ConfigError("frame_rate must be positive")


def reference_text():
    """Markdown reference of every configuration key."""
    lines = ["# Configuration keys", ""]
    for section, keys in SCHEMA.items():
        lines.append(f"## [{section}]")
        lines.append("")
        for key, (default, _, text) in keys.items():
            shown = default if default != "" else "(empty)"
            lines.append(f"- `{key}` (default `{shown}`): {text}")
        lines.append("")
    return "\n".join(lines)


def default_ini(overrides=None):
    """INI text with every default, optionally overriding ``{section: {key: text}}``."""
    overrides = overrides or {}
    out = []
    for section, keys in SCHEMA.items():
        out.append(f"[{section}]")
        for key, (default, _, _) in keys.items():
            out.append(f"{key} = {overrides.get(section, {}).get(key, default)}")
        out.append("")
    return "\n".join(out)
