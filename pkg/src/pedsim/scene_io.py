"""Loading and writing of mesh frames (OBJ subset) and marker tracks (CSV).

Units are meters and seconds everywhere; nothing is rescaled on load.
"""
from __future__ import annotations

import csv
import glob
import os
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    DegenerateGeometryError,
    FormatError,
    OrderingError,
    ParseError,
    UnsupportedGeometryError,
)

# Relative tolerance for collinear triangle vertices: |e1 x e2| <= tol * |e1| * |e2|.
DEGENERACY_TOL = 1e-12
# Marker frame spacing may jitter by this fraction of the mean spacing.
SPACING_TOL = 1e-6


def triangle_double_areas(vertices, triangles):
    """Return |e1 x e2| and |e1|*|e2| for every triangle."""
    p0 = vertices[triangles[:, 0]]
    e1 = vertices[triangles[:, 1]] - p0
    e2 = vertices[triangles[:, 2]] - p0
    cross = np.linalg.norm(np.cross(e1, e2), axis=1)
    scale = np.linalg.norm(e1, axis=1) * np.linalg.norm(e2, axis=1)
    return cross, scale


@dataclass
class MeshFrame:
    """One time-stamped triangulated body pose.

    ``vertices`` is (V, 3) float64 in meters with +z up; ``triangles`` is
    (T, 3) int64 of 0-based vertex indices.
    """

    timestamp: float
    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        self.validate()

    def validate(self):
        n_tri = len(self.triangles)
        if n_tri == 0:
            return
        if len(self.vertices) == 0:
            raise FormatError("mesh has triangles but no vertices")
        if self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices):
            raise FormatError("triangle vertex index out of range")
        if not np.all(np.isfinite(self.vertices)):
            raise FormatError("non-finite vertex coordinate")
        cross, scale = triangle_double_areas(self.vertices, self.triangles)
        bad = np.flatnonzero(~(cross > DEGENERACY_TOL * scale))
        if bad.size:
            raise DegenerateGeometryError(
                f"{bad.size} degenerate triangle(s), first at index {bad[0]}"
            )

    @property
    def n_triangles(self):
        return len(self.triangles)

    def corners(self):
        """(T, 3, 3) array of triangle corner coordinates."""
        return self.vertices[self.triangles]

    def bounds(self):
        used = self.vertices[np.unique(self.triangles)] if self.n_triangles else self.vertices
        return used.min(axis=0), used.max(axis=0)

    def transformed(self, rotation=None, translation=None):
        v = self.vertices
        if rotation is not None:
            v = v @ np.asarray(rotation, dtype=float).T
        if translation is not None:
            v = v + np.asarray(translation, dtype=float)
        return MeshFrame(self.timestamp, v, self.triangles.copy())

    @staticmethod
    def merge(frames, timestamp=None):
        verts, tris, offset = [], [], 0
        for fr in frames:
            verts.append(fr.vertices)
            tris.append(fr.triangles + offset)
            offset += len(fr.vertices)
        ts = frames[0].timestamp if timestamp is None else timestamp
        return MeshFrame(ts, np.concatenate(verts), np.concatenate(tris))


@dataclass
class MarkerTrackSet:
    """B marker positions sampled at a uniform video frame rate.

    ``positions`` is (F, B, 3) in meters; ``times`` is (F,) in seconds.
    """

    times: np.ndarray
    positions: np.ndarray
    names: list = field(default_factory=list)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64)
        self.positions = np.asarray(self.positions, dtype=np.float64)
        if self.positions.ndim != 3 or self.positions.shape[2] != 3:
            raise FormatError("positions must have shape (frames, markers, 3)")
        if self.positions.shape[0] != len(self.times):
            raise FormatError("one position row per timestamp required")
        if self.positions.shape[1] < 1:
            raise FormatError("at least one marker required")
        if not self.names:
            self.names = [f"m{b + 1:02d}" for b in range(self.n_markers)]
        if len(self.names) != self.n_markers:
            raise FormatError("marker name count does not match marker count")
        _check_uniform(self.times)

    @property
    def n_markers(self):
        return self.positions.shape[1]

    @property
    def n_frames(self):
        return len(self.times)

    @property
    def frame_rate_hz(self):
        if self.n_frames < 2:
            return float("nan")
        return (self.n_frames - 1) / (self.times[-1] - self.times[0])


def _check_uniform(times):
    if len(times) < 2:
        return
    dt = np.diff(times)
    bad = np.flatnonzero(dt <= 0)
    if bad.size:
        raise OrderingError(
            f"timestamps not strictly increasing at row {bad[0] + 2} "
            f"({times[bad[0]]!r} -> {times[bad[0] + 1]!r})"
        )
    mean = dt.mean()
    if np.max(np.abs(dt - mean)) > SPACING_TOL * mean:
        raise FormatError("marker frames are not uniformly spaced")


# --------------------------------------------------------------------------- OBJ


def _face_index(token, path, lineno):
    head = token.split("/", 1)[0]
    try:
        idx = int(head)
    except ValueError:
        raise ParseError(f"bad face index {token!r}", path, lineno) from None
    if idx < 1:
        raise ParseError(f"face index must be a positive 1-based integer, got {idx}", path, lineno)
    return idx - 1


def read_obj(path, timestamp=0.0):
    """Parse one OBJ file restricted to ``v`` and ``f`` records.

    Blank lines and ``#`` comments are skipped. Any other record type is a
    parse error; faces with more than three vertices raise
    :class:`UnsupportedGeometryError`.
    """
    path = str(path)
    vertices, triangles = [], []
    with open(path, "r", encoding="ascii") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            tag = parts[0]
            if tag == "v":
                if len(parts) != 4:
                    raise ParseError("vertex needs exactly 3 coordinates", path, lineno)
                try:
                    vertices.append([float(x) for x in parts[1:]])
                except ValueError:
                    raise ParseError(f"bad vertex coordinate in {line!r}", path, lineno) from None
            elif tag == "f":
                if len(parts) - 1 > 3:
                    raise UnsupportedGeometryError(
                        f"only triangles are supported, got {len(parts) - 1}-vertex face", path, lineno
                    )
                if len(parts) - 1 < 3:
                    raise ParseError("face needs 3 vertex indices", path, lineno)
                triangles.append([_face_index(t, path, lineno) for t in parts[1:]])
            else:
                raise ParseError(f"unsupported record {tag!r}", path, lineno)
    verts = np.array(vertices, dtype=np.float64).reshape(-1, 3)
    tris = np.array(triangles, dtype=np.int64).reshape(-1, 3)
    if tris.size and tris.max() >= len(verts):
        raise ParseError(f"face references vertex {tris.max() + 1} but only {len(verts)} defined", path)
    try:
        return MeshFrame(timestamp, verts, tris)
    except DegenerateGeometryError as exc:
        raise DegenerateGeometryError(f"{path}: {exc}") from None


def write_obj(frame, path):
    # repr() round-trips float64 exactly.
    with open(path, "w", encoding="ascii") as fh:
        for x, y, z in frame.vertices.tolist():
            fh.write(f"v {x!r} {y!r} {z!r}\n")
        for i, j, k in (frame.triangles + 1).tolist():
            fh.write(f"f {i} {j} {k}\n")


def expand_pattern(path_pattern):
    pattern = str(path_pattern)
    if "%" in pattern:
        files = []
        start = 0 if os.path.exists(pattern % 0) else 1
        idx = start
        while os.path.exists(pattern % idx):
            files.append(pattern % idx)
            idx += 1
        return files
    if any(ch in pattern for ch in "*?["):
        return sorted(glob.glob(pattern))
    if os.path.isdir(pattern):
        return sorted(glob.glob(os.path.join(pattern, "*.obj")))
    return [pattern] if os.path.exists(pattern) else []


def load_mesh_sequence(path_pattern, frame_rate):
    """Load every frame matching ``path_pattern``.

    The pattern may be printf-style (``frame_%04d.obj``, counted from 0 or 1),
    a glob, or a directory of ``.obj`` files. Frame ``i`` gets timestamp
    ``i / frame_rate``.
    """
    if frame_rate <= 0:
        raise FormatError("frame_rate must be positive")
    files = expand_pattern(path_pattern)
    if not files:
        raise FileNotFoundError(f"no mesh files match {path_pattern!r}")
    return [read_obj(f, timestamp=i / frame_rate) for i, f in enumerate(files)]


def write_mesh_sequence(frames, directory, name="frame_%04d.obj"):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, fr in enumerate(frames):
        p = directory / (name % i)
        write_obj(fr, p)
        paths.append(p)
    return paths


# ------------------------------------------------------------------------ markers

_AXIS_RE = re.compile(r"^(?P<name>.+)_(?P<axis>[xyz])$")


def load_marker_tracks(path):
    """Read a marker CSV: ``time,<m>_x,<m>_y,<m>_z,...``.

    Raises :class:`FormatError` on malformed headers or ragged rows and
    :class:`OrderingError` on duplicate or decreasing timestamps.
    """
    path = str(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise FormatError(f"{path}: empty marker file") from None
        if not header or header[0] != "time":
            raise FormatError(f"{path}: first column must be 'time'")
        cols = header[1:]
        if len(cols) == 0 or len(cols) % 3:
            raise FormatError(f"{path}: expected 3 columns per marker, got {len(cols)}")
        names = []
        for b in range(len(cols) // 3):
            triple = [_AXIS_RE.match(c) for c in cols[3 * b: 3 * b + 3]]
            if (
                any(m is None for m in triple)
                or [m["axis"] for m in triple] != ["x", "y", "z"]
                or len({m["name"] for m in triple}) != 1
            ):
                raise FormatError(f"{path}: bad marker header near {cols[3 * b: 3 * b + 3]}")
            names.append(triple[0]["name"])
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise FormatError(f"{path}:{lineno}: ragged row with {len(row)} fields, expected {len(header)}")
            try:
                rows.append([float(c) for c in row])
            except ValueError:
                raise FormatError(f"{path}:{lineno}: non-numeric field") from None
    if not rows:
        raise FormatError(f"{path}: no data rows")
    data = np.array(rows)
    times = data[:, 0]
    positions = data[:, 1:].reshape(len(rows), len(names), 3)
    try:
        return MarkerTrackSet(times, positions, names)
    except FormatError as exc:
        raise type(exc)(f"{path}: {exc}") from None


def write_marker_tracks(tracks, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["time"] + [f"{n}_{a}" for n in tracks.names for a in "xyz"])
        for t, pos in zip(tracks.times.tolist(), tracks.positions):
            w.writerow([repr(t)] + [repr(v) for v in pos.reshape(-1).tolist()])
