"""Synthetic scenes: canonical scatterers and a walking mannequin.

The mannequin is a coarse articulated body (cylinders and a sphere) posed by
a simple sinusoidal gait. It produces mesh frames and the matching 23 marker
tracks from one pose model, so the ray tracer, the regression and the
synthesiser can be exercised end to end without external MoCap data.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .scene_io import MarkerTrackSet, MeshFrame


def square_plate(side, center=(0.0, 0.0, 0.0), normal="x", cells=1):
    """Square plate normal to ``normal`` tessellated into ``cells`` x ``cells`` squares."""
    axes = {"x": (1, 2), "y": (0, 2), "z": (0, 1)}
    a, b = axes[normal]
    n = int(cells)
    g = np.linspace(-side / 2, side / 2, n + 1)
    verts = np.zeros(((n + 1) ** 2, 3))
    uu, vv = np.meshgrid(g, g, indexing="ij")
    verts[:, a] = uu.ravel()
    verts[:, b] = vv.ravel()
    verts += np.asarray(center, dtype=float)
    tris = []
    for i in range(n):
        for j in range(n):
            p00 = i * (n + 1) + j
            p10 = (i + 1) * (n + 1) + j
            tris.append([p00, p10, p10 + 1])
            tris.append([p00, p10 + 1, p00 + 1])
    return MeshFrame(0.0, verts, np.array(tris))


def rotation_z(deg):
    c, s = math.cos(math.radians(deg)), math.sin(math.radians(deg))
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rotation_axis(axis, deg):
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    th = math.radians(deg)
    k = np.array([[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]])
    return np.eye(3) + math.sin(th) * k + (1 - math.cos(th)) * (k @ k)


def dihedral(side, center=(0.0, 0.0, 0.0), roll_deg=0.0, facing_deg=0.0):
    """Right-angle dihedral opening toward azimuth ``facing_deg``.

    The fold line is vertical before ``roll_deg`` rotates the reflector about
    its boresight; 45 degrees of roll gives maximal cross-polarization.
    """
    s = side
    # two square plates meeting at the fold (z axis), each at 45 deg to +x
    verts = np.array([
        [0.0, 0.0, -s / 2], [0.0, 0.0, s / 2],
        [s / math.sqrt(2), s / math.sqrt(2), s / 2], [s / math.sqrt(2), s / math.sqrt(2), -s / 2],
        [s / math.sqrt(2), -s / math.sqrt(2), s / 2], [s / math.sqrt(2), -s / math.sqrt(2), -s / 2],
    ])
    tris = np.array([[0, 1, 2], [0, 2, 3], [0, 4, 1], [0, 5, 4]])
    rot = rotation_z(facing_deg) @ rotation_axis([1.0, 0.0, 0.0], roll_deg)
    verts = verts @ rot.T + np.asarray(center, dtype=float)
    return MeshFrame(0.0, verts, tris)


# ------------------------------------------------------------------ primitives


def _frame_for(axis):
    axis = axis / np.linalg.norm(axis)
    helper = np.array([0.0, 0.0, 1.0]) if abs(axis[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    u = np.cross(axis, helper)
    u /= np.linalg.norm(u)
    v = np.cross(axis, u)
    return u, v


def cylinder(a, b, radius, n_around=16, n_along=4, radius2=None):
    """Closed (capped) cylinder from ``a`` to ``b``; elliptic if ``radius2`` given."""
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    r1 = radius
    r2 = radius if radius2 is None else radius2
    u, v = _frame_for(b - a)
    th = 2 * math.pi * np.arange(n_around) / n_around
    ring = np.cos(th)[:, None] * u * r1 + np.sin(th)[:, None] * v * r2
    verts = []
    for k in range(n_along + 1):
        verts.append(a + (b - a) * k / n_along + ring)
    verts = np.concatenate(verts)
    tris = []
    for k in range(n_along):
        for i in range(n_around):
            j = (i + 1) % n_around
            p, q = k * n_around + i, k * n_around + j
            tris.append([p, q, q + n_around])
            tris.append([p, q + n_around, p + n_around])
    c0 = len(verts)
    verts = np.vstack([verts, a, b])
    top = n_along * n_around
    for i in range(n_around):
        j = (i + 1) % n_around
        tris.append([c0, j, i])
        tris.append([c0 + 1, top + i, top + j])
    return verts, np.array(tris)


def sphere(center, radius, n_lon=16, n_lat=10):
    center = np.asarray(center, float)
    verts = [center + [0, 0, radius]]
    for k in range(1, n_lat):
        phi = math.pi * k / n_lat
        for i in range(n_lon):
            th = 2 * math.pi * i / n_lon
            verts.append(center + radius * np.array(
                [math.sin(phi) * math.cos(th), math.sin(phi) * math.sin(th), math.cos(phi)]))
    verts.append(center - [0, 0, radius])
    verts = np.array(verts)
    tris = []
    for i in range(n_lon):
        tris.append([0, 1 + i, 1 + (i + 1) % n_lon])
    for k in range(n_lat - 2):
        base = 1 + k * n_lon
        for i in range(n_lon):
            j = (i + 1) % n_lon
            tris.append([base + i, base + n_lon + i, base + n_lon + j])
            tris.append([base + i, base + n_lon + j, base + j])
    last = len(verts) - 1
    base = 1 + (n_lat - 2) * n_lon
    for i in range(n_lon):
        tris.append([last, base + (i + 1) % n_lon, base + i])
    return verts, np.array(tris)


def _assemble(parts, timestamp):
    verts, tris, off = [], [], 0
    for v, t in parts:
        verts.append(v)
        tris.append(t + off)
        off += len(v)
    return MeshFrame(timestamp, np.concatenate(verts), np.concatenate(tris))


# ------------------------------------------------------------------- mannequin

MARKER_NAMES = [
    "head", "neck", "sternum", "t8", "pelvis", "abdomen", "chest_l",
    "shoulder_l", "elbow_l", "wrist_l", "hand_l",
    "shoulder_r", "elbow_r", "wrist_r", "hand_r",
    "hip_l", "knee_l", "ankle_l", "toe_l",
    "hip_r", "knee_r", "ankle_r", "toe_r",
]


@dataclass
class Gait:
    """Sinusoidal walk along +x toward a radar at the origin.

    The walking line is offset by ``lateral_y`` so that left and right
    markers do not sit at identical ranges from a boresight radar.
    """

    start_x: float = -6.0
    speed: float = 1.5
    cycle_hz: float = 0.9
    hip_swing_deg: float = 25.0
    knee_flex_deg: float = 35.0
    arm_swing_deg: float = 22.0
    elbow_flex_deg: float = 20.0
    lateral_y: float = 0.4

    def joints(self, t):
        w = 2 * math.pi * self.cycle_hz * t
        x0 = self.start_x + self.speed * t
        bob = 0.02 * math.cos(2 * w)
        pelvis = np.array([x0, self.lateral_y, 0.95 + bob])
        j = {"pelvis": pelvis}
        j["abdomen"] = pelvis + [0.0, 0.0, 0.18]
        j["t8"] = pelvis + [-0.06, 0.0, 0.38]
        j["sternum"] = pelvis + [0.1, 0.0, 0.4]
        j["chest_l"] = pelvis + [0.08, 0.12, 0.36]
        j["neck"] = pelvis + [0.0, 0.0, 0.6]
        j["head"] = pelvis + [0.0, 0.0, 0.76]
        for side, sgn, ph in (("l", 1.0, 0.0), ("r", -1.0, math.pi)):
            hip_ang = math.radians(self.hip_swing_deg) * math.sin(w + ph)
            knee = math.radians(self.knee_flex_deg) * max(0.0, math.sin(w + ph - 0.6))
            hip = pelvis + [0.0, sgn * 0.1, -0.05]
            knee_p = hip + 0.45 * np.array([math.sin(hip_ang), 0.0, -math.cos(hip_ang)])
            sh = hip_ang - knee
            ankle = knee_p + 0.43 * np.array([math.sin(sh), 0.0, -math.cos(sh)])
            toe = ankle + 0.18 * np.array([math.cos(sh), 0.0, math.sin(sh)])
            arm_ang = -math.radians(self.arm_swing_deg) * math.sin(w + ph)
            shoulder = pelvis + [0.0, sgn * 0.2, 0.5]
            elbow = shoulder + 0.3 * np.array([math.sin(arm_ang), 0.0, -math.cos(arm_ang)])
            fa = arm_ang + math.radians(self.elbow_flex_deg)
            wrist = elbow + 0.26 * np.array([math.sin(fa), 0.0, -math.cos(fa)])
            hand = wrist + 0.08 * np.array([math.sin(fa), 0.0, -math.cos(fa)])
            j.update({
                f"hip_{side}": hip, f"knee_{side}": knee_p, f"ankle_{side}": ankle,
                f"toe_{side}": toe, f"shoulder_{side}": shoulder, f"elbow_{side}": elbow,
                f"wrist_{side}": wrist, f"hand_{side}": hand,
            })
        return j


def mannequin_frame(joints, timestamp=0.0, n_around=18, n_along=6):
    """Triangulated body for one set of joint positions (3104 facets by default)."""
    j = joints
    parts = [
        cylinder(j["pelvis"] - [0, 0, 0.08], j["neck"] - [0, 0, 0.04], 0.16,
                 n_around + 4, n_along + 3, radius2=0.11),
        cylinder(j["neck"] - [0, 0, 0.05], j["head"] - [0, 0, 0.08], 0.05, n_around, 2),
        sphere(j["head"], 0.11, n_around, 10),
    ]
    for s in ("l", "r"):
        parts += [
            cylinder(j[f"hip_{s}"], j[f"knee_{s}"], 0.075, n_around, n_along),
            cylinder(j[f"knee_{s}"], j[f"ankle_{s}"], 0.055, n_around, n_along),
            cylinder(j[f"ankle_{s}"], j[f"toe_{s}"], 0.045, n_around, 2),
            cylinder(j[f"shoulder_{s}"], j[f"elbow_{s}"], 0.045, n_around, n_along),
            cylinder(j[f"elbow_{s}"], j[f"hand_{s}"], 0.038, n_around, n_along),
        ]
    return _assemble(parts, timestamp)


def walking_sequence(n_frames, frame_rate=60.0, gait=None, t0=0.0, **mesh_kw):
    """Mesh frames for ``n_frames`` poses sampled at ``frame_rate``."""
    gait = gait or Gait()
    return [
        mannequin_frame(gait.joints(t0 + f / frame_rate), f / frame_rate, **mesh_kw)
        for f in range(n_frames)
    ]


def walking_markers(n_frames, frame_rate=60.0, gait=None, t0=0.0):
    """The 23 marker tracks matching :func:`walking_sequence`."""
    gait = gait or Gait()
    times = np.arange(n_frames) / frame_rate
    pos = np.empty((n_frames, len(MARKER_NAMES), 3))
    for f, t in enumerate(times):
        jt = gait.joints(t0 + t)
        pos[f] = [jt[name] for name in MARKER_NAMES]
    return MarkerTrackSet(times, pos, list(MARKER_NAMES))


def point_scatterer_rcs(ranges, reflectivities, f_c):
    """sigma[p] = |sum_b a_b exp(-j 4 pi f_c r_b[p] / c)|^2 for (P, B) ranges."""
    from .constants import SPEED_OF_LIGHT

    phase = np.exp(-1j * 4 * math.pi * f_c * np.asarray(ranges) / SPEED_OF_LIGHT)
    return np.abs(phase @ np.asarray(reflectivities)) ** 2
