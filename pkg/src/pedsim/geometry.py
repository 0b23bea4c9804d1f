"""Rays, ray/triangle intersection and the flat bounding-group accelerator.

The scalar functions here (:func:`intersect_ray_triangle`, :func:`nearest_hit`)
are the readable reference path. Bulk tracing goes through the compiled
kernels in :mod:`pedsim._kernels`, which share the same tolerances and are
checked against this module in the test-suite.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .errors import ParameterError
from . import _kernels

EPS_HIT = _kernels.EPS_HIT


class Ray:
    __slots__ = ("origin", "direction")

    def __init__(self, origin, direction):
        self.origin = np.asarray(origin, dtype=np.float64).reshape(3)
        d = np.asarray(direction, dtype=np.float64).reshape(3)
        norm = np.linalg.norm(d)
        if norm == 0 or not np.isfinite(norm):
            raise ParameterError("ray direction must be a finite non-zero vector")
        self.direction = d / norm

    def at(self, t):
        return self.origin + t * self.direction

    def __repr__(self):
        return f"Ray(origin={self.origin.tolist()}, direction={self.direction.tolist()})"


class Hit(NamedTuple):
    distance: float
    point: np.ndarray
    normal: np.ndarray
    triangle: int = -1


@dataclass
class TraceStats:
    """Instrumentation counters for intersection work."""

    triangle_tests: int = 0
    box_tests: int = 0
    rays: int = 0

    def __iadd__(self, other):
        self.triangle_tests += other.triangle_tests
        self.box_tests += other.box_tests
        self.rays += other.rays
        return self


def intersect_ray_triangle(ray, tri):
    """Möller-Trumbore test of one ray against one triangle.

    ``tri`` is a (3, 3) array of corners. Edges and corners count as inside.
    Returns ``None`` on a miss or when the hit is not beyond ``EPS_HIT``; the
    returned normal always faces the incoming ray.
    """
    tri = np.asarray(tri, dtype=np.float64)
    p0 = tri[0]
    e1 = tri[1] - p0
    e2 = tri[2] - p0
    d = ray.direction
    pvec = np.cross(d, e2)
    det = float(e1 @ pvec)
    nvec = np.cross(e1, e2)
    cn = float(np.linalg.norm(nvec))
    if abs(det) <= _kernels.PARALLEL_TOL * cn:
        return None
    inv = 1.0 / det
    tvec = ray.origin - p0
    u = float(tvec @ pvec) * inv
    if u < -_kernels.BARY_TOL or u > 1.0 + _kernels.BARY_TOL:
        return None
    qvec = np.cross(tvec, e1)
    v = float(d @ qvec) * inv
    if v < -_kernels.BARY_TOL or u + v > 1.0 + _kernels.BARY_TOL:
        return None
    t = float(e2 @ qvec) * inv
    if not t > EPS_HIT:
        return None
    normal = nvec / cn
    if normal @ d > 0:
        normal = -normal
    return Hit(t, ray.at(t), normal)


@dataclass
class BoundingGroup:
    box_min: np.ndarray
    box_max: np.ndarray
    members: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))

    def ray_interval(self, ray):
        """Slab test. Returns (t_near, t_far) or None if the ray misses the box."""
        return _kernels.slab_interval(
            ray.origin[0], ray.origin[1], ray.origin[2],
            ray.direction[0], ray.direction[1], ray.direction[2],
            self.box_min, self.box_max,
        )


def _shrink_box(corners, members):
    pts = corners[members].reshape(-1, 3)
    return pts.min(axis=0), pts.max(axis=0)


def build_groups(mesh, target_group_count):
    """Partition the triangles of ``mesh`` into at most ``target_group_count`` boxes.

    The group with the most members is repeatedly split at the median
    centroid along its box's longest axis. Singletons are never split, so
    fewer groups than requested come back for tiny meshes.
    """
    if int(target_group_count) < 1:
        raise ParameterError("target_group_count must be >= 1")
    target = int(target_group_count)
    if mesh.n_triangles == 0:
        return []
    corners = mesh.corners()
    centroids = corners.mean(axis=1)
    groups = [np.arange(mesh.n_triangles, dtype=np.int64)]
    while len(groups) < target:
        order = sorted(range(len(groups)), key=lambda i: -len(groups[i]))
        split_done = False
        for gi in order:
            members = groups[gi]
            if len(members) < 2:
                break
            lo, hi = _shrink_box(corners, members)
            axis = int(np.argmax(hi - lo))
            keys = centroids[members, axis]
            # stable ordering keeps the split reproducible when centroids tie
            ranked = members[np.argsort(keys, kind="stable")]
            half = len(ranked) // 2
            groups[gi] = np.sort(ranked[:half])
            groups.insert(gi + 1, np.sort(ranked[half:]))
            split_done = True
            break
        if not split_done:
            break
    out = []
    for members in groups:
        lo, hi = _shrink_box(corners, members)
        out.append(BoundingGroup(lo, hi, members))
    return out


def nearest_hit(ray, groups, mesh, stats: Optional[TraceStats] = None):
    """Closest intersection of ``ray`` with ``mesh`` using bounding-group culling.

    Only triangles inside boxes pierced by the ray are tested; the nearest
    hit over all of them is returned, so occluded facets never count.
    """
    corners = mesh.corners()
    best = None
    tests = 0
    for g in groups:
        if stats is not None:
            stats.box_tests += 1
        span = g.ray_interval(ray)
        if span is None:
            continue
        t_near, _ = span
        if best is not None and t_near > best.distance:
            continue
        for idx in g.members:
            tests += 1
            hit = intersect_ray_triangle(ray, corners[idx])
            if hit is not None and (best is None or hit.distance < best.distance):
                best = Hit(hit.distance, hit.point, hit.normal, int(idx))
    if stats is not None:
        stats.triangle_tests += tests
        stats.rays += 1
    return best


def exhaustive_hit(ray, mesh, stats: Optional[TraceStats] = None):
    """Nearest hit by testing every triangle; the reference for :func:`nearest_hit`."""
    corners = mesh.corners()
    best = None
    for idx in range(mesh.n_triangles):
        hit = intersect_ray_triangle(ray, corners[idx])
        if hit is not None and (best is None or hit.distance < best.distance):
            best = Hit(hit.distance, hit.point, hit.normal, idx)
    if stats is not None:
        stats.triangle_tests += mesh.n_triangles
        stats.rays += 1
    return best


# ------------------------------------------------------------- packed scene


@dataclass
class PackedScene:
    """Flat arrays consumed by the compiled tracing kernels."""

    v0: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    normals: np.ndarray
    cross_norm: np.ndarray
    box_min: np.ndarray
    box_max: np.ndarray
    offsets: np.ndarray
    members: np.ndarray

    @property
    def n_triangles(self):
        return len(self.v0)

    @property
    def n_groups(self):
        return len(self.box_min)


def pack_scene(mesh, groups=None):
    """Pack ``mesh`` and its groups; ``groups=None`` means one all-inclusive group."""
    if groups is None:
        groups = build_groups(mesh, 1)
    corners = mesh.corners().reshape(-1, 3, 3)
    v0 = np.ascontiguousarray(corners[:, 0])
    e1 = np.ascontiguousarray(corners[:, 1] - v0)
    e2 = np.ascontiguousarray(corners[:, 2] - v0)
    nvec = np.cross(e1, e2)
    cn = np.linalg.norm(nvec, axis=1) if len(nvec) else np.zeros(0)
    normals = nvec / np.where(cn > 0, cn, 1.0)[:, None]
    counts = [len(g.members) for g in groups]
    offsets = np.zeros(len(groups) + 1, dtype=np.int64)
    offsets[1:] = np.cumsum(counts)
    members = (
        np.concatenate([g.members for g in groups]).astype(np.int64)
        if groups else np.zeros(0, dtype=np.int64)
    )
    box_min = np.array([g.box_min for g in groups], dtype=np.float64).reshape(-1, 3)
    box_max = np.array([g.box_max for g in groups], dtype=np.float64).reshape(-1, 3)
    return PackedScene(v0, e1, e2, np.ascontiguousarray(normals), cn, box_min, box_max, offsets, members)


def nearest_hits(origins, directions, scene):
    """Vectorised nearest-hit query.

    Returns ``(triangle_index, distance, triangle_tests)`` arrays; misses have
    index -1 and distance ``inf``.
    """
    origins = np.ascontiguousarray(origins, dtype=np.float64).reshape(-1, 3)
    directions = np.asarray(directions, dtype=np.float64).reshape(-1, 3)
    directions = np.ascontiguousarray(directions / np.linalg.norm(directions, axis=1)[:, None])
    if len(directions) == 1 and len(origins) > 1:
        directions = np.ascontiguousarray(np.repeat(directions, len(origins), axis=0))
    return _kernels.nearest_batch(
        origins, directions, scene.v0, scene.e1, scene.e2, scene.cross_norm,
        scene.box_min, scene.box_max, scene.offsets, scene.members,
    )
