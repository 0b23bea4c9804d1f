"""Compiled inner loops for ray tracing (numba, nogil so threads can share them)."""
import math

import numpy as np
from numba import njit

# Self-intersection guard in meters; far below lambda/10 at 77 GHz (~0.39 mm).
EPS_HIT = 1e-9
# |d . n| below this counts as a ray parallel to the triangle plane.
PARALLEL_TOL = 1e-12
# Barycentric slack so rays on a shared edge hit at least one of its triangles.
BARY_TOL = 1e-10
# Relative padding of box slabs so boundary hits are never culled by rounding.
BOX_PAD = 1e-9

_JIT = dict(cache=True, nogil=True, error_model="numpy")


@njit(**_JIT)
def slab_interval(ox, oy, oz, dx, dy, dz, bmin, bmax):
    t0 = -np.inf
    t1 = np.inf
    o = (ox, oy, oz)
    d = (dx, dy, dz)
    for a in range(3):
        pad = BOX_PAD * (abs(bmax[a] - bmin[a]) + abs(bmin[a]) + abs(bmax[a])) + 1e-15
        lo = bmin[a] - pad
        hi = bmax[a] + pad
        if d[a] == 0.0:
            if o[a] < lo or o[a] > hi:
                return None
            continue
        ta = (lo - o[a]) / d[a]
        tb = (hi - o[a]) / d[a]
        if ta > tb:
            ta, tb = tb, ta
        if ta > t0:
            t0 = ta
        if tb < t1:
            t1 = tb
        if t0 > t1:
            return None
    if t1 < EPS_HIT:
        return None
    return (t0, t1)


@njit(**_JIT)
def _slab(ox, oy, oz, dx, dy, dz, bmin, bmax, g):
    """Entry distance into box ``g`` or +inf when missed."""
    t0 = -np.inf
    t1 = np.inf
    for a in range(3):
        if a == 0:
            o, d = ox, dx
        elif a == 1:
            o, d = oy, dy
        else:
            o, d = oz, dz
        lo_b = bmin[g, a]
        hi_b = bmax[g, a]
        pad = BOX_PAD * (abs(hi_b - lo_b) + abs(lo_b) + abs(hi_b)) + 1e-15
        lo = lo_b - pad
        hi = hi_b + pad
        if d == 0.0:
            if o < lo or o > hi:
                return np.inf
            continue
        ta = (lo - o) / d
        tb = (hi - o) / d
        if ta > tb:
            ta, tb = tb, ta
        if ta > t0:
            t0 = ta
        if tb < t1:
            t1 = tb
        if t0 > t1:
            return np.inf
    if t1 < EPS_HIT:
        return np.inf
    return t0


@njit(**_JIT)
def _ray_triangle(ox, oy, oz, dx, dy, dz, v0, e1, e2, cn, i):
    """Möller-Trumbore distance to triangle ``i`` or +inf."""
    e1x, e1y, e1z = e1[i, 0], e1[i, 1], e1[i, 2]
    e2x, e2y, e2z = e2[i, 0], e2[i, 1], e2[i, 2]
    px = dy * e2z - dz * e2y
    py = dz * e2x - dx * e2z
    pz = dx * e2y - dy * e2x
    det = e1x * px + e1y * py + e1z * pz
    if abs(det) <= PARALLEL_TOL * cn[i]:
        return np.inf
    inv = 1.0 / det
    tx = ox - v0[i, 0]
    ty = oy - v0[i, 1]
    tz = oz - v0[i, 2]
    u = (tx * px + ty * py + tz * pz) * inv
    if u < -BARY_TOL or u > 1.0 + BARY_TOL:
        return np.inf
    qx = ty * e1z - tz * e1y
    qy = tz * e1x - tx * e1z
    qz = tx * e1y - ty * e1x
    v = (dx * qx + dy * qy + dz * qz) * inv
    if v < -BARY_TOL or u + v > 1.0 + BARY_TOL:
        return np.inf
    t = (e2x * qx + e2y * qy + e2z * qz) * inv
    if t > EPS_HIT:
        return t
    return np.inf


@njit(**_JIT)
def nearest_one(ox, oy, oz, dx, dy, dz, v0, e1, e2, cn, bmin, bmax, offsets, members,
                scratch_t, scratch_g):
    """Nearest triangle along one ray. Returns (index, distance, triangle tests)."""
    n_groups = bmin.shape[0]
    n_cand = 0
    for g in range(n_groups):
        tn = _slab(ox, oy, oz, dx, dy, dz, bmin, bmax, g)
        if tn < np.inf:
            # insertion sort by entry distance
            j = n_cand
            while j > 0 and scratch_t[j - 1] > tn:
                scratch_t[j] = scratch_t[j - 1]
                scratch_g[j] = scratch_g[j - 1]
                j -= 1
            scratch_t[j] = tn
            scratch_g[j] = g
            n_cand += 1
    best_t = np.inf
    best_i = -1
    tests = 0
    for c in range(n_cand):
        if scratch_t[c] > best_t:
            break
        g = scratch_g[c]
        for m in range(offsets[g], offsets[g + 1]):
            i = members[m]
            tests += 1
            t = _ray_triangle(ox, oy, oz, dx, dy, dz, v0, e1, e2, cn, i)
            if t < best_t or (t == best_t and i < best_i):
                best_t = t
                best_i = i
    return best_i, best_t, tests


@njit(**_JIT)
def nearest_batch(origins, directions, v0, e1, e2, cn, bmin, bmax, offsets, members):
    n = origins.shape[0]
    idx = np.empty(n, dtype=np.int64)
    dist = np.empty(n, dtype=np.float64)
    tests = np.empty(n, dtype=np.int64)
    scratch_t = np.empty(max(bmin.shape[0], 1), dtype=np.float64)
    scratch_g = np.empty(max(bmin.shape[0], 1), dtype=np.int64)
    for r in range(n):
        i, t, k = nearest_one(
            origins[r, 0], origins[r, 1], origins[r, 2],
            directions[r, 0], directions[r, 1], directions[r, 2],
            v0, e1, e2, cn, bmin, bmax, offsets, members, scratch_t, scratch_g,
        )
        idx[r] = i
        dist[r] = t
        tests[r] = k
    return idx, dist, tests


@njit(**_JIT)
def fresnel(eps, is_pec, cos_i):
    """Reflection coefficients (perpendicular, parallel) for air -> medium."""
    if is_pec:
        return -1.0 + 0.0j, 1.0 + 0.0j
    sin2 = 1.0 - cos_i * cos_i
    root = np.sqrt(eps - sin2)
    g_perp = (cos_i - root) / (cos_i + root)
    g_par = (eps * cos_i - root) / (eps * cos_i + root)
    return g_perp, g_par


@njit(**_JIT)
def sbr_batch(origins, k_inc, normals, v0, e1, e2, cn, bmin, bmax, offsets, members,
              eps, is_pec, wavenumber, k_scat, tx_basis, max_bounces, tube_area,
              out_field, out_tests, out_hits):
    """Shoot parallel rays, bounce them specularly and accumulate exit fields.

    ``tx_basis`` is (2, 3): the incident field unit vectors for the two
    transmit polarizations. ``out_field[r, q]`` receives the complex far-field
    vector contributed by ray ``r`` for transmit polarization ``q``.
    """
    n = origins.shape[0]
    scratch_t = np.empty(max(bmin.shape[0], 1), dtype=np.float64)
    scratch_g = np.empty(max(bmin.shape[0], 1), dtype=np.int64)
    fld = np.empty((2, 3), dtype=np.complex128)
    fin = np.empty((2, 3), dtype=np.complex128)
    ksx, ksy, ksz = k_scat[0], k_scat[1], k_scat[2]
    pref = 1j * wavenumber * tube_area / (4.0 * math.pi)
    for r in range(n):
        ox, oy, oz = origins[r, 0], origins[r, 1], origins[r, 2]
        dx, dy, dz = k_inc[0], k_inc[1], k_inc[2]
        for q in range(2):
            for a in range(3):
                fld[q, a] = tx_basis[q, a]
        path = 0.0
        hits = 0
        tests = 0
        # state of the last hit, used for the exit contribution
        lnx = lny = lnz = 0.0
        ldx = ldy = ldz = 0.0
        lcos = 1.0
        while hits < max_bounces:
            i, t, k = nearest_one(ox, oy, oz, dx, dy, dz, v0, e1, e2, cn,
                                  bmin, bmax, offsets, members, scratch_t, scratch_g)
            tests += k
            if i < 0:
                break
            px = ox + t * dx
            py = oy + t * dy
            pz = oz + t * dz
            if hits == 0:
                # phase referenced to the plane through the origin normal to k_inc
                path = k_inc[0] * px + k_inc[1] * py + k_inc[2] * pz
            else:
                path += t
            hits += 1
            nx, ny, nz = normals[i, 0], normals[i, 1], normals[i, 2]
            dn = dx * nx + dy * ny + dz * nz
            if dn > 0.0:
                nx, ny, nz, dn = -nx, -ny, -nz, -dn
            cos_i = -dn
            if cos_i > 1.0:
                cos_i = 1.0
            g_perp, g_par = fresnel(eps, is_pec, cos_i)
            # s = d x n (TE direction)
            sx = dy * nz - dz * ny
            sy = dz * nx - dx * nz
            sz = dx * ny - dy * nx
            sn = math.sqrt(sx * sx + sy * sy + sz * sz)
            if sn < 1e-9:
                # normal incidence: any direction orthogonal to d will do
                if abs(dx) < 0.9:
                    sx, sy, sz = 0.0, dz, -dy
                else:
                    sx, sy, sz = -dz, 0.0, dx
                sn = math.sqrt(sx * sx + sy * sy + sz * sz)
            sx /= sn
            sy /= sn
            sz /= sn
            # reflected direction
            rx = dx - 2.0 * dn * nx
            ry = dy - 2.0 * dn * ny
            rz = dz - 2.0 * dn * nz
            # p_i = s x d, p_r = s x d_r
            pix = sy * dz - sz * dy
            piy = sz * dx - sx * dz
            piz = sx * dy - sy * dx
            prx = sy * rz - sz * ry
            pry = sz * rx - sx * rz
            prz = sx * ry - sy * rx
            for q in range(2):
                fin[q, 0] = fld[q, 0]
                fin[q, 1] = fld[q, 1]
                fin[q, 2] = fld[q, 2]
                es = fld[q, 0] * sx + fld[q, 1] * sy + fld[q, 2] * sz
                ep = fld[q, 0] * pix + fld[q, 1] * piy + fld[q, 2] * piz
                fld[q, 0] = g_perp * es * sx + g_par * ep * prx
                fld[q, 1] = g_perp * es * sy + g_par * ep * pry
                fld[q, 2] = g_perp * es * sz + g_par * ep * prz
            lnx, lny, lnz = nx, ny, nz
            ldx, ldy, ldz = dx, dy, dz
            lcos = cos_i
            ox, oy, oz = px, py, pz
            dx, dy, dz = rx, ry, rz
        out_tests[r] = tests
        out_hits[r] = hits
        if hits == 0:
            for q in range(2):
                for a in range(3):
                    out_field[r, q, a] = 0.0
            continue
        # Physical-optics currents on the footprint of the tube at the last hit:
        #   eta*J = n x (d_in x E_in + d_out x E_out),  M = -n x (E_in + E_out)
        #   E_far ~ k_s x (k_s x eta*J + M)
        phase = np.exp(-1j * wavenumber * (path - (ksx * ox + ksy * oy + ksz * oz)))
        c = pref * phase / lcos
        for q in range(2):
            eix, eiy, eiz = fin[q, 0], fin[q, 1], fin[q, 2]
            erx, ery, erz = fld[q, 0], fld[q, 1], fld[q, 2]
            # d_in x E_in + d_out x E_out
            hx = (ldy * eiz - ldz * eiy) + (dy * erz - dz * ery)
            hy = (ldz * eix - ldx * eiz) + (dz * erx - dx * erz)
            hz = (ldx * eiy - ldy * eix) + (dx * ery - dy * erx)
            jx = lny * hz - lnz * hy
            jy = lnz * hx - lnx * hz
            jz = lnx * hy - lny * hx
            ex, ey, ez = eix + erx, eiy + ery, eiz + erz
            mx = -(lny * ez - lnz * ey)
            my = -(lnz * ex - lnx * ez)
            mz = -(lnx * ey - lny * ex)
            ax = ksy * jz - ksz * jy + mx
            ay = ksz * jx - ksx * jz + my
            az = ksx * jy - ksy * jx + mz
            out_field[r, q, 0] = c * (ksy * az - ksz * ay)
            out_field[r, q, 1] = c * (ksz * ax - ksx * az)
            out_field[r, q, 2] = c * (ksx * ay - ksy * ax)
