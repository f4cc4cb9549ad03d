"""Exact distances between points, edges and triangles.

Every kernel returns the distance, the barycentric coordinates of the closest
pair and the two closest points.  Barycentric conventions: an edge point is
``(1 - t) v0 + t v1``; a triangle point is ``(1 - s - t) v0 + s v1 + t v2``.

Point-point, point-edge, point-triangle and edge-edge are closed form.  Pairs
involving a triangle and an edge or triangle go through ``qp_pair``, which
solves the joint barycentric quadratic program by enumerating the faces of the
product domain: on each face the unconstrained least-squares minimizer is
computed and kept if it is feasible.  Singular faces are skipped because their
minimum is also attained on a lower-dimensional face.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .mesh import SimplexMesh

PARALLEL_EPS = 1e-14
ACTIVE_TOL = 1e-12  # barycentric coordinates below this count as on the boundary


@njit(cache=True, inline="always")
def _clamp01(x):
    if x < 0.0:
        return 0.0
    if x > 1.0:
        return 1.0
    return x


@njit(cache=True, inline="always")
def point_point(q, a):
    dx = q[0] - a[0]
    dy = q[1] - a[1]
    dz = q[2] - a[2]
    return np.sqrt(dx * dx + dy * dy + dz * dz), a[0], a[1], a[2]


@njit(cache=True, inline="always")
def point_edge_s(qx, qy, qz, ax, ay, az, bx, by, bz):
    ex = bx - ax
    ey = by - ay
    ez = bz - az
    t = ((qx - ax) * ex + (qy - ay) * ey + (qz - az) * ez) / (ex * ex + ey * ey + ez * ez)
    t = _clamp01(t)
    cx = ax + t * ex
    cy = ay + t * ey
    cz = az + t * ez
    dx = qx - cx
    dy = qy - cy
    dz = qz - cz
    return np.sqrt(dx * dx + dy * dy + dz * dz), t, cx, cy, cz


@njit(cache=True, inline="always")
def point_edge(q, a, b):
    return point_edge_s(q[0], q[1], q[2], a[0], a[1], a[2], b[0], b[1], b[2])


@njit(cache=True, inline="always")
def point_triangle_s(qx, qy, qz, ax, ay, az, bx, by, bz, cx_, cy_, cz_):
    """Closest point on triangle abc to q by Voronoi-region classification (scalar arguments)."""
    abx = bx - ax
    aby = by - ay
    abz = bz - az
    acx = cx_ - ax
    acy = cy_ - ay
    acz = cz_ - az
    apx = qx - ax
    apy = qy - ay
    apz = qz - az
    d1 = abx * apx + aby * apy + abz * apz
    d2 = acx * apx + acy * apy + acz * apz
    s = 0.0
    t = 0.0
    if d1 <= 0.0 and d2 <= 0.0:
        s = 0.0
        t = 0.0
    else:
        bpx = qx - bx
        bpy = qy - by
        bpz = qz - bz
        d3 = abx * bpx + aby * bpy + abz * bpz
        d4 = acx * bpx + acy * bpy + acz * bpz
        if d3 >= 0.0 and d4 <= d3:
            s = 1.0
            t = 0.0
        else:
            vc = d1 * d4 - d3 * d2
            if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
                s = d1 / (d1 - d3)
                t = 0.0
            else:
                cpx = qx - cx_
                cpy = qy - cy_
                cpz = qz - cz_
                d5 = abx * cpx + aby * cpy + abz * cpz
                d6 = acx * cpx + acy * cpy + acz * cpz
                if d6 >= 0.0 and d5 <= d6:
                    s = 0.0
                    t = 1.0
                else:
                    vb = d5 * d2 - d1 * d6
                    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
                        s = 0.0
                        t = d2 / (d2 - d6)
                    else:
                        va = d3 * d6 - d5 * d4
                        if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
                            t = (d4 - d3) / ((d4 - d3) + (d5 - d6))
                            s = 1.0 - t
                        else:
                            denom = 1.0 / (va + vb + vc)
                            s = vb * denom
                            t = vc * denom
                            # interior: project along the normal so coplanar queries give d = 0 exactly
                            nx = aby * acz - abz * acy
                            ny = abz * acx - abx * acz
                            nz = abx * acy - aby * acx
                            k = (apx * nx + apy * ny + apz * nz) / (nx * nx + ny * ny + nz * nz)
                            cx = qx - k * nx
                            cy = qy - k * ny
                            cz = qz - k * nz
                            return abs(k) * np.sqrt(nx * nx + ny * ny + nz * nz), s, t, cx, cy, cz
    cx = ax + s * abx + t * acx
    cy = ay + s * aby + t * acy
    cz = az + s * abz + t * acz
    dx = qx - cx
    dy = qy - cy
    dz = qz - cz
    return np.sqrt(dx * dx + dy * dy + dz * dz), s, t, cx, cy, cz


@njit(cache=True, inline="always")
def point_triangle(q, a, b, c):
    """Closest point on triangle abc to q by Voronoi-region classification."""
    return point_triangle_s(q[0], q[1], q[2], a[0], a[1], a[2], b[0], b[1], b[2], c[0], c[1], c[2])


@njit(cache=True, inline="always")
def edge_edge(p0, p1, q0, q1):
    """Closest points between segments p0p1 and q0q1; parallel pairs take s = 0."""
    d1x = p1[0] - p0[0]
    d1y = p1[1] - p0[1]
    d1z = p1[2] - p0[2]
    d2x = q1[0] - q0[0]
    d2y = q1[1] - q0[1]
    d2z = q1[2] - q0[2]
    rx = p0[0] - q0[0]
    ry = p0[1] - q0[1]
    rz = p0[2] - q0[2]
    a = d1x * d1x + d1y * d1y + d1z * d1z
    e = d2x * d2x + d2y * d2y + d2z * d2z
    f = d2x * rx + d2y * ry + d2z * rz
    c = d1x * rx + d1y * ry + d1z * rz
    b = d1x * d2x + d1y * d2y + d1z * d2z
    denom = a * e - b * b
    if denom > PARALLEL_EPS * a * e:
        s = _clamp01((b * f - c * e) / denom)
    else:
        s = 0.0
    t = (b * s + f) / e
    if t < 0.0:
        t = 0.0
        s = _clamp01(-c / a)
    elif t > 1.0:
        t = 1.0
        s = _clamp01((b - c) / a)
    fx = p0[0] + s * d1x
    fy = p0[1] + s * d1y
    fz = p0[2] + s * d1z
    gx = q0[0] + t * d2x
    gy = q0[1] + t * d2y
    gz = q0[2] + t * d2z
    dx = fx - gx
    dy = fy - gy
    dz = fz - gz
    return np.sqrt(dx * dx + dy * dy + dz * dz), s, t, fx, fy, fz, gx, gy, gz


@njit(cache=True)
def _solve_spd(M, r, k):
    """Gaussian elimination with partial pivoting on the leading k x k block; False if singular."""
    scale = 0.0
    for i in range(k):
        scale = max(scale, abs(M[i, i]))
    tol = 1e-13 * scale
    for col in range(k):
        piv = col
        for row in range(col + 1, k):
            if abs(M[row, col]) > abs(M[piv, col]):
                piv = row
        if abs(M[piv, col]) <= tol:
            return False
        if piv != col:
            for j in range(k):
                tmp = M[col, j]
                M[col, j] = M[piv, j]
                M[piv, j] = tmp
            tmp = r[col]
            r[col] = r[piv]
            r[piv] = tmp
        for row in range(col + 1, k):
            fac = M[row, col] / M[col, col]
            for j in range(col, k):
                M[row, j] -= fac * M[col, j]
            r[row] -= fac * r[col]
    for i in range(k - 1, -1, -1):
        acc = r[i]
        for j in range(i + 1, k):
            acc -= M[i, j] * r[j]
        r[i] = acc / M[i, i]
    return True


@njit(cache=True)
def qp_pair(fv, fn, gv, gn):
    """Minimize |f(phi) - g(lam)|^2 over both barycentric domains by face enumeration.

    ``fv``/``gv`` hold the simplex vertices in their first ``fn + 1``/``gn + 1``
    rows.  Returns (d, phi1, phi2, lam1, lam2, fx, fy, fz, gx, gy, gz).
    """
    D = np.empty((3, 4))
    M = np.empty((4, 4))
    r = np.empty(4)
    fidx = np.empty(3, dtype=np.int64)
    gidx = np.empty(3, dtype=np.int64)
    mu = np.empty(3)
    nu = np.empty(3)
    best = np.inf
    bphi = np.zeros(3)
    blam = np.zeros(3)
    bf = np.zeros(3)
    bg = np.zeros(3)
    for mf in range(1, 1 << (fn + 1)):
        na = 0
        for j in range(fn + 1):
            if mf & (1 << j):
                fidx[na] = j
                na += 1
        for mg in range(1, 1 << (gn + 1)):
            nb = 0
            for j in range(gn + 1):
                if mg & (1 << j):
                    gidx[nb] = j
                    nb += 1
            k = na - 1 + nb - 1
            if k > 3:
                continue  # rank of D is at most 3, always singular
            f0 = fidx[0]
            g0 = gidx[0]
            for c in range(na - 1):
                for x in range(3):
                    D[x, c] = fv[fidx[c + 1], x] - fv[f0, x]
            for c in range(nb - 1):
                for x in range(3):
                    D[x, na - 1 + c] = gv[g0, x] - gv[gidx[c + 1], x]
            for i in range(k):
                acc = 0.0
                for x in range(3):
                    acc += D[x, i] * (fv[f0, x] - gv[g0, x])
                r[i] = -acc
                for j in range(k):
                    acc = 0.0
                    for x in range(3):
                        acc += D[x, i] * D[x, j]
                    M[i, j] = acc
            if k > 0 and not _solve_spd(M, r, k):
                continue
            # barycentric weights on the face
            feasible = True
            tot = 0.0
            for c in range(na - 1):
                mu[c + 1] = r[c]
                tot += r[c]
            mu[0] = 1.0 - tot
            tot = 0.0
            for c in range(nb - 1):
                nu[c + 1] = r[na - 1 + c]
                tot += r[na - 1 + c]
            nu[0] = 1.0 - tot
            for c in range(na):
                if mu[c] < -1e-12:
                    feasible = False
            for c in range(nb):
                if nu[c] < -1e-12:
                    feasible = False
            if not feasible:
                continue
            # clamp round-off and renormalize so the pair is exactly feasible
            tot = 0.0
            for c in range(na):
                mu[c] = max(mu[c], 0.0)
                tot += mu[c]
            for c in range(na):
                mu[c] /= tot
            tot = 0.0
            for c in range(nb):
                nu[c] = max(nu[c], 0.0)
                tot += nu[c]
            for c in range(nb):
                nu[c] /= tot
            px = 0.0
            py = 0.0
            pz = 0.0
            for c in range(na):
                px += mu[c] * fv[fidx[c], 0]
                py += mu[c] * fv[fidx[c], 1]
                pz += mu[c] * fv[fidx[c], 2]
            qx = 0.0
            qy = 0.0
            qz = 0.0
            for c in range(nb):
                qx += nu[c] * gv[gidx[c], 0]
                qy += nu[c] * gv[gidx[c], 1]
                qz += nu[c] * gv[gidx[c], 2]
            d = np.sqrt((px - qx) ** 2 + (py - qy) ** 2 + (pz - qz) ** 2)
            if d < best:
                best = d
                bphi[:] = 0.0
                blam[:] = 0.0
                for c in range(na):
                    bphi[fidx[c]] = mu[c]
                for c in range(nb):
                    blam[gidx[c]] = nu[c]
                bf[0] = px
                bf[1] = py
                bf[2] = pz
                bg[0] = qx
                bg[1] = qy
                bg[2] = qz
    return best, bphi[1], bphi[2], blam[1], blam[2], bf[0], bf[1], bf[2], bg[0], bg[1], bg[2]


@njit(cache=True, inline="always")
def pair_distance(fv, fn, gv, gn):
    """Dispatch to the closed-form kernel for the pair, or to ``qp_pair``.

    Returns (d, phi1, phi2, lam1, lam2, fx, fy, fz, gx, gy, gz).
    """
    if fn == 0 and gn == 0:
        d, cx, cy, cz = point_point(gv[0], fv[0])
        return d, 0.0, 0.0, 0.0, 0.0, cx, cy, cz, gv[0, 0], gv[0, 1], gv[0, 2]
    if gn == 0:
        if fn == 1:
            d, t, cx, cy, cz = point_edge(gv[0], fv[0], fv[1])
            return d, t, 0.0, 0.0, 0.0, cx, cy, cz, gv[0, 0], gv[0, 1], gv[0, 2]
        d, s, t, cx, cy, cz = point_triangle(gv[0], fv[0], fv[1], fv[2])
        return d, s, t, 0.0, 0.0, cx, cy, cz, gv[0, 0], gv[0, 1], gv[0, 2]
    if fn == 0:
        if gn == 1:
            d, t, cx, cy, cz = point_edge(fv[0], gv[0], gv[1])
        else:
            d, s, t2, cx, cy, cz = point_triangle(fv[0], gv[0], gv[1], gv[2])
            return d, 0.0, 0.0, s, t2, fv[0, 0], fv[0, 1], fv[0, 2], cx, cy, cz
        return d, 0.0, 0.0, t, 0.0, fv[0, 0], fv[0, 1], fv[0, 2], cx, cy, cz
    if fn == 1 and gn == 1:
        d, s, t, fx, fy, fz, gx, gy, gz = edge_edge(fv[0], fv[1], gv[0], gv[1])
        return d, s, 0.0, t, 0.0, fx, fy, fz, gx, gy, gz
    return qp_pair(fv, fn, gv, gn)


@njit(cache=True, inline="always")
def gather(V, S, i, out):
    """Copy the vertices of simplex ``i`` into ``out``; return its dimension."""
    n = 0
    for j in range(3):
        idx = S[i, j]
        if idx < 0:
            break
        out[j, 0] = V[idx, 0]
        out[j, 1] = V[idx, 1]
        out[j, 2] = V[idx, 2]
        n = j
    return n


@njit(cache=True, inline="always")
def point_primitive(V, S, i, qx, qy, qz):
    """Point-to-simplex ``i`` of (V, S) without gathering: (d, phi1, phi2, cx, cy, cz)."""
    a = S[i, 0]
    b = S[i, 1]
    if b < 0:
        dx = qx - V[a, 0]
        dy = qy - V[a, 1]
        dz = qz - V[a, 2]
        return np.sqrt(dx * dx + dy * dy + dz * dz), 0.0, 0.0, V[a, 0], V[a, 1], V[a, 2]
    c = S[i, 2]
    if c < 0:
        d, t, cx, cy, cz = point_edge_s(qx, qy, qz, V[a, 0], V[a, 1], V[a, 2], V[b, 0], V[b, 1], V[b, 2])
        return d, t, 0.0, cx, cy, cz
    return point_triangle_s(qx, qy, qz, V[a, 0], V[a, 1], V[a, 2], V[b, 0], V[b, 1], V[b, 2], V[c, 0], V[c, 1], V[c, 2])


@njit(cache=True, inline="always")
def point_packed(P, n, i, qx, qy, qz):
    """Like ``point_primitive`` on packed per-simplex vertices ``P`` (F, 3, 3) of dimension ``n``."""
    if n == 0:
        dx = qx - P[i, 0, 0]
        dy = qy - P[i, 0, 1]
        dz = qz - P[i, 0, 2]
        return np.sqrt(dx * dx + dy * dy + dz * dz), 0.0, 0.0, P[i, 0, 0], P[i, 0, 1], P[i, 0, 2]
    if n == 1:
        d, t, cx, cy, cz = point_edge_s(qx, qy, qz, P[i, 0, 0], P[i, 0, 1], P[i, 0, 2], P[i, 1, 0], P[i, 1, 1], P[i, 1, 2])
        return d, t, 0.0, cx, cy, cz
    return point_triangle_s(
        qx, qy, qz, P[i, 0, 0], P[i, 0, 1], P[i, 0, 2], P[i, 1, 0], P[i, 1, 1], P[i, 1, 2], P[i, 2, 0], P[i, 2, 1], P[i, 2, 2]
    )


@njit(cache=True, inline="always")
def unpack(P, n, i, out):
    for j in range(n + 1):
        for x in range(3):
            out[j, x] = P[i, j, x]


@njit(cache=True, inline="always")
def bary_full(n, c1, c2, out):
    """Full barycentric vector of an n-simplex from its trailing coordinates."""
    if n == 0:
        out[0] = 1.0
    elif n == 1:
        out[0] = 1.0 - c1
        out[1] = c1
    else:
        out[0] = 1.0 - c1 - c2
        out[1] = c1
        out[2] = c2


@njit(cache=True)
def closest_pair_jacobian(fv, fn, gv, gn, res, m, J):
    """Derivative of the closest-point barycentrics (phi1, phi2) on ``f``.

    With ``m >= 0`` the derivative is taken with respect to vertex ``m`` of
    ``g``; with ``m < 0`` with respect to a rigid translation of ``g``.  Rows
    of ``J`` (2 x 3) receive d phi1 and d phi2.  The active faces of both
    simplices are held fixed, which is exact away from region boundaries.
    Returns False for degenerate (parallel) active faces.
    """
    J[:, :] = 0.0
    bf = np.zeros(3)
    bg = np.zeros(3)
    bary_full(fn, res[1], res[2], bf)
    bary_full(gn, res[3], res[4], bg)
    F = np.empty(3, dtype=np.int64)
    G = np.empty(3, dtype=np.int64)
    na = 0
    for j in range(fn + 1):
        if bf[j] > ACTIVE_TOL:
            F[na] = j
            na += 1
    nb = 0
    for j in range(gn + 1):
        if bg[j] > ACTIVE_TOL:
            G[nb] = j
            nb += 1
    if na <= 1:
        return True  # closest point pinned to a vertex of f
    k = na - 1 + nb - 1
    if k > 3:
        return False
    D = np.empty((3, 3))
    for c in range(na - 1):
        for x in range(3):
            D[x, c] = fv[F[c + 1], x] - fv[F[0], x]
    for c in range(nb - 1):
        for x in range(3):
            D[x, na - 1 + c] = gv[G[0], x] - gv[G[c + 1], x]
    # r = f - g at the closest pair
    r = np.empty(3)
    for x in range(3):
        r[x] = res[5 + x] - res[8 + x]
    mu = 1.0
    if m >= 0:
        mu = bg[m]
    M = np.empty((4, 4))
    rhs = np.empty(4)
    for a in range(3):
        for i in range(k):
            for j in range(k):
                acc = 0.0
                for x in range(3):
                    acc += D[x, i] * D[x, j]
                M[i, j] = acc
            rhs[i] = mu * D[a, i]
        if m >= 0:
            # moving vertex m also moves the columns of the g face
            for c in range(nb - 1):
                if G[c + 1] == m:
                    rhs[na - 1 + c] += r[a]
                elif G[0] == m:
                    rhs[na - 1 + c] -= r[a]
        if not _solve_spd(M, rhs, k):
            J[:, :] = 0.0
            return False
        tot = 0.0
        for c in range(na - 1):
            idx = F[c + 1]
            if idx > 0:
                J[idx - 1, a] += rhs[c]
            tot += rhs[c]
        if F[0] > 0:
            J[F[0] - 1, a] -= tot
    return True


@njit(cache=True)
def brute_force_min(V, S, gv, gn):
    fv = np.zeros((3, 3))
    best = np.inf
    arg = -1
    for i in range(S.shape[0]):
        if gn == 0:
            d = point_primitive(V, S, i, gv[0, 0], gv[0, 1], gv[0, 2])[0]
        else:
            fn = gather(V, S, i, fv)
            d = pair_distance(fv, fn, gv, gn)[0]
        if d < best:
            best = d
            arg = i
    return best, arg


# ---------------------------------------------------------------------------
# Python-facing API


@dataclass(frozen=True)
class ClosestPair:
    d: float
    grad: np.ndarray
    phi: np.ndarray
    lam: np.ndarray
    point_f: np.ndarray
    point_g: np.ndarray


def as_simplex(verts) -> tuple[np.ndarray, int]:
    """Pad an (n+1, 3) vertex array to (3, 3); return it with its dimension n."""
    verts = np.asarray(verts, dtype=np.float64).reshape(-1, 3)
    n = len(verts) - 1
    if not 0 <= n <= 2:
        raise ValueError("a simplex has 1, 2 or 3 vertices")
    out = np.zeros((3, 3))
    out[: n + 1] = verts
    _check_nondegenerate(out, n)
    return out, n


def _check_nondegenerate(v, n):
    if n == 1 and np.all(v[0] == v[1]):
        raise ValueError("degenerate edge")
    if n == 2:
        e1, e2 = v[1] - v[0], v[2] - v[0]
        longest = max(e1 @ e1, e2 @ e2, (v[2] - v[1]) @ (v[2] - v[1]))
        if 0.5 * np.linalg.norm(np.cross(e1, e2)) <= 1e-12 * longest:
            raise ValueError("degenerate triangle")


def simplex_distance(f, g, method="auto") -> ClosestPair:
    """Closest pair between data simplex ``f`` and query simplex ``g``.

    ``method="qp"`` forces the face-enumeration solver for any pair.  The
    gradient is with respect to a rigid translation of ``g``.
    """
    fv, fn = as_simplex(f)
    gv, gn = as_simplex(g)
    if method == "qp":
        res = qp_pair(fv, fn, gv, gn)
    elif method == "auto":
        res = pair_distance(fv, fn, gv, gn)
    else:
        raise ValueError(f"unknown method {method!r}")
    d = float(res[0])
    pf = np.array(res[5:8])
    pg = np.array(res[8:11])
    grad = (pg - pf) / d if d > 0 else np.zeros(3)
    return ClosestPair(d, grad, np.array(res[1:1 + fn]), np.array(res[3:3 + gn]), pf, pg)


def exact_min_distance(mesh: SimplexMesh, g) -> tuple[float, int]:
    """Exhaustive minimum distance from query simplex ``g`` to every simplex of ``mesh``."""
    if len(mesh) == 0:
        raise ValueError("empty mesh")
    gv, gn = as_simplex(g)
    d, i = brute_force_min(mesh.vertices, mesh.simplices, gv, gn)
    return float(d), int(i)
