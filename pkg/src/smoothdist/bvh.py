"""Axis-aligned bounding volume hierarchy with conservative far-field helpers.

Nodes live in flat arrays (node 0 is the root).  Leaves hold exactly one
primitive.  For the far-field expansion each node records the number of
primitives beneath it and its box diagonal.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from numba import njit

from .exact_dist import pair_distance
from .mesh import SimplexMesh


@dataclass(frozen=True, eq=False)
class Bvh:
    lo: np.ndarray  # (N, 3)
    hi: np.ndarray  # (N, 3)
    left: np.ndarray  # (N,), -1 for leaves
    right: np.ndarray
    prim: np.ndarray  # (N,), -1 for internal nodes
    count: np.ndarray  # primitives beneath the node
    diam: np.ndarray  # box diagonal length

    def __len__(self):
        return len(self.lo)

    @property
    def arrays(self):
        return (self.lo, self.hi, self.left, self.right, self.prim, self.count, self.diam)

    def depth(self) -> int:
        best = 0
        stack = [(0, 1)]
        while stack:
            n, dpt = stack.pop()
            best = max(best, dpt)
            if self.left[n] >= 0:
                stack.append((self.left[n], dpt + 1))
                stack.append((self.right[n], dpt + 1))
        return best


def primitive_boxes(mesh: SimplexMesh):
    v, s = mesh.vertices, mesh.simplices
    idx = np.where(s >= 0, s, s[:, :1])  # pad with the first vertex
    pts = v[idx]
    real = (s >= 0)[:, :, None]
    cen = np.where(real, pts, 0.0).sum(axis=1) / (mesh.kinds + 1)[:, None]
    return pts.min(axis=1), pts.max(axis=1), cen


def build_bvh(mesh: SimplexMesh) -> Bvh:
    """Binary tree by longest-axis median split of primitive centroids (ties by index)."""
    n = len(mesh)
    if n == 0:
        raise ValueError("empty mesh")
    plo, phi, cen = primitive_boxes(mesh)
    cap = 2 * n - 1
    lo = np.empty((cap, 3))
    hi = np.empty((cap, 3))
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    prim = np.full(cap, -1, dtype=np.int64)
    count = np.zeros(cap, dtype=np.int64)

    order = np.arange(n)
    next_id = 1
    stack = [(0, 0, n)]
    while stack:
        node, a, b = stack.pop()
        ids = order[a:b]
        lo[node] = plo[ids].min(axis=0)
        hi[node] = phi[ids].max(axis=0)
        count[node] = b - a
        if b - a == 1:
            prim[node] = ids[0]
            continue
        c = cen[ids]
        axis = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
        srt = np.lexsort((ids, c[:, axis]))
        order[a:b] = ids[srt]
        mid = (a + b) // 2
        l, r = next_id, next_id + 1
        next_id += 2
        left[node], right[node] = l, r
        stack.append((r, mid, b))
        stack.append((l, a, mid))
    diam = np.linalg.norm(hi - lo, axis=1)
    return Bvh(lo, hi, left, right, prim, count, diam)


@njit(cache=True)
def box_closest_point(lo, hi, p):
    out = np.empty(3)
    for a in range(3):
        out[a] = min(max(p[a], lo[a]), hi[a])
    return out


@njit(cache=True)
def _rect_corner(lo, hi, fixed, sign, free_pick, out):
    # fixed axes take the box extreme on the query side; free axes take the picked extreme
    for a in range(3):
        if fixed[a]:
            out[a] = hi[a] if sign[a] > 0 else lo[a]
        else:
            out[a] = hi[a] if free_pick[a] else lo[a]


@njit(cache=True)
def box_proximity(lo, hi, gv, gn):
    """Expansion centre on box [lo, hi] for query simplex ``gv``.

    Returns (ok, d, yx, yy, yz, px, py, pz, lam1, lam2) where y is the
    expansion centre, p the matching point on the query and lam its
    barycentrics.  ``ok`` is False when the query is not
    entirely outside any face halfspace, in which case traversal must descend.
    Point queries use the exact clamp (and may return d = 0).
    """
    if gn == 0:
        d2 = 0.0
        y = np.empty(3)
        for a in range(3):
            y[a] = min(max(gv[0, a], lo[a]), hi[a])
            d2 += (gv[0, a] - y[a]) ** 2
        return True, np.sqrt(d2), y[0], y[1], y[2], gv[0, 0], gv[0, 1], gv[0, 2], 0.0, 0.0

    fixed = np.zeros(3, dtype=np.bool_)
    sign = np.zeros(3, dtype=np.int64)
    nfixed = 0
    for a in range(3):
        above = True
        below = True
        for k in range(gn + 1):
            if gv[k, a] <= hi[a]:
                above = False
            if gv[k, a] >= lo[a]:
                below = False
        if above:
            fixed[a] = True
            sign[a] = 1
            nfixed += 1
        elif below:
            fixed[a] = True
            sign[a] = -1
            nfixed += 1
    if nfixed == 0:
        return False, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0

    # feature vertices: 1 (corner), 2 (box edge) or 4 (face rectangle)
    free = np.empty(2, dtype=np.int64)
    nfree = 0
    for a in range(3):
        if not fixed[a] and hi[a] > lo[a]:
            free[nfree] = a
            nfree += 1
    pick = np.zeros(3, dtype=np.bool_)
    fv = np.zeros((3, 3))
    if nfree == 0:
        _rect_corner(lo, hi, fixed, sign, pick, fv[0])
        res = pair_distance(fv, 0, gv, gn)
    elif nfree == 1:
        _rect_corner(lo, hi, fixed, sign, pick, fv[0])
        pick[free[0]] = True
        _rect_corner(lo, hi, fixed, sign, pick, fv[1])
        res = pair_distance(fv, 1, gv, gn)
    else:
        c00 = np.empty(3)
        c10 = np.empty(3)
        c11 = np.empty(3)
        c01 = np.empty(3)
        _rect_corner(lo, hi, fixed, sign, pick, c00)
        pick[free[0]] = True
        _rect_corner(lo, hi, fixed, sign, pick, c10)
        pick[free[1]] = True
        _rect_corner(lo, hi, fixed, sign, pick, c11)
        pick[free[0]] = False
        _rect_corner(lo, hi, fixed, sign, pick, c01)
        fv[0] = c00
        fv[1] = c10
        fv[2] = c11
        res = pair_distance(fv, 2, gv, gn)
        fv[1] = c11
        fv[2] = c01
        res2 = pair_distance(fv, 2, gv, gn)
        if res2[0] < res[0]:
            res = res2
    return True, res[0], res[5], res[6], res[7], res[8], res[9], res[10], res[3], res[4]


@njit(cache=True)
def bh_admissible(diam, d, beta):
    """|B| / d < beta, with d = 0 never admissible."""
    return d > 0.0 and diam < beta * d


# ---------------------------------------------------------------------------
# Python-facing helpers


def box_primitive_proximity(lo, hi, g):
    """Expansion centre and distance, or ``None`` when traversal must descend."""
    from .exact_dist import as_simplex

    gv, gn = as_simplex(g)
    ok, d, *rest = box_proximity(np.asarray(lo, float), np.asarray(hi, float), gv, gn)
    if not ok:
        return None
    return np.array(rest[:3]), float(d)


def bh_condition(diam, d, beta) -> bool:
    if d is None:
        return False
    return bool(bh_admissible(float(diam), float(d), float(beta)))


_MAGIC = b"SMDB"
_VERSION = 1


def save_bvh(bvh: Bvh, path):
    N = len(bvh)
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<IQ", _VERSION, N))
        for arr, dt in zip(bvh.arrays, ("<f8", "<f8", "<i8", "<i8", "<i8", "<i8", "<f8")):
            fh.write(np.ascontiguousarray(arr).astype(dt).tobytes())


def load_bvh(path) -> Bvh:
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValueError("not a BVH cache file")
        version, N = struct.unpack("<IQ", fh.read(12))
        if version != _VERSION:
            raise ValueError(f"unsupported BVH cache version {version}")
        out = []
        for shape, dt in (((N, 3), "<f8"), ((N, 3), "<f8"), ((N,), "<i8"), ((N,), "<i8"), ((N,), "<i8"), ((N,), "<i8"), ((N,), "<f8")):
            size = int(np.prod(shape)) * 8
            out.append(np.frombuffer(fh.read(size), dtype=dt).reshape(shape).astype(np.float64 if dt.endswith("f8") else np.int64))
    return Bvh(*out)
