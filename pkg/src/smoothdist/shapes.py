"""Procedural test geometry: icospheres, a bumpy torus, V-bowls and random soups."""

from __future__ import annotations

import numpy as np

from .mesh import SimplexMesh


def icosahedron():
    p = (1.0 + 5**0.5) / 2.0
    v = np.array(
        [[-1, p, 0], [1, p, 0], [-1, -p, 0], [1, -p, 0],
         [0, -1, p], [0, 1, p], [0, -1, -p], [0, 1, -p],
         [p, 0, -1], [p, 0, 1], [-p, 0, -1], [-p, 0, 1]],
        dtype=float,
    )
    f = [[0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
         [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
         [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
         [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1]]
    return v / np.linalg.norm(v, axis=1, keepdims=True), np.array(f)


def icosphere(levels=2, radius=1.0, center=(0.0, 0.0, 0.0)) -> SimplexMesh:
    """Loop-style subdivided icosahedron projected to the sphere (20 * 4**levels faces)."""
    v, f = icosahedron()
    verts = list(v)
    for _ in range(levels):
        cache = {}
        out = []

        def mid(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        for a, b, c in f:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            out += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        f = np.array(out)
    V = np.asarray(verts) * radius + np.asarray(center, dtype=float)
    return SimplexMesh.from_lists(V, triangles=f)


def bumpy_torus(nu=60, nv=60, R=1.0, r=0.4, bumps=0.08, freq=(5, 3)) -> SimplexMesh:
    """Closed torus with a sinusoidal bump field; 2 * nu * nv triangles (7200 by default)."""
    u = np.arange(nu) * 2 * np.pi / nu
    v = np.arange(nv) * 2 * np.pi / nv
    U, Vv = np.meshgrid(u, v, indexing="ij")
    rr = r * (1.0 + bumps * np.sin(freq[0] * U) * np.cos(freq[1] * Vv))
    x = (R + rr * np.cos(Vv)) * np.cos(U)
    y = (R + rr * np.cos(Vv)) * np.sin(U)
    z = rr * np.sin(Vv)
    V = np.stack([x, y, z], axis=-1).reshape(-1, 3)
    i, j = np.meshgrid(np.arange(nu), np.arange(nv), indexing="ij")
    a = i * nv + j
    b = ((i + 1) % nu) * nv + j
    c = ((i + 1) % nu) * nv + (j + 1) % nv
    d = i * nv + (j + 1) % nv
    tris = np.concatenate([np.stack([a, b, c], -1).reshape(-1, 3), np.stack([a, c, d], -1).reshape(-1, 3)])
    return SimplexMesh.from_lists(V, triangles=tris)


def v_bowl(depth=1.0, half_width=1.0, rim=0.5, apex=(0.0, 0.0)) -> SimplexMesh:
    """Polyline V in the z=0 plane: flat rim, two slopes meeting at a sharp apex, flat rim."""
    ax, ay = apex
    pts = [
        [ax - half_width - rim, ay + depth, 0.0],
        [ax - half_width, ay + depth, 0.0],
        [ax, ay, 0.0],
        [ax + half_width, ay + depth, 0.0],
        [ax + half_width + rim, ay + depth, 0.0],
    ]
    return SimplexMesh.from_lists(pts, edges=[(0, 1), (1, 2), (2, 3), (3, 4)])


def random_triangle(rng, center, size):
    while True:
        t = center + size * rng.standard_normal((3, 3))
        n = np.cross(t[1] - t[0], t[2] - t[0])
        longest = max(np.sum((t[i] - t[(i + 1) % 3]) ** 2) for i in range(3))
        if np.linalg.norm(n) > 1e-3 * longest:
            return t


def random_mixed_mesh(rng, n_prims=None, kinds=(0, 1, 2), connected=0.5) -> SimplexMesh:
    """Random mesh with up to 200 primitives of mixed kinds in the unit cube.

    A fraction ``connected`` of primitives reuses existing vertices so valences
    above one occur; the rest are free-floating.
    """
    if n_prims is None:
        n_prims = int(rng.integers(1, 201))
    verts = []
    simp = []

    def new_vertex(p):
        verts.append(np.asarray(p, dtype=float))
        return len(verts) - 1

    for _ in range(n_prims):
        k = int(rng.choice(kinds))
        center = rng.random(3)
        size = 0.02 + 0.1 * rng.random()
        for _attempt in range(20):
            if k == 0:
                idx = [new_vertex(center)]
            else:
                reuse = len(verts) >= k + 1 and rng.random() < connected
                if reuse:
                    a = int(rng.integers(len(verts)))
                    pts = [verts[a]] + list(verts[a] + size * rng.standard_normal((k, 3)))
                else:
                    pts = list(center + size * rng.standard_normal((k + 1, 3)))
                P = np.array(pts)
                if k == 1 and np.linalg.norm(P[1] - P[0]) < 1e-3:
                    continue
                if k == 2:
                    n = np.linalg.norm(np.cross(P[1] - P[0], P[2] - P[0]))
                    longest = max(np.sum((P[i] - P[(i + 1) % 3]) ** 2) for i in range(3))
                    if n < 1e-2 * longest:
                        continue
                idx = [a] + [new_vertex(p) for p in pts[1:]] if reuse else [new_vertex(p) for p in pts]
            simp.append(idx + [-1] * (3 - len(idx)))
            break
    return SimplexMesh(np.array(verts), np.array(simp, dtype=np.int64))


def random_query(rng, kind, lo=-0.5, hi=1.5, size=0.15):
    center = lo + (hi - lo) * rng.random(3)
    if kind == 0:
        return center[None, :]
    if kind == 1:
        while True:
            e = center + size * rng.standard_normal((2, 3))
            if np.linalg.norm(e[1] - e[0]) > 1e-3:
                return e
    return random_triangle(rng, center, size)
