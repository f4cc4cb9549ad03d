"""Independent reference implementations used as test oracles.

Nothing here calls the numba kernels: distances come from plane projection
plus explicit region checks, pair distances from zooming barycentric grids,
and smooth distances from a plain Python loop over every primitive.
"""

import math

import numpy as np

from smoothdist.weights import MONOMIALS


def point_segment(q, a, b):
    """(distance, t) with closest point (1-t) a + t b."""
    d = b - a
    t = float(np.clip((q - a) @ d / (d @ d), 0.0, 1.0))
    return float(np.linalg.norm(a + t * d - q)), t


def point_triangle(q, a, b, c):
    """(distance, (phi1, phi2)) with closest point (1-phi1-phi2) a + phi1 b + phi2 c."""
    e1, e2 = b - a, c - a
    G = np.array([[e1 @ e1, e1 @ e2], [e1 @ e2, e2 @ e2]])
    s, t = np.linalg.solve(G, [(q - a) @ e1, (q - a) @ e2])
    if s >= 0 and t >= 0 and s + t <= 1:
        x = a + s * e1 + t * e2
        return float(np.linalg.norm(q - x)), (float(s), float(t))
    best = None
    for (p0, p1), conv in (((a, b), lambda u: (u, 0.0)), ((a, c), lambda u: (0.0, u)), ((b, c), lambda u: (1.0 - u, u))):
        d, u = point_segment(q, p0, p1)
        if best is None or d < best[0]:
            best = (d, conv(u))
    return best


def point_simplex(q, verts):
    verts = np.asarray(verts, dtype=float)
    if len(verts) == 1:
        return float(np.linalg.norm(q - verts[0])), ()
    if len(verts) == 2:
        d, t = point_segment(q, verts[0], verts[1])
        return d, (t,)
    return point_triangle(q, *verts)


def _bary_grid(n, res, lo=None, hi=None):
    """Barycentric samples for an n-simplex as (k, n) parameter arrays."""
    if n == 0:
        return np.zeros((1, 0))
    lo = np.zeros(n) if lo is None else lo
    hi = np.ones(n) if hi is None else hi
    axes = [np.linspace(lo[i], hi[i], res) for i in range(n)]
    P = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, n)
    P = np.clip(P, 0.0, 1.0)
    if n == 2:
        P = P[P.sum(axis=1) <= 1.0 + 1e-15]
    return P


def _points(verts, P):
    verts = np.asarray(verts, dtype=float)
    n = len(verts) - 1
    if n == 0:
        return np.repeat(verts[:1], len(P), axis=0)
    return verts[0] + P @ (verts[1:] - verts[0])


def sampled_pair_distance(f, g, res=60, rounds=8):
    """Minimum distance between two simplices by zooming barycentric grids.

    The pair distance is a convex problem, so shrinking the sampling box
    around the best sample converges to the global minimum from above.
    """
    f, g = np.asarray(f, float), np.asarray(g, float)
    nf, ng = len(f) - 1, len(g) - 1
    cf, cg = np.full(nf, 0.5), np.full(ng, 0.5)
    half = 0.5
    best = math.inf
    for _ in range(rounds):
        Pf = _bary_grid(nf, res, cf - half, cf + half)
        Pg = _bary_grid(ng, res, cg - half, cg + half)
        X, Y = _points(f, Pf), _points(g, Pg)
        D = np.linalg.norm(X[:, None, :] - Y[None, :, :], axis=2)
        i, j = np.unravel_index(np.argmin(D), D.shape)
        best = min(best, float(D[i, j]))
        cf, cg = Pf[i], Pg[j]
        half *= 4.0 / res
    return best


def tri_weight_value(coeffs, s, t):
    return sum(coeffs[k] * s**i * t**j for k, (i, j) in enumerate(MONOMIALS))


def edge_weight_value(coeffs, t):
    return sum(coeffs[k] * t**k for k in range(5))


def reference_dhat(mesh, weights, q, alpha, alpha_u, unit=False):
    """d_hat at a point by an explicit loop over all primitives (beta = 0)."""
    S = alpha / max(alpha, alpha_u)
    total = 0.0
    for i in range(len(mesh)):
        verts = mesh.simplex_vertices(i)
        d, phi = point_simplex(q, verts)
        k = len(verts) - 1
        if k == 0 or unit:
            w = 1.0
        elif k == 1:
            w = (weights.A * edge_weight_value(weights.coeffs[i], phi[0])) ** S
        else:
            w = (weights.A * tri_weight_value(weights.coeffs[i], *phi)) ** S
        total += w * math.exp(-alpha * d)
    return math.inf if total == 0.0 else -math.log(total) / alpha


def brute_min_distance(mesh, q):
    return min(point_simplex(q, mesh.simplex_vertices(i))[0] for i in range(len(mesh)))


def central_difference(f, x, h=1e-6):
    """Gradient of scalar f at array x (any shape) by central differences."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[idx] += h
        xm[idx] -= h
        g[idx] = (f(xp) - f(xm)) / (2 * h)
    return g


def pearson(x, y):
    x = np.asarray(x, float) - np.mean(x)
    y = np.asarray(y, float) - np.mean(y)
    return float(x @ y / math.sqrt((x @ x) * (y @ y)))
