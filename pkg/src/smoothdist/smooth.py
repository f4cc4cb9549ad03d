"""Smooth (LogSumExp) minimum distance with Barnes-Hut acceleration.

For a data mesh M and query simplex g::

    d_hat(M, g) = -(1/alpha) log sum_i w_i exp(-alpha d_i)

with weights w_i >= 1, so d_hat never exceeds the exact minimum distance.
Far clusters of the BVH are replaced by a single term placed at the closest
point of their box, which can only lower d_hat further.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .bvh import Bvh, box_proximity, build_bvh
from .exact_dist import as_simplex, bary_full, closest_pair_jacobian, pair_distance, point_packed, unpack
from .mesh import NoEdgesError, SimplexMesh, bounding_box, min_edge_length
from .weights import WeightSet, build_weights, weighted_exp

log = logging.getLogger(__name__)

EPSILON = 1e-300
STACK_SIZE = 256
UNDERFLOW = 746.0  # exp(-746) rounds to zero in double precision


@dataclass(frozen=True)
class SmoothParams:
    alpha: float
    alpha_u: float | None = None  # defaults to 6 * alpha
    beta: float = 0.5
    alpha_q: float | None = None  # defaults to alpha
    epsilon: float = EPSILON
    metric_scaling: bool = True
    exact_jacobian: bool = False  # true projection Jacobian in the weight gradient

    def __post_init__(self):
        if self.alpha_u is None:
            object.__setattr__(self, "alpha_u", 6.0 * self.alpha)
        if self.alpha_q is None:
            object.__setattr__(self, "alpha_q", self.alpha)
        if not (self.alpha > 0 and self.alpha_u > 0 and self.alpha_q > 0 and self.epsilon > 0):
            raise ValueError("alpha, alpha_u, alpha_q and epsilon must be positive")
        if not self.beta >= 0:
            raise ValueError("beta must be non-negative")
        for name in ("alpha", "alpha_u", "beta", "alpha_q"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    @property
    def attenuation(self) -> float:
        return self.alpha / max(self.alpha, self.alpha_u)


@dataclass(frozen=True)
class SmoothResult:
    d_hat: float
    grad: np.ndarray
    leaves: int = 0
    far_field: int = 0
    c: float = 0.0
    vertex_grads: np.ndarray | None = None  # per query vertex, rows sum to grad


# ---------------------------------------------------------------------------
# kernels


@njit(cache=True, nogil=True)
def collect_point(geom, tree, qx, qy, qz, alpha, S, beta, metric, stack, gout):
    """``collect`` specialised to a point query with the identity projection Jacobian."""
    P, K, coeffs, bgrads, A, far_w = geom
    lo, hi, left, right, prim, count, diam = tree
    gx = 0.0
    gy = 0.0
    gz = 0.0
    c = 0.0
    leaves = 0
    far = 0
    wscale = 1.0 / alpha
    if metric:
        wscale /= alpha
    far_weight = far_w**S
    cut = UNDERFLOW + np.log(far_weight)  # no weight exceeds far_weight
    beta2 = beta * beta
    top = 0
    stack[0] = 0
    while top >= 0:
        node = stack[top]
        top -= 1
        if beta > 0.0:
            dx = qx - min(max(qx, lo[node, 0]), hi[node, 0])
            dy = qy - min(max(qy, lo[node, 1]), hi[node, 1])
            dz = qz - min(max(qz, lo[node, 2]), hi[node, 2])
            d2 = dx * dx + dy * dy + dz * dz
            if d2 > 0.0 and diam[node] * diam[node] < beta2 * d2:
                dB = np.sqrt(d2)
                e = count[node] * far_weight * np.exp(-alpha * dB)
                c += e
                s = e / dB
                gx += s * dx
                gy += s * dy
                gz += s * dz
                far += 1
                continue
        i = prim[node]
        if i < 0:
            top += 1
            stack[top] = right[node]
            top += 1
            stack[top] = left[node]
            continue
        leaves += 1
        d, p1, p2, fx, fy, fz = point_packed(P, K[i], i, qx, qy, qz)
        if alpha * d > cut:
            continue  # w exp(-alpha d) underflows to zero
        we, e1, e2 = weighted_exp(K[i], coeffs[i], A, S, alpha, d, p1, p2)
        c += we
        if d > 0.0:
            s = we / d
            gx += s * (qx - fx)
            gy += s * (qy - fy)
            gz += s * (qz - fz)
        if e1 != 0.0 or e2 != 0.0:
            gx -= wscale * (e1 * bgrads[i, 0, 0] + e2 * bgrads[i, 1, 0])
            gy -= wscale * (e1 * bgrads[i, 0, 1] + e2 * bgrads[i, 1, 1])
            gz -= wscale * (e1 * bgrads[i, 0, 2] + e2 * bgrads[i, 1, 2])
    gout[0, 0] = gx
    gout[0, 1] = gy
    gout[0, 2] = gz
    return c, leaves, far


@njit(cache=True, nogil=True)
def collect(geom, tree, gv, gn, alpha, S, beta, metric, exact_jac, stack, fv, gout):
    """Sum of weighted exponentials over the tree, and its gradient numerators.

    ``gout[m]`` receives the numerator of the gradient with respect to vertex
    ``m`` of the query (rows beyond ``gn`` stay zero); their sum is the
    translation gradient.  Returns (c, leaves, far).  ``stack`` and ``fv``
    are scratch.
    """
    gout[:, :] = 0.0
    if gn == 0 and not exact_jac:
        return collect_point(geom, tree, gv[0, 0], gv[0, 1], gv[0, 2], alpha, S, beta, metric, stack, gout)
    P, K, coeffs, bgrads, A, far_w = geom
    lo, hi, left, right, prim, count, diam = tree
    c = 0.0
    leaves = 0
    far = 0
    wscale = 1.0 / alpha
    if metric:
        wscale /= alpha
    far_weight = far_w**S
    cut = UNDERFLOW + np.log(far_weight)  # no weight exceeds far_weight
    lam = np.zeros(3)
    J = np.zeros((2, 3))
    top = 0
    stack[0] = 0
    while top >= 0:
        node = stack[top]
        top -= 1
        if beta > 0.0:
            ok, dB, yx, yy, yz, px, py, pz, l1, l2 = box_proximity(lo[node], hi[node], gv, gn)
            if ok and dB > 0.0 and diam[node] < beta * dB:
                e = count[node] * far_weight * np.exp(-alpha * dB)
                c += e
                s = e / dB
                bary_full(gn, l1, l2, lam)
                for m in range(gn + 1):
                    sm = s * lam[m]
                    gout[m, 0] += sm * (px - yx)
                    gout[m, 1] += sm * (py - yy)
                    gout[m, 2] += sm * (pz - yz)
                far += 1
                continue
        i = prim[node]
        if i < 0:
            top += 1
            stack[top] = right[node]
            top += 1
            stack[top] = left[node]
            continue
        leaves += 1
        fn = K[i]
        unpack(P, fn, i, fv)
        res = pair_distance(fv, fn, gv, gn)
        d = res[0]
        if alpha * d > cut:
            continue  # w exp(-alpha d) underflows to zero
        we, e1, e2 = weighted_exp(fn, coeffs[i], A, S, alpha, d, res[1], res[2])
        c += we
        bary_full(gn, res[3], res[4], lam)
        if d > 0.0:
            s = we / d
            for m in range(gn + 1):
                sm = s * lam[m]
                gout[m, 0] += sm * (res[8] - res[5])
                gout[m, 1] += sm * (res[9] - res[6])
                gout[m, 2] += sm * (res[10] - res[7])
        if e1 == 0.0 and e2 == 0.0:
            continue
        for m in range(gn + 1):
            if exact_jac and closest_pair_jacobian(fv, fn, gv, gn, res, m, J):
                for x in range(3):
                    gout[m, x] -= wscale * (e1 * J[0, x] + e2 * J[1, x])
            else:
                # identity projection Jacobian, shared by barycentric weight
                for x in range(3):
                    gout[m, x] -= wscale * lam[m] * (e1 * bgrads[i, 0, x] + e2 * bgrads[i, 1, x])
    return c, leaves, far


@njit(cache=True, nogil=True)
def finish(c, alpha, eps):
    """d_hat = -log(c)/alpha and the gradient factor 1/(c + eps); c == 0 gives +inf and zero."""
    if c <= 0.0:
        return np.inf, 0.0
    return -np.log(c) / alpha, 1.0 / (c + eps)


@njit(cache=True, nogil=True)
def batch_points(geom, tree, Q, alpha, S, beta, metric, exact_jac, eps, out_d, out_g, out_leaves, out_far):
    stack = np.empty(STACK_SIZE, dtype=np.int64)
    fv = np.zeros((3, 3))
    gv = np.zeros((3, 3))
    gout = np.zeros((3, 3))
    for k in range(Q.shape[0]):
        gv[0, 0] = Q[k, 0]
        gv[0, 1] = Q[k, 1]
        gv[0, 2] = Q[k, 2]
        c, lv, fr = collect(geom, tree, gv, 0, alpha, S, beta, metric, exact_jac, stack, fv, gout)
        d, inv = finish(c, alpha, eps)
        out_d[k] = d
        for x in range(3):
            out_g[k, x] = gout[0, x] * inv
        out_leaves[k] = lv
        out_far[k] = fr


@njit(cache=True, nogil=True)
def batch_simplices(geom, tree, G, GN, alpha, S, beta, metric, exact_jac, eps, out_d, out_g, out_leaves, out_far):
    """Like ``batch_points`` but ``out_g`` is (n, 3, 3): per query vertex gradients."""
    stack = np.empty(STACK_SIZE, dtype=np.int64)
    fv = np.zeros((3, 3))
    gout = np.zeros((3, 3))
    for k in range(G.shape[0]):
        c, lv, fr = collect(geom, tree, G[k], GN[k], alpha, S, beta, metric, exact_jac, stack, fv, gout)
        d, inv = finish(c, alpha, eps)
        out_d[k] = d
        for m in range(3):
            for x in range(3):
                out_g[k, m, x] = gout[m, x] * inv
        out_leaves[k] = lv
        out_far[k] = fr


# ---------------------------------------------------------------------------
# Python API


@dataclass(frozen=True, eq=False)
class DistanceField:
    """A data mesh with its BVH and weights, ready for smooth distance queries."""

    mesh: SimplexMesh
    bvh: Bvh
    weights: WeightSet
    _geom: tuple = field(init=False, repr=False)
    _tree: tuple = field(init=False, repr=False)

    def __post_init__(self):
        # primitives are stored in BVH leaf order so traversal walks memory forwards
        w = self.weights
        leaf = np.flatnonzero(self.bvh.prim >= 0)
        order = self.bvh.prim[leaf]
        slot = np.full(len(self.bvh), -1, dtype=np.int64)
        slot[leaf] = np.arange(len(leaf))
        S = self.mesh.simplices[order]
        P = self.mesh.vertices[np.where(S >= 0, S, S[:, :1])]
        geom = (
            np.ascontiguousarray(P),
            np.ascontiguousarray(w.kinds[order], dtype=np.int64),
            np.ascontiguousarray(w.coeffs[order]),
            np.ascontiguousarray(w.bary_grads[order]),
            float(w.A),
            float(w.far_base),
        )
        b = self.bvh
        object.__setattr__(self, "_geom", geom)
        object.__setattr__(self, "_tree", (b.lo, b.hi, b.left, b.right, slot, b.count, b.diam))

    @classmethod
    def build(cls, mesh: SimplexMesh, unit_weights=False) -> DistanceField:
        weights = build_weights(mesh, unit=unit_weights)
        return cls(mesh, build_bvh(mesh), weights)

    @property
    def tree(self):
        return self._tree

    def max_weight(self, params: SmoothParams) -> float:
        """Upper bound on every w_i, the A of the underestimate bound."""
        return self.weights.max_weight(params.alpha, params.alpha_u)

    def _args(self, p: SmoothParams):
        return (p.alpha, p.attenuation, p.beta, p.metric_scaling, p.exact_jacobian)

    def collect(self, g, params: SmoothParams):
        """(c, per-vertex gradient numerators (n+1, 3), leaves, far) for one query simplex."""
        gv, gn = as_simplex(g)
        stack = np.empty(STACK_SIZE, dtype=np.int64)
        gout = np.zeros((3, 3))
        c, lv, fr = collect(self._geom, self.tree, gv, gn, *self._args(params), stack, np.zeros((3, 3)), gout)
        return c, gout[: gn + 1].copy(), lv, fr

    def query(self, g, params: SmoothParams) -> SmoothResult:
        c, gout, lv, fr = self.collect(g, params)
        d, inv = finish(c, params.alpha, params.epsilon)
        vg = gout * inv
        return SmoothResult(float(d), vg.sum(axis=0), int(lv), int(fr), float(c), vg)

    def query_points(self, Q, params: SmoothParams, threads=1):
        """Smooth distance at many points: (d_hat, grad, leaves, far)."""
        Q = np.ascontiguousarray(np.asarray(Q, dtype=np.float64).reshape(-1, 3))
        n = len(Q)
        out_d = np.empty(n)
        out_g = np.empty((n, 3))
        out_l = np.empty(n, dtype=np.int64)
        out_f = np.empty(n, dtype=np.int64)
        args = self._args(params) + (params.epsilon,)

        def run(a, b):
            batch_points(self._geom, self.tree, Q[a:b], *args, out_d[a:b], out_g[a:b], out_l[a:b], out_f[a:b])

        _parallel_ranges(run, n, threads)
        return out_d, out_g, out_l, out_f

    def query_simplices(self, G, GN, params: SmoothParams, threads=1):
        """Smooth distance for query simplices given as padded (n, 3, 3) vertices and dims.

        Returns (d_hat, per-vertex grads (n, 3, 3), leaves, far).
        """
        G = np.ascontiguousarray(G, dtype=np.float64)
        GN = np.ascontiguousarray(GN, dtype=np.int64)
        n = len(G)
        out_d = np.empty(n)
        out_g = np.empty((n, 3, 3))
        out_l = np.empty(n, dtype=np.int64)
        out_f = np.empty(n, dtype=np.int64)
        args = self._args(params) + (params.epsilon,)

        def run(a, b):
            batch_simplices(self._geom, self.tree, G[a:b], GN[a:b], *args, out_d[a:b], out_g[a:b], out_l[a:b], out_f[a:b])

        _parallel_ranges(run, n, threads)
        return out_d, out_g, out_l, out_f


def _parallel_ranges(fn, n, threads, chunk=None):
    threads = max(1, int(threads))
    if threads == 1 or n < 2:
        fn(0, n)
        return
    chunk = chunk or max(1, -(-n // (threads * 4)))
    with ThreadPoolExecutor(threads) as pool:
        list(pool.map(lambda a: fn(a, min(a + chunk, n)), range(0, n, chunk)))


def collect_contributions(field_: DistanceField, g, params: SmoothParams):
    """(c, translation gradient numerator, leaves, far) for query simplex ``g``."""
    c, gout, lv, fr = field_.collect(g, params)
    return c, gout.sum(axis=0), lv, fr


def smooth_min_dist(field_: DistanceField, g, params: SmoothParams) -> SmoothResult:
    return field_.query(g, params)


def query_mesh_simplices(query: SimplexMesh):
    n = len(query)
    G = np.zeros((n, 3, 3))
    for j in range(n):
        k = query.kinds[j]
        G[j, : k + 1] = query.vertices[query.simplices[j, : k + 1]]
    return G, np.array(query.kinds, dtype=np.int64)


@dataclass(frozen=True)
class MeshDistance:
    d_hat: float
    vertex_grads: np.ndarray  # (|V_query|, 3)
    inner: np.ndarray  # d_hat(M, g_j) per query simplex
    inner_grads: np.ndarray  # (|F_query|, 3, 3) per simplex vertex
    leaves: int
    far_field: int


def smooth_mesh_dist(field_: DistanceField, query: SimplexMesh, params: SmoothParams, threads=1, split="exact") -> MeshDistance:
    """Smooth distance between the data mesh and a query mesh, with per-vertex gradients.

    Each query simplex contributes exp(-alpha_q d_j) to the outer sum, split
    equally among its vertices.  With ``split="exact"`` a vertex collects the
    derivative of each incident d_j with respect to that vertex.  With
    ``split="equal"`` it collects 1/(n+1) of the translation gradient of d_j,
    which agrees with the exact form for point queries and for rigid motion.
    """
    if len(query) == 0:
        raise ValueError("empty query mesh")
    if split not in ("exact", "equal"):
        raise ValueError(f"unknown split {split!r}")
    G, GN = query_mesh_simplices(query)
    d, vg, lv, fr = field_.query_simplices(G, GN, params, threads=threads)
    aq = params.alpha_q
    finite = np.isfinite(d)
    grads = np.zeros((len(query.vertices), 3))
    if not finite.any():
        return MeshDistance(math.inf, grads, d, vg, int(lv.sum()), int(fr.sum()))
    # shifting by the smallest inner distance leaves the ratios unchanged
    shift = d[finite].min()
    e = np.where(finite, np.exp(-aq * (np.where(finite, d, shift) - shift)), 0.0)
    total = e.sum()
    d_hat = shift - math.log(total) / aq
    share = e / total
    if split == "exact":
        contrib = share[:, None, None] * vg
    else:
        trans = vg.sum(axis=1) / (GN + 1)[:, None]
        contrib = np.repeat((share[:, None] * trans)[:, None, :], 3, axis=1)
    # serial reduction over one-rings
    for m in range(3):
        rows = GN >= m
        np.add.at(grads, query.simplices[rows, m], contrib[rows, m])
    return MeshDistance(float(d_hat), grads, d, vg, int(lv.sum()), int(fr.sum()))


def combine_constraints(values, alpha) -> float:
    """LogSumExp soft-min of several distance constraints at a shared alpha."""
    values = np.asarray(values, dtype=float)
    finite = values[np.isfinite(values)]
    if len(finite) == 0:
        return math.inf
    m = finite.min()
    return float(m - math.log(np.exp(-alpha * (finite - m)).sum()) / alpha)


# ---------------------------------------------------------------------------
# parameters


def alpha_heuristic(mesh: SimplexMesh, alpha_u_factor=6.0, point_rule=None):
    """Starting values for (alpha, alpha_U).

    Edge and triangle meshes use the reciprocal of the shortest edge.  Point
    clouds have no such scale: ``point_rule="bbox100"`` applies alpha = 100 *
    bbox diagonal literally; otherwise alpha = 100 / bbox diagonal is returned.
    Either way a warning recommends tuning by hand.
    """
    try:
        alpha = 1.0 / min_edge_length(mesh)
    except NoEdgesError:
        diag = bounding_box(mesh).diagonal or 1.0
        alpha = 100.0 * diag if point_rule == "bbox100" else 100.0 / diag
        log.warning("alpha heuristic for point clouds is a rough guess (alpha=%g); tune it manually", alpha)
    return alpha, alpha_u_factor * alpha


# ---------------------------------------------------------------------------
# integrated and sampled edge distances (non-conservative controls)


def integrated_edge_distance(edge, q, alpha, order=5) -> float:
    """-(1/alpha) log of the integral of exp(-alpha |x - q|) over the edge (Gauss-Legendre)."""
    edge = np.asarray(edge, dtype=float).reshape(2, 3)
    q = np.asarray(q, dtype=float)
    xi, wi = np.polynomial.legendre.leggauss(order)
    L = np.linalg.norm(edge[1] - edge[0])
    t = 0.5 * (xi + 1.0)
    x = edge[0] + t[:, None] * (edge[1] - edge[0])
    r = np.linalg.norm(x - q, axis=1)
    m = r.min()
    total = np.sum(0.5 * L * wi * np.exp(-alpha * (r - m)))
    return float(m - math.log(total) / alpha)


def sampled_edge_distance(edge, q, alpha, n_samples, quadrature_weights=False) -> float:
    """LogSumExp over evenly spaced samples of the edge (unit or length/n weights)."""
    edge = np.asarray(edge, dtype=float).reshape(2, 3)
    q = np.asarray(q, dtype=float)
    t = (np.arange(n_samples) + 0.5) / n_samples
    x = edge[0] + t[:, None] * (edge[1] - edge[0])
    r = np.linalg.norm(x - q, axis=1)
    w = np.linalg.norm(edge[1] - edge[0]) / n_samples if quadrature_weights else 1.0
    m = r.min()
    return float(m - math.log(np.sum(w * np.exp(-alpha * (r - m)))) / alpha)
