"""Per-primitive weight polynomials that counter concentration at shared faces.

Edges carry a quartic in the edge parameter t; triangles carry a symmetric
degree-7 bivariate polynomial in (s, t) with zero normal derivative on all
three sides.  Weights are scaled by a mesh-wide factor A so that A * w~ >= 1,
then attenuated as (A * w~)^S with S = alpha / max(alpha, alpha_U).

Triangle coefficients are laid out column-major by the power of t::

    MONOMIALS = [(i, j) for j in range(8) for i in range(8 - j)]   # s^i t^j

so a polynomial evaluates as nested Horner loops.  Symmetry plus the
structural zeros c_1j = c_i1 = 0 leave 13 free values, stored in the order of
``UNIQUE`` (pairs with i <= j, i, j != 1).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numba import njit

from .mesh import EDGE, POINT, TRIANGLE, Adjacency, SimplexMesh, compute_adjacency

DEGREE = 7
MONOMIALS = [(i, j) for j in range(DEGREE + 1) for i in range(DEGREE + 1 - j)]
MONO_INDEX = {m: k for k, m in enumerate(MONOMIALS)}
UNIQUE = [(i, j) for i in range(DEGREE + 1) for j in range(i, DEGREE + 1 - i) if 1 not in (i, j)]
NCOEF = len(MONOMIALS)
PINV_RCOND = 1e-10

assert NCOEF == 36 and len(UNIQUE) == 13


# ---------------------------------------------------------------------------
# edges


@dataclass(frozen=True)
class EdgeWeightPoly:
    coeffs: np.ndarray  # c0 + c1 t + ... + c4 t^4
    valence0: int
    valence1: int

    def __call__(self, t):
        return np.polynomial.polynomial.polyval(t, self.coeffs)

    def derivative(self, t):
        return np.polynomial.polynomial.polyval(t, np.polynomial.polynomial.polyder(self.coeffs))

    def residuals(self) -> np.ndarray:
        return _edge_system(self.valence0, self.valence1)[0] @ self.coeffs - _edge_system(
            self.valence0, self.valence1
        )[1]


def _edge_system(n0, n1):
    A = np.array(
        [
            [1.0, 0.0, 0.0, 0.0, 0.0],
            [1.0, 1.0, 1.0, 1.0, 1.0],
            [1.0, 0.5, 0.25, 0.125, 0.0625],
            [0.0, 1.0, 0.0, 0.0, 0.0],
            [0.0, 1.0, 2.0, 3.0, 4.0],
        ]
    )
    b = np.array([1.0 / n0, 1.0 / n1, 1.0, 0.0, 0.0])
    return A, b


def build_edge_weight(valence0: int, valence1: int) -> EdgeWeightPoly:
    """Quartic with w(0)=1/N0, w(1)=1/N1, w(0.5)=1 and w'(0)=w'(1)=0."""
    if valence0 < 1 or valence1 < 1:
        raise ValueError("valences must be >= 1")
    A, b = _edge_system(valence0, valence1)
    coeffs = np.linalg.solve(A, b)
    return EdgeWeightPoly(coeffs, int(valence0), int(valence1))


@lru_cache(maxsize=None)
def edge_extrema(n0: int, n1: int) -> tuple[float, float]:
    poly = build_edge_weight(n0, n1)
    crit = [0.0, 1.0]
    for r in np.roots(np.polynomial.polynomial.polyder(poly.coeffs)[::-1]):
        if abs(r.imag) < 1e-12 and 0.0 <= r.real <= 1.0:
            crit.append(r.real)
    vals = poly(np.array(crit))
    return float(vals.min()), float(vals.max())


# ---------------------------------------------------------------------------
# triangles


def barycenter_target(v: int, e: int) -> float:
    """Weight imposed at (1/3, 1/3).

    (v - 1) / v is used for manifold-like stars (v >= 2, e <= 2).  For an
    isolated triangle or a non-manifold edge fan that target produces negative
    weights, so 1/e is used instead; for v == e this yields the constant 1/v.
    """
    if v >= 2 and e <= 2:
        return (v - 1) / v
    return 1.0 / e


def _line_derivative_rows(swap: bool) -> np.ndarray:
    """Rows giving the coefficients (in x) of (d/ds + d/dt) w along s + t = 1.

    ``swap=False`` parametrizes the line as (s, t) = (x, 1 - x), ``swap=True`` as (1 - x, x).
    """
    P = np.polynomial.polynomial
    rows = np.zeros((DEGREE, NCOEF))
    lin_x = np.array([0.0, 1.0])
    lin_1mx = np.array([1.0, -1.0])
    for k, (i, j) in enumerate(MONOMIALS):
        for a, b, mult in ((i - 1, j, i), (i, j - 1, j)):
            if mult == 0:
                continue
            ps = P.polypow(lin_1mx if swap else lin_x, a)
            pt = P.polypow(lin_x if swap else lin_1mx, b)
            p = mult * P.polymul(ps, pt)
            rows[: len(p), k] += p
    return rows


def tri_system(v: int, e: int, bary=None) -> tuple[np.ndarray, np.ndarray]:
    """The 36 x 36 constraint system: 10 point constraints and 26 normal-derivative rows."""
    if bary is None:
        bary = barycenter_target(v, e)
    rows, rhs = [], []

    def point(s, t, val):
        rows.append([s**i * t**j for i, j in MONOMIALS])
        rhs.append(val)

    for s, t in ((0.0, 0.0), (1.0, 0.0), (0.0, 1.0)):
        point(s, t, 1.0 / v)
    third = 1.0 / 3.0
    for s, t in ((third, 0.0), (2 * third, 0.0), (third, 2 * third), (2 * third, third), (0.0, third), (0.0, 2 * third)):
        point(s, t, 1.0 / e)
    point(third, third, bary)

    # d/ds w(0, t) == 0 -> c_1j = 0;  d/dt w(t, 0) == 0 -> c_i1 = 0 (c_11 shared)
    for j in range(DEGREE):
        r = np.zeros(NCOEF)
        r[MONO_INDEX[(1, j)]] = 1.0
        rows.append(r)
        rhs.append(0.0)
    for i in range(DEGREE):
        if i == 1:
            continue
        r = np.zeros(NCOEF)
        r[MONO_INDEX[(i, 1)]] = 1.0
        rows.append(r)
        rhs.append(0.0)
    # hypotenuse, both parametrizations; the degree-6 rows coincide
    for r in _line_derivative_rows(False):
        rows.append(r)
        rhs.append(0.0)
    for r in _line_derivative_rows(True)[: DEGREE - 1]:
        rows.append(r)
        rhs.append(0.0)
    A = np.array(rows, dtype=float)
    assert A.shape == (NCOEF, NCOEF)
    return A, np.array(rhs)


def compress(coeffs: np.ndarray) -> np.ndarray:
    return np.array([coeffs[MONO_INDEX[m]] for m in UNIQUE])


def expand(unique: np.ndarray) -> np.ndarray:
    out = np.zeros(NCOEF)
    for val, (i, j) in zip(unique, UNIQUE):
        out[MONO_INDEX[(i, j)]] = val
        out[MONO_INDEX[(j, i)]] = val
    return out


@dataclass(frozen=True)
class TriWeightPoly:
    unique: np.ndarray  # 13 stored values
    v: int
    e: int
    bary: float

    @property
    def coeffs(self) -> np.ndarray:
        return expand(self.unique)

    def __call__(self, s, t):
        s = np.asarray(s, dtype=float)
        t = np.asarray(t, dtype=float)
        c = self.coeffs
        return sum(c[k] * s**i * t**j for k, (i, j) in enumerate(MONOMIALS))

    def gradient(self, s, t):
        s = np.asarray(s, dtype=float)
        t = np.asarray(t, dtype=float)
        c = self.coeffs
        ds = sum(c[k] * i * s ** max(i - 1, 0) * t**j for k, (i, j) in enumerate(MONOMIALS) if i)
        dt = sum(c[k] * j * s**i * t ** max(j - 1, 0) for k, (i, j) in enumerate(MONOMIALS) if j)
        return ds, dt

    def residuals(self) -> np.ndarray:
        A, b = tri_system(self.v, self.e, self.bary)
        return A @ self.coeffs - b


@lru_cache(maxsize=None)
def build_tri_weight(v: int, e: int) -> TriWeightPoly:
    """Minimum-norm (pseudoinverse) solution of the triangle constraint system.

    ``v``/``e`` are the largest vertex and edge valences of the triangle.
    """
    if not v >= e >= 1:
        raise ValueError(f"need v >= e >= 1, got v={v}, e={e}")
    A, b = tri_system(v, e)
    c = np.linalg.pinv(A, rcond=PINV_RCOND) @ b
    # canonical form: exactly symmetric, exact structural zeros
    sym = np.zeros(NCOEF)
    for (i, j), k in MONO_INDEX.items():
        sym[k] = 0.5 * (c[k] + c[MONO_INDEX[(j, i)]])
    unique = compress(sym)
    return TriWeightPoly(unique, int(v), int(e), barycenter_target(v, e))


def _newton_interior(c, s, t, iters=30):
    """Polish a critical point of the polynomial with Newton steps; None if it leaves the domain."""
    h = 1e-7
    for _ in range(iters):
        _, gs, gt = tri_poly_eval(c, s, t)
        _, gsp, gtp = tri_poly_eval(c, s + h, t)
        _, gsq, gtq = tri_poly_eval(c, s, t + h)
        H = np.array([[gsp - gs, gsq - gs], [gtp - gt, gtq - gt]]) / h
        try:
            step = np.linalg.solve(H, [-gs, -gt])
        except np.linalg.LinAlgError:
            return None
        s, t = s + step[0], t + step[1]
        if np.hypot(*step) < 1e-14:
            break
    if not (s >= 0 and t >= 0 and s + t <= 1):
        return None
    return float(s), float(t)


@lru_cache(maxsize=None)
def tri_extrema(v: int, e: int) -> tuple[float, float]:
    """(min, max) of the triangle weight over the closed barycentric domain."""
    poly = build_tri_weight(v, e)
    P = np.polynomial.polynomial
    c = poly.coeffs
    cand = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)]
    # restrictions to the three sides are univariate polynomials in x
    sides = (
        (np.array([0.0, 1.0]), np.array([0.0])),  # (x, 0)
        (np.array([0.0]), np.array([0.0, 1.0])),  # (0, x)
        (np.array([0.0, 1.0]), np.array([1.0, -1.0])),  # (x, 1 - x)
    )
    for ps, pt in sides:
        poly1 = np.zeros(1)
        for k, (i, j) in enumerate(MONOMIALS):
            poly1 = P.polyadd(poly1, c[k] * P.polymul(P.polypow(ps, i), P.polypow(pt, j)))
        for r in np.roots(P.polyder(poly1)[::-1]) if len(poly1) > 1 else []:
            if abs(r.imag) < 1e-9 and 0.0 <= r.real <= 1.0:
                x = r.real
                cand.append((float(P.polyval(x, ps)), float(P.polyval(x, pt))))
    n = 120
    g = np.linspace(0.0, 1.0, n + 1)
    S, T = np.meshgrid(g, g, indexing="ij")
    inside = S + T <= 1.0 + 1e-12
    W = np.where(inside, poly(S, T), np.nan)
    core = W[1:-1, 1:-1]
    nbrs = np.stack([W[1 + di : n + di, 1 + dj : n + dj] for di in (-1, 0, 1) for dj in (-1, 0, 1)])
    ok = ~np.isnan(nbrs).any(axis=0)
    nbrs = np.where(ok, nbrs, 0.0)
    for is_min in (True, False):
        ext = ok & (core == (nbrs.min(axis=0) if is_min else nbrs.max(axis=0)))
        ii, jj = np.nonzero(ext)
        order = np.argsort(core[ii, jj] if is_min else -core[ii, jj])[:8]
        for i, j in zip(ii[order] + 1, jj[order] + 1):
            polished = _newton_interior(c, S[i, j], T[i, j])
            cand.append(polished or (S[i, j], T[i, j]))
    cs = np.array(cand)
    vals = np.concatenate([poly(cs[:, 0], cs[:, 1]), W[inside]])
    return float(vals.min()), float(vals.max())


# ---------------------------------------------------------------------------
# weight sets


@dataclass(frozen=True, eq=False)
class WeightSet:
    """Weights of one data mesh.

    ``coeffs`` is (F, 36): edges use the first 5 entries as quartic
    coefficients, triangles the full monomial layout, points are unused.
    ``bary_grads`` holds the unscaled world-space gradients of the barycentric
    coordinates of each primitive.  ``A`` makes every A * w~ >= 1;
    ``far_base`` >= A bounds every A * w~ from above and is the far-field
    weight before attenuation.
    """

    kinds: np.ndarray
    coeffs: np.ndarray
    bary_grads: np.ndarray
    A: float
    far_base: float
    valence_A: float

    def attenuation(self, alpha, alpha_u) -> float:
        return alpha / max(alpha, alpha_u)

    def max_weight(self, alpha, alpha_u) -> float:
        return self.far_base ** self.attenuation(alpha, alpha_u)

    def poly(self, i):
        k = self.kinds[i]
        if k == EDGE:
            return self.coeffs[i, :5]
        if k == TRIANGLE:
            return self.coeffs[i]
        return None


def _bary_gradients(mesh: SimplexMesh) -> np.ndarray:
    out = np.zeros((len(mesh), 2, 3))
    v, s, k = mesh.vertices, mesh.simplices, mesh.kinds
    e = np.flatnonzero(k == EDGE)
    d = v[s[e, 1]] - v[s[e, 0]]
    out[e, 0] = d / np.sum(d * d, axis=1)[:, None]
    t = np.flatnonzero(k == TRIANGLE)
    v0, v1, v2 = v[s[t, 0]], v[s[t, 1]], v[s[t, 2]]
    cr = np.cross(v1 - v0, v2 - v0)
    twice_area = np.linalg.norm(cr, axis=1)
    n = cr / twice_area[:, None]
    # in-plane 90 degree rotation: x_perp = n x x
    out[t, 0] = np.cross(n, v0 - v2) / twice_area[:, None]
    out[t, 1] = np.cross(n, v1 - v0) / twice_area[:, None]
    return out


def build_weights(mesh: SimplexMesh, adjacency: Adjacency | None = None, unit=False) -> WeightSet:
    """Build the weight set of ``mesh``; ``unit=True`` gives every primitive weight 1."""
    F = len(mesh)
    coeffs = np.zeros((F, NCOEF))
    kinds = np.array(mesh.kinds, dtype=np.int64)
    grads = _bary_gradients(mesh)
    if unit:
        coeffs[kinds == EDGE, 0] = 1.0
        coeffs[kinds == TRIANGLE, 0] = 1.0
        return WeightSet(kinds, coeffs, grads, 1.0, 1.0, 1.0)

    adj = adjacency or compute_adjacency(mesh)
    vval = adj.vertex_valence
    A = 1.0
    valence_A = 1.0
    far = 1.0
    lows, highs = [], []
    for i, (s, k) in enumerate(zip(mesh.simplices.tolist(), kinds.tolist())):
        if k == POINT:
            continue
        if k == EDGE:
            n0, n1 = int(vval[s[0]]), int(vval[s[1]])
            coeffs[i, :5] = build_edge_weight(n0, n1).coeffs
            lo, hi = edge_extrema(n0, n1)
            valence_A = max(valence_A, n0, n1)
        else:
            v = int(max(vval[s[0]], vval[s[1]], vval[s[2]]))
            e = int(max(adj.valence_of_edge(s[0], s[1]), adj.valence_of_edge(s[1], s[2]), adj.valence_of_edge(s[2], s[0])))
            coeffs[i] = build_tri_weight(v, e).coeffs
            lo, hi = tri_extrema(v, e)
            valence_A = max(valence_A, v)
        if lo <= 0.0:
            raise ValueError(f"weight polynomial of simplex {i} is not positive (min {lo:g})")
        lows.append(lo)
        highs.append(hi)
    if lows:
        A = max(valence_A, 1.0 / min(lows))
        far = max(A, A * max(highs))
    return WeightSet(kinds, coeffs, grads, float(A), float(far), float(valence_A))


# ---------------------------------------------------------------------------
# evaluation kernels


@njit(cache=True, inline="always")
def tri_poly_eval(c, s, t):
    """Value and (d/ds, d/dt) of the degree-7 polynomial with coefficients ``c``."""
    w = 0.0
    ws = 0.0
    wt = 0.0
    off = 36
    for j in range(7, -1, -1):
        n = 8 - j
        off -= n
        # P_j(s) by Horner
        p = 0.0
        dp = 0.0
        for i in range(n - 1, -1, -1):
            dp = dp * s + p
            p = p * s + c[off + i]
        wt = wt * t + w
        w = w * t + p
        ws = ws * t + dp
    return w, ws, wt


@njit(cache=True, inline="always")
def edge_poly_eval(c, t):
    p = 0.0
    dp = 0.0
    for i in range(4, -1, -1):
        dp = dp * t + p
        p = p * t + c[i]
    return p, dp


@njit(cache=True, inline="always")
def weight_dphi(kind, coeffs, A, S, phi1, phi2):
    """Attenuated weight (A w~)^S and its partial derivatives in (phi1, phi2)."""
    if kind == 0:
        return 1.0, 0.0, 0.0
    if kind == 1:
        wt, d1 = edge_poly_eval(coeffs, phi1)
        d2 = 0.0
    else:
        wt, d1, d2 = tri_poly_eval(coeffs, phi1, phi2)
    base = A * wt
    if S == 1.0:
        return base, A * d1, A * d2
    w = base**S
    fac = S * A * w / base
    return w, fac * d1, fac * d2


@njit(cache=True, inline="always")
def weighted_exp(kind, coeffs, A, S, alpha, d, phi1, phi2):
    """w * exp(-alpha d) and exp(-alpha d) * dw/dphi, with one exp and one log.

    Returns (we, e1, e2).
    """
    if kind == 0:
        return np.exp(-alpha * d), 0.0, 0.0
    if kind == 1:
        wt, d1 = edge_poly_eval(coeffs, phi1)
        d2 = 0.0
    else:
        wt, d1, d2 = tri_poly_eval(coeffs, phi1, phi2)
    base = A * wt
    if S == 1.0:
        e = np.exp(-alpha * d)
        return base * e, A * d1 * e, A * d2 * e
    we = np.exp(S * np.log(base) - alpha * d)
    fac = S * A * we / base
    return we, fac * d1, fac * d2


@njit(cache=True, inline="always")
def weight_and_gradient(kind, coeffs, bgrad, A, S, alpha, metric_scaled, phi1, phi2):
    """Attenuated weight (A w~)^S and its world-space gradient (identity projection Jacobian).

    Returns (w, gx, gy, gz).
    """
    w, d1, d2 = weight_dphi(kind, coeffs, A, S, phi1, phi2)
    fac = 1.0 / alpha if metric_scaled else 1.0
    d1 *= fac
    d2 *= fac
    gx = d1 * bgrad[0, 0] + d2 * bgrad[1, 0]
    gy = d1 * bgrad[0, 1] + d2 * bgrad[1, 1]
    gz = d1 * bgrad[0, 2] + d2 * bgrad[1, 2]
    return w, gx, gy, gz


def evaluate_weight(weights: WeightSet, i: int, phi, alpha, alpha_u) -> tuple[float, np.ndarray]:
    """Attenuated weight of primitive ``i`` at barycentrics ``phi`` and its derivative in ``phi``."""
    k = weights.kinds[i]
    if k == POINT:
        return 1.0, np.zeros(0)
    S = weights.attenuation(alpha, alpha_u)
    phi = np.asarray(phi, dtype=float)
    if k == EDGE:
        wt, d1 = edge_poly_eval(weights.coeffs[i], float(phi[0]))
        dphi = np.array([d1])
    else:
        wt, d1, d2 = tri_poly_eval(weights.coeffs[i], float(phi[0]), float(phi[1]))
        dphi = np.array([d1, d2])
    base = weights.A * wt
    w = base**S
    return float(w), S * base ** (S - 1.0) * weights.A * dphi


def weight_gradient_world(weights: WeightSet, i: int, phi, alpha, alpha_u, metric_scaled=True) -> np.ndarray:
    """World-space gradient of the attenuated weight, treating the projection Jacobian as identity."""
    phi = np.zeros(2) if weights.kinds[i] == POINT else np.asarray(phi, dtype=float)
    phi2 = float(phi[1]) if len(phi) > 1 else 0.0
    S = weights.attenuation(alpha, alpha_u)
    _, gx, gy, gz = weight_and_gradient(
        int(weights.kinds[i]), weights.coeffs[i], weights.bary_grads[i], weights.A, S, alpha, metric_scaled, float(phi[0]), phi2
    )
    return np.array([gx, gy, gz])


# ---------------------------------------------------------------------------
# binary cache

_MAGIC = b"SMDW"
_VERSION = 1


def save_weights(weights: WeightSet, path):
    F = len(weights.kinds)
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<IQddd", _VERSION, F, weights.A, weights.far_base, weights.valence_A))
        fh.write(weights.kinds.astype("<i8").tobytes())
        fh.write(weights.coeffs.astype("<f8").tobytes())
        fh.write(weights.bary_grads.astype("<f8").tobytes())


def load_weights(path) -> WeightSet:
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValueError("not a weight cache file")
        version, F, A, far, vA = struct.unpack("<IQddd", fh.read(struct.calcsize("<IQddd")))
        if version != _VERSION:
            raise ValueError(f"unsupported weight cache version {version}")
        kinds = np.frombuffer(fh.read(8 * F), dtype="<i8").astype(np.int64)
        coeffs = np.frombuffer(fh.read(8 * F * NCOEF), dtype="<f8").reshape(F, NCOEF).copy()
        grads = np.frombuffer(fh.read(8 * F * 6), dtype="<f8").reshape(F, 2, 3).copy()
    return WeightSet(kinds, coeffs, grads, A, far, vA)
