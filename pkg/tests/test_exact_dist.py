import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import point_simplex, sampled_pair_distance
from smoothdist.exact_dist import exact_min_distance, simplex_distance
from smoothdist.mesh import SimplexMesh
from smoothdist.shapes import random_mixed_mesh, random_query, random_triangle


def random_simplex(rng, n, center=None, size=1.0):
    center = rng.normal(size=3) if center is None else center
    if n == 2:
        return random_triangle(rng, center, size)
    while True:
        v = center + size * rng.normal(size=(n + 1, 3))
        if n == 0 or np.linalg.norm(v[1] - v[0]) > 1e-2:
            return v


seeds = st.integers(0, 2**32 - 1)


def test_point_point():
    r = simplex_distance([[0, 0, 0]], [[3, 4, 0]])
    assert r.d == 5.0
    np.testing.assert_allclose(r.grad, [3 / 5, 4 / 5, 0])


def test_point_point_sign_convention():
    # grad is w.r.t. translating the query, pointing away from the data
    r = simplex_distance([[3, 4, 0]], [[0, 0, 0]])
    np.testing.assert_allclose(r.grad, [-3 / 5, -4 / 5, 0])


def test_point_edge_endpoint_clamp():
    r = simplex_distance([[0, 0, 0], [1, 0, 0]], [[2, 1, 0]])
    assert r.d == pytest.approx(np.sqrt(2))
    assert r.phi[0] == 1.0
    np.testing.assert_allclose(r.point_f, [1, 0, 0])


def test_zero_distance_zero_gradient():
    r = simplex_distance([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0.2, 0.2, 0]])
    assert r.d == 0.0
    np.testing.assert_array_equal(r.grad, 0.0)


def test_degenerate_rejected():
    with pytest.raises(ValueError):
        simplex_distance([[0, 0, 0], [0, 0, 0]], [[1, 1, 1]])
    with pytest.raises(ValueError):
        simplex_distance([[0, 0, 0], [1, 0, 0], [2, 0, 0]], [[1, 1, 1]])


@pytest.mark.parametrize("nf,ng", [(2, 1), (1, 2), (2, 2)])
def test_pairs_match_sampling_oracle(rng, nf, ng):
    for _ in range(4 if ng + nf < 4 else 2):
        f = random_simplex(rng, nf)
        g = random_simplex(rng, ng, center=rng.normal(size=3) * 0.7, size=0.6)
        exact = simplex_distance(f, g).d
        sampled = sampled_pair_distance(f, g, res=50 if nf + ng < 4 else 36)
        assert sampled >= exact - 1e-12
        assert sampled - exact < 1e-4


@given(seeds, st.integers(0, 2), st.integers(0, 2))
def test_symmetry(seed, nf, ng):
    rng = np.random.default_rng(seed)
    f, g = random_simplex(rng, nf), random_simplex(rng, ng)
    assert simplex_distance(f, g).d == pytest.approx(simplex_distance(g, f).d, rel=1e-6, abs=1e-12)


@given(seeds, st.integers(0, 2), st.integers(0, 2))
def test_qp_matches_closed_form(seed, nf, ng):
    rng = np.random.default_rng(seed)
    f, g = random_simplex(rng, nf), random_simplex(rng, ng)
    a = simplex_distance(f, g).d
    b = simplex_distance(f, g, method="qp").d
    assert b == pytest.approx(a, rel=1e-6, abs=1e-9)


@given(seeds, st.integers(0, 2), st.integers(0, 2))
def test_closest_point_consistency(seed, nf, ng):
    rng = np.random.default_rng(seed)
    f, g = random_simplex(rng, nf), random_simplex(rng, ng)
    r = simplex_distance(f, g)
    assert np.linalg.norm(r.point_f - r.point_g) == pytest.approx(r.d, rel=1e-6, abs=1e-12)
    for phi, v in ((r.phi, f), (r.lam, g)):
        assert np.all(phi >= 0) and np.all(phi <= 1) and phi.sum() <= 1 + 1e-12
    # barycentrics reproduce the closest points
    np.testing.assert_allclose(f[0] + r.phi @ (f[1:] - f[0]), r.point_f, atol=1e-9)
    np.testing.assert_allclose(g[0] + r.lam @ (g[1:] - g[0]), r.point_g, atol=1e-9)
    if r.d > 0:
        assert np.linalg.norm(r.grad) == pytest.approx(1.0)


@given(seeds, st.integers(0, 2), st.integers(0, 2))
def test_gradient_matches_finite_difference(seed, nf, ng):
    rng = np.random.default_rng(seed)
    f = random_simplex(rng, nf)
    g = random_simplex(rng, ng, center=rng.normal(size=3) * 2, size=0.5)
    r = simplex_distance(f, g)
    if r.d < 1e-3:
        return
    h = 1e-6
    fd = np.array([(simplex_distance(f, g + h * e).d - simplex_distance(f, g - h * e).d) / (2 * h) for e in np.eye(3)])
    assert np.linalg.norm(fd - r.grad) <= 1e-4 * np.linalg.norm(fd) + 1e-7


@given(seeds)
def test_point_queries_match_region_oracle(seed):
    rng = np.random.default_rng(seed)
    for n in (0, 1, 2):
        f = random_simplex(rng, n)
        q = rng.normal(size=3) * 2
        d, phi = point_simplex(q, f)
        r = simplex_distance(f, q[None])
        assert r.d == pytest.approx(d, rel=1e-9, abs=1e-12)


def test_min_distance_two_points():
    m = SimplexMesh.point_cloud([[1, 0, 0], [0, 2, 0]])
    assert exact_min_distance(m, [[0, 0, 0]]) == (1.0, 0)


def test_min_distance_on_vertex():
    m = SimplexMesh.from_lists(np.eye(3), triangles=[[0, 1, 2]])
    assert exact_min_distance(m, [[1, 0, 0]])[0] == 0.0


def test_min_distance_empty():
    with pytest.raises(ValueError):
        exact_min_distance(SimplexMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64)), [[0, 0, 0]])


@given(seeds, st.integers(0, 2))
def test_min_distance_is_minimum_over_pairs(seed, kind):
    rng = np.random.default_rng(seed)
    m = random_mixed_mesh(rng, n_prims=int(rng.integers(1, 30)))
    g = random_query(rng, kind)
    d, i = exact_min_distance(m, g)
    each = [simplex_distance(m.simplex_vertices(j), g).d for j in range(len(m))]
    assert d == pytest.approx(min(each), abs=1e-12)
    assert each[i] == pytest.approx(d, abs=1e-12)
