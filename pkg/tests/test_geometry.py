import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from loopfloer.errors import BaseMismatch
from loopfloer.geometry import (FlatTorus, ManifoldPoint, Sphere2, TangentVector, curvature, exp_map, geodesic_maps,
                                make_backend, metric_inner, parallel_transport, wrap_diff)

coords = st.floats(-3, 3, allow_nan=False)
vec3 = st.tuples(coords, coords, coords).map(np.array)
small3 = st.tuples(*[st.floats(-1.2, 1.2)] * 3).map(np.array)


def sphere_point(x):
    if np.linalg.norm(x) < 1e-3:
        x = x + np.array([0.0, 0.0, 1.0])
    return Sphere2().reduce(x)


def test_make_backend():
    assert make_backend("torus2") == FlatTorus(2)
    assert make_backend("sphere2") == Sphere2()
    with pytest.raises(ValueError):
        make_backend("klein")


@given(st.floats(-10, 10))
def test_wrap_diff_range(d):
    w = wrap_diff(d)
    assert -0.5 <= w <= 0.5
    assert abs((d - w) - round(d - w)) < 1e-9


def test_torus_exp_log_roundtrip():
    T = FlatTorus(2)
    p = np.array([0.9, 0.1])
    v = np.array([0.3, -0.25])
    q = T.reduce(T.exp(p, v))
    np.testing.assert_allclose(T.log(p, q), v, atol=1e-14)
    assert T.dist(p, q) == pytest.approx(np.linalg.norm(v))


@given(vec3, small3)
def test_sphere_exp_stays_on_sphere_and_log_inverts(x, v):
    S = Sphere2()
    p = sphere_point(x)
    v = S.project(p, v)
    q = S.exp(p, v)
    assert np.linalg.norm(q) == pytest.approx(1.0, abs=1e-12)
    if np.linalg.norm(v) < np.pi - 0.1:
        np.testing.assert_allclose(S.log(p, q), v, atol=1e-9)
        assert S.dist(p, q) == pytest.approx(np.linalg.norm(v), abs=1e-9)


@given(vec3, small3, small3)
def test_sphere_transport_is_isometric_and_tangent(x, v, w):
    S = Sphere2()
    p = sphere_point(x)
    v, w = S.project(p, v), S.project(p, w)
    q = S.exp(p, v)
    tw = S.transport(p, v, w)
    assert abs(np.dot(tw, q)) < 1e-10
    assert np.linalg.norm(tw) == pytest.approx(np.linalg.norm(w), abs=1e-10)
    # the geodesic velocity is transported to itself
    if np.linalg.norm(v) < 3.0:
        np.testing.assert_allclose(S.transport(p, v, v), -S.log(q, p), atol=1e-8)


@given(vec3, small3, small3, small3)
def test_sphere_curvature_symmetries(x, a, b, c):
    S = Sphere2()
    p = sphere_point(x)
    a, b, c = (S.project(p, z) for z in (a, b, c))
    r = S.curvature(p, a, b, c)
    np.testing.assert_allclose(r, -S.curvature(p, b, a, c), atol=1e-12)
    # first Bianchi identity
    tot = r + S.curvature(p, b, c, a) + S.curvature(p, c, a, b)
    np.testing.assert_allclose(tot, 0.0, atol=1e-12)
    # sectional curvature one
    area = np.dot(a, a) * np.dot(b, b) - np.dot(a, b) ** 2
    if area > 1e-6:
        assert np.dot(S.curvature(p, a, b, b), a) / area == pytest.approx(1.0, rel=1e-9)


def test_torus_is_flat():
    T = FlatTorus(3)
    a, b, c = np.eye(3)
    np.testing.assert_array_equal(T.curvature(np.zeros(3), a, b, c), 0.0)
    e1, e2 = T.geodesic_maps(np.zeros(3), a)
    np.testing.assert_array_equal(e1, np.eye(3))
    np.testing.assert_array_equal(e2, np.eye(3))


@pytest.mark.parametrize("theta", [0.0, 1e-13, 0.2, 1.0, 2.5])
def test_sphere_geodesic_maps_match_finite_differences(theta):
    S = Sphere2()
    p = ManifoldPoint(S, [0.3, -0.5, 0.8])
    basis = S.tangent_basis(p.coords)
    v = TangentVector(p, theta * (0.6 * basis[0] + 0.8 * basis[1]))
    e1, e2 = geodesic_maps(p, v)
    f1, f2 = geodesic_maps(p, v, method="fd")
    for e, f in ((e1, f1), (e2, f2)):
        for b in basis:
            np.testing.assert_allclose(e @ b, f @ b, atol=1e-7)


def test_value_types_check_base_points():
    S = Sphere2()
    p = ManifoldPoint(S, [0, 0, 2])
    q = ManifoldPoint(S, [1, 0, 0])
    a = TangentVector(p, [1, 0, 0])
    b = TangentVector(q, [0, 1, 0])
    np.testing.assert_allclose(p.coords, [0, 0, 1])
    assert metric_inner(p, a, a) == pytest.approx(1.0)
    with pytest.raises(BaseMismatch):
        metric_inner(p, a, b)
    with pytest.raises(BaseMismatch):
        _ = a + b
    r = exp_map(p, a * (np.pi / 2))
    assert r.same_as(q, tol=1e-12)
    w = parallel_transport(p, a * (np.pi / 2), TangentVector(p, [0, 1, 0]))
    np.testing.assert_allclose(w.components, [0, 1, 0], atol=1e-12)
    k = curvature(p, a, TangentVector(p, [0, 1, 0]), TangentVector(p, [0, 1, 0]))
    np.testing.assert_allclose(k.components, [1, 0, 0], atol=1e-12)


def test_manifold_point_rejects_wrong_length():
    with pytest.raises(ValueError):
        ManifoldPoint(FlatTorus(2), [0.1, 0.2, 0.3])
