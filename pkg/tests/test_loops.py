import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from loopfloer.geometry import FlatTorus, Sphere2
from loopfloer.loops import (ArchetypalPerturbation, DiscreteLoop, LoopField, SmoothCutoff, SphereLinearPotential,
                             ZeroPerturbation, axiom_probe, central_velocity, classical_action, constant_loop,
                             cosine_potential, hess_V, l2_inner, lp_norm, moving_cosine_potential, symplectic_action,
                             velocity, winding_loop, wobble_potential)


def random_torus_loop(rng, n=32, dim=1, winding=0):
    t = np.arange(n) / n
    w = np.broadcast_to(np.asarray(winding, dtype=float), (dim,))
    return DiscreteLoop(FlatTorus(dim), rng.uniform(0, 1, dim) + np.outer(t, w) + 0.05 * rng.standard_normal((n, dim)))


def random_sphere_loop(rng, n=32):
    t = np.arange(n) / n
    base = np.stack([np.cos(2 * np.pi * t), np.sin(2 * np.pi * t), 0.3 + 0 * t], axis=1)
    return DiscreteLoop(Sphere2(), base + 0.05 * rng.standard_normal((n, 3)))


def fd_gradient_check(P, x, rng, h=1e-6):
    """Directional derivative of the functional against the L2 pairing with the gradient."""
    xi = x.backend.project(x.coords, rng.standard_normal(x.coords.shape))
    plus = x.with_coords(x.backend.exp(x.coords, h * xi))
    minus = x.with_coords(x.backend.exp(x.coords, -h * xi))
    fd = (P.functional(plus) - P.functional(minus)) / (2 * h)
    return fd, l2_inner(P.gradient(x), xi)


def perturbations(rng):
    x1 = random_torus_loop(rng)
    x2 = random_torus_loop(rng, dim=2)
    xs = random_sphere_loop(rng)
    arch = ArchetypalPerturbation(cosine_potential(0.3), x1.with_coords(x1.coords + 0.1), SmoothCutoff(0.0, 0.1))
    return [
        (cosine_potential(0.3), x1),
        (moving_cosine_potential(0.2), x1),
        (wobble_potential(0.1, 0.05), x1),
        (cosine_potential(0.2, dim=2), x2),
        (SphereLinearPotential([0.1, 0.2, 0.3], [0.0, 0.1, 0.0]), xs),
        (arch, x1),
    ]


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(0)
    for P, x in perturbations(rng):
        fd, exact = fd_gradient_check(P, x, rng)
        assert fd == pytest.approx(exact, rel=1e-6, abs=1e-9), P.describe()


def test_hessians_match_finite_differences_of_gradient():
    rng = np.random.default_rng(1)
    h = 1e-6
    for P, x in perturbations(rng):
        if not x.backend.flat:
            continue
        xi = rng.standard_normal(x.coords.shape)
        g_plus = P.gradient(x.with_coords(x.coords + h * xi))
        g_minus = P.gradient(x.with_coords(x.coords - h * xi))
        fd = (g_plus - g_minus) / (2 * h)
        np.testing.assert_allclose(P.hessian_apply(x, xi), fd, atol=1e-7)
        dense = P.hessian_dense(x) @ xi.reshape(-1)
        np.testing.assert_allclose(dense, fd.reshape(-1), atol=1e-7)
        np.testing.assert_allclose(hess_V(x, LoopField(x, xi), P).vectors, fd, atol=1e-7)


def test_hessian_is_symmetric_in_l2():
    rng = np.random.default_rng(2)
    for P, x in perturbations(rng):
        if not x.backend.flat:
            continue
        a, b = rng.standard_normal((2,) + x.coords.shape)
        assert l2_inner(P.hessian_apply(x, a), b) == pytest.approx(l2_inner(a, P.hessian_apply(x, b)), abs=1e-12)


def test_winding_is_recovered_from_reduced_angles():
    x = winding_loop(FlatTorus(2), [1, -2], [0.25, 0.5], n=16)
    reduced = DiscreteLoop(FlatTorus(2), x.nodes)
    assert reduced.component == (1, -2)
    np.testing.assert_allclose(reduced.shifted(16) - reduced.coords, np.tile([1.0, -2.0], (16, 1)))


def test_loop_validation():
    with pytest.raises(ValueError):
        DiscreteLoop(FlatTorus(1), np.zeros(12))
    with pytest.raises(ValueError):
        DiscreteLoop(FlatTorus(2), np.zeros((16, 1)))
    x = constant_loop(FlatTorus(1), [0.2], n=8)
    with pytest.raises(ValueError):
        LoopField(x, np.zeros((4, 1)))


def test_actions_of_simple_loops():
    zero = ZeroPerturbation()
    x = winding_loop(FlatTorus(1), [3], [0.0], n=32)
    assert classical_action(x, zero) == pytest.approx(4.5)
    np.testing.assert_allclose(central_velocity(x), 3.0)
    # symplectic action is maximized at y = xdot where it equals the classical action
    y = velocity(x)
    assert symplectic_action(x, y, zero) == pytest.approx(classical_action(x, zero))
    assert symplectic_action(x, y + 0.1, zero) < classical_action(x, zero)
    c = constant_loop(FlatTorus(1), [0.0], n=32)
    assert classical_action(c, cosine_potential(0.01)) == pytest.approx(-0.01)


@given(st.integers(1, 6), st.floats(1.0, 8.0))
def test_lp_norm_of_constant(m, p):
    v = np.full((16, m), 0.5)
    assert lp_norm(v, p) == pytest.approx(0.5 * np.sqrt(m))
    assert lp_norm(v, np.inf) == pytest.approx(0.5 * np.sqrt(m))


def test_smooth_cutoff_values_and_derivatives():
    cut = SmoothCutoff(0.05, 0.1)
    r = np.linspace(0.0, 0.15, 301)
    rho, d1, d2 = cut(r)
    assert np.all(rho[r <= 0.05] == 1.0)
    assert np.all(rho[r >= 0.1] == 0.0)
    assert np.all(np.diff(rho) <= 1e-15)
    h = 1e-6
    mid = np.linspace(0.055, 0.095, 9)
    d1 = cut(mid)[1]
    np.testing.assert_allclose(d1, (cut(mid + h)[0] - cut(mid - h)[0]) / (2 * h), rtol=1e-5)
    np.testing.assert_allclose(cut(mid)[2], (cut(mid + h)[1] - cut(mid - h)[1]) / (2 * h), rtol=1e-4, atol=1e-3)
    assert np.all(d1 <= 0)
    with pytest.raises(ValueError):
        SmoothCutoff(0.1, 0.05)


def test_axiom_probe_ratios_are_finite_and_bounded():
    rng = np.random.default_rng(3)
    s = np.linspace(-1, 1, 21)
    coords = (np.arange(32) / 32)[None, :, None] + 0.1 * np.tanh(s)[:, None, None] + 0.01 * rng.standard_normal((21, 32, 1))
    rep = axiom_probe(cosine_potential(0.05), [(FlatTorus(1), coords, s[1] - s[0])])
    assert rep.n_points > 0
    assert 0 < rep.s_ratio < 10 and 0 < rep.t_ratio < 10
