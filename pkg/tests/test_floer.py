import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from loopfloer import floer as fl
from loopfloer import heatflow as hf
from loopfloer import stencils
from loopfloer.critical import SamplingPlan, enumerate_orbits
from loopfloer.errors import InjectivityRadiusExceeded, PreconditionFailed
from loopfloer.heatflow import Cylinder
from loopfloer.loops import cosine_potential, wobble_potential

C = 0.01


@pytest.fixture(scope="module")
def wobble():
    P = wobble_potential(C, 0.005)
    low, high = enumerate_orbits(P, 1.0, SamplingPlan(n_nodes=16, lattice=8))
    cyl = hf.enumerate_M0(high, low, P)[0]
    return hf.project_to_moduli(cyl, P).cylinder, P, high.action - low.action


@pytest.fixture(scope="module")
def lifts(wobble):
    u, P, _ = wobble
    return {eps: fl.newton_picard_lift(u, eps, P) for eps in (0.1, 0.05)}


def bump_field(u, rng, scale=1e-3):
    env = np.exp(-(u.s / 5.0) ** 2)[:, None, None]
    t = np.arange(u.n_t) / u.n_t
    xi = scale * env * (rng.standard_normal() + np.cos(2 * np.pi * t))[None, :, None]
    eta = scale * env * (rng.standard_normal() + np.sin(2 * np.pi * t))[None, :, None]
    xi[[0, -1]] = 0.0
    eta[[0, -1]] = 0.0
    return fl.PairField(xi, eta)


def test_matrix_matches_operator(wobble):
    u, P, _ = wobble
    rng = np.random.default_rng(0)
    z = fl.PairField(*rng.standard_normal((2,) + u.coords.shape))
    z.xi[[0, -1]] = 0.0
    z.eta[[0, -1]] = 0.0
    eps = 0.1
    vec = np.concatenate([z.xi[1:-1].reshape(u.n_s - 2, -1), z.eta[1:-1].reshape(u.n_s - 2, -1)], axis=1)
    out = fl.d_eps_matrix(u, eps, P) @ vec.reshape(-1)
    ref = fl.apply_D_eps(u, None, z, eps, P)
    ref_vec = np.concatenate([ref.xi[1:-1].reshape(u.n_s - 2, -1), ref.eta[1:-1].reshape(u.n_s - 2, -1)], axis=1)
    np.testing.assert_allclose(out, ref_vec.reshape(-1), atol=1e-8 * np.abs(ref_vec).max())


@pytest.mark.parametrize("eps", [0.2, 0.1, 0.05, 0.025])
def test_adjoint_consistency(wobble, eps):
    u, P, _ = wobble
    rng = np.random.default_rng(1)
    a = fl.PairField(*rng.standard_normal((2,) + u.coords.shape))
    b = fl.PairField(*rng.standard_normal((2,) + u.coords.shape))
    for f in (a.xi, a.eta, b.xi, b.eta):
        f[[0, -1]] = 0.0
    lhs = fl.pairing_eps(u, fl.apply_D_eps(u, None, a, eps, P), b, eps)
    rhs = fl.pairing_eps(u, a, fl.apply_D_eps_adjoint(u, None, b, eps, P), eps)
    assert abs(lhs - rhs) < 1e-8 * max(1.0, abs(lhs))


def test_linearization_matches_finite_differences(wobble):
    u, P, _ = wobble
    eps = 0.1
    v0 = stencils.dplus_points(u.coords)
    z = bump_field(u, np.random.default_rng(2), 1.0)
    h = 1e-6
    plus = fl.pullback_F(u, v0, z.scaled(h), eps, P)
    minus = fl.pullback_F(u, v0, z.scaled(-h), eps, P)
    lin = fl.apply_D_eps(u, v0, z, eps, P)
    np.testing.assert_allclose((plus.xi - minus.xi) / (2 * h), lin.xi, atol=1e-6)
    np.testing.assert_allclose((plus.eta - minus.eta) / (2 * h) * eps ** 2, lin.eta * eps ** 2, atol=1e-6)


def test_pullback_rejects_large_xi(wobble):
    u, P, _ = wobble
    z = fl.PairField(np.full(u.coords.shape, 0.6), np.zeros(u.coords.shape))
    with pytest.raises(InjectivityRadiusExceeded):
        fl.pullback_F(u, stencils.dplus_points(u.coords), z, 0.1, P)


def test_lifts_are_exact_with_correct_energy(lifts, wobble):
    _, P, drop = wobble
    for eps, res in lifts.items():
        assert res.pair.exact
        assert res.residual_history[-1] < 1e-9
        assert abs(fl.energy_eps(res.pair, P) - drop) <= 1e-5
        # chord iteration contracts
        assert all(b < a for a, b in zip(res.residual_history, res.residual_history[1:]))


def test_lift_correction_shrinks_like_eps_squared(lifts):
    a, b = lifts[0.1].triple_norm, lifts[0.05].triple_norm
    assert np.log(a / b) / np.log(2.0) >= 1.8


def test_lift_rejects_large_eps(wobble):
    u, P, _ = wobble
    with pytest.raises(PreconditionFailed):
        fl.newton_picard_lift(u, 0.5, P)


def test_lift_is_shift_equivariant(wobble):
    u, P, _ = wobble
    eps = 0.1
    sigma = 0.5
    direct = fl.newton_picard_lift(hf.shift_cylinder(u, sigma), eps, P)
    shifted = hf.shift_cylinder(fl.newton_picard_lift(u, eps, P).pair.u, sigma)
    inner = slice(40, -40)
    np.testing.assert_allclose(direct.pair.u.coords[inner], shifted.coords[inner], atol=1e-6)


def test_rescaling_identity(lifts):
    w = lifts[0.1].pair
    eps = w.eps
    # the same values on the grid s / eps solve the equations for J_eps
    slow = Cylinder(w.u.backend, w.u.coords, w.u.s / eps, w.u.endpoints)
    P = wobble_potential(C, 0.005)
    res = fl.floer_residual_unscaled(slow, w.v, eps, P)
    assert max(np.abs(res.xi).max(), np.abs(res.eta).max()) < 1e-6
    back = fl.rescale_s(slow, w.v, eps)
    res2 = fl.floer_residual(back, P)
    assert max(np.abs(res2.xi).max(), eps ** 2 * np.abs(res2.eta).max()) < 1e-6


def test_time_independent_cylinder_lifts_without_iterations():
    P = cosine_potential(C)
    low, high = enumerate_orbits(P, 1.0, SamplingPlan(n_nodes=16, lattice=8))
    cyl = hf.enumerate_M0(high, low, P)[0]
    res = fl.newton_picard_lift(cyl, 0.1, P)
    assert res.iterations == 0
    assert res.triple_norm == 0.0


def test_count_and_distinctness():
    P = cosine_potential(C)
    low, high = enumerate_orbits(P, 1.0, SamplingPlan(n_nodes=16, lattice=8))
    res = fl.enumerate_M_eps(high, low, 0.1, P)
    assert len(res.lifts) == len(res.cylinders) == 2
    assert res.distinct
    assert all(res.uniqueness)


def test_time_shift_recovery(wobble):
    u, P, _ = wobble
    eps = 0.1
    base = fl.newton_picard_lift(u, eps, P)
    lifted = fl.newton_picard_lift(hf.shift_cylinder(base.base, 0.07), eps, P)
    fit = fl.fit_time_shift(base.base, lifted.pair, eps, P, setup=base.setup)
    assert fit.sigma == pytest.approx(0.07, abs=1e-4)
    assert fit.slope_min > 0


@given(st.integers(8, 64).filter(lambda n: n & (n - 1) == 0), st.floats(0.01, 0.25), st.integers(0, 1000))
def test_pi_eps_inverts_the_loop_operator(n, eps, seed):
    rng = np.random.default_rng(seed)
    xi, eta = rng.standard_normal((2, n, 1))
    out = fl.pi_eps(None, xi, eta, eps)
    np.testing.assert_allclose(out - eps * stencils.laplacian(out), xi - eps ** 2 * stencils.dminus(eta), atol=1e-8)


def test_pi_eps_fixes_constants():
    xi = np.full(16, 0.3)
    np.testing.assert_allclose(fl.pi_eps(None, xi, np.zeros(16), 0.1), xi)


def test_norms_scale_homogeneously(wobble):
    u, _, _ = wobble
    z = bump_field(u, np.random.default_rng(5))
    n1 = fl.eps_norms(u, z, 2.0, 0.1)
    n2 = fl.eps_norms(u, z.scaled(3.0), 2.0, 0.1)
    for a, b in ((n1.zero, n2.zero), (n1.one, n2.one), (n1.triple, n2.triple)):
        assert b == pytest.approx(3 * a)
    assert fl.norm_0(u, z, 2.0, 0.1) == pytest.approx(n1.zero)
    with pytest.raises(ValueError):
        fl.eps_norms(u, z, 1.0, 0.1)


def test_quadratic_remainders(wobble):
    u, P, _ = wobble
    eps = 0.1
    v0 = stencils.dplus_points(u.coords)
    rng = np.random.default_rng(6)
    zero = fl.PairField.zeros_like(u)
    z = bump_field(u, rng, 1e-2)
    Z = bump_field(u, rng, 1e-2)
    rep0 = fl.quadratic_remainder_measure(u, v0, Z, zero, eps, 2.0, P)
    assert rep0.first == 0.0 and rep0.second == 0.0
    assert fl.quadratic_remainder_measure(u, v0, zero, z, eps, 2.0, P).second == 0.0
    full = fl.quadratic_remainder_measure(u, v0, Z, z, eps, 2.0, P)
    half = fl.quadratic_remainder_measure(u, v0, Z, z.scaled(0.5), eps, 2.0, P)
    assert 3.5 <= full.first / half.first <= 4.5
    assert np.isfinite(full.first_ratio) and np.isfinite(full.second_ratio)
