import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from loopfloer import floer as fl
from loopfloer import heatflow as hf
from loopfloer import lab
from loopfloer.critical import SamplingPlan, enumerate_orbits
from loopfloer.loops import wobble_potential


@pytest.mark.parametrize("eps,r", [(0.25, 0.5), (0.0, 1.0), (1.0, 0.3)])
def test_parabolic_cylinder_volume(eps, r):
    s_lo, s_hi, t_lo, t_hi = lab.parabolic_cylinder(eps, r)
    assert (s_hi - s_lo) * (t_hi - t_lo) == pytest.approx(lab.parabolic_volume(eps, r))
    assert lab.parabolic_volume(eps, r) == pytest.approx(2 * r * (r * r + 2 * eps * r))


@pytest.mark.parametrize("eps,a", [(0.25, 0.0), (0.25, 1.0), (1.0, 0.0), (1.0, 1.0)])
def test_supersolution_defects_are_exact_and_nonnegative(eps, a):
    s_lo, s_hi, t_lo, t_hi = lab.parabolic_cylinder(eps, 1.0)
    s, t = np.meshgrid(np.linspace(s_lo, s_hi, 9), np.linspace(t_lo, t_hi, 9), indexing="ij")
    h = 1e-4
    for fam in lab.supersolution_family(eps, a):
        w = fam.w
        dss = (w(s + h, t) - 2 * w(s, t) + w(s - h, t)) / h ** 2
        dtt = (w(s, t + h) - 2 * w(s, t) + w(s, t - h)) / h ** 2
        ds = (w(s + h, t) - w(s - h, t)) / (2 * h)
        fd = eps ** 2 * dss + dtt - ds + a * w(s, t)
        np.testing.assert_allclose(fam.defect(s, t), fd, rtol=1e-4, atol=1e-4 * np.abs(w(s, t)).max(), err_msg=fam.name)
        assert np.all(fam.defect(s, t) >= -1e-12), fam.name
        assert np.all(w(s, t) >= 0), fam.name


@pytest.mark.parametrize("eps", [0.25, 1.0])
@pytest.mark.parametrize("r", [0.5, 1.0])
@pytest.mark.parametrize("a", [0.0, 1.0])
def test_mean_value_grid(eps, r, a):
    rep = lab.mean_value_check(eps, r, a)
    assert rep.passed
    assert all(c <= lab.C2_REFERENCE for c in rep.measured_constant)


def test_mean_value_radius_validation():
    with pytest.raises(ValueError):
        lab.mean_value_check(0.25, 1.5, 0.0)


@pytest.mark.parametrize("m_id", lab.SYMBOLS)
def test_symbol_derivatives_match_finite_differences(m_id):
    sig, tau = 0.7, -1.3
    m, ms, mt, mst = lab.symbol(m_id, sig, tau)
    h = 1e-5
    f = lambda a, b: lab.symbol(m_id, a, b)[0]  # noqa: E731
    assert ms == pytest.approx((f(sig + h, tau) - f(sig - h, tau)) / (2 * h), rel=1e-6)
    assert mt == pytest.approx((f(sig, tau + h) - f(sig, tau - h)) / (2 * h), rel=1e-6)
    fd = (f(sig + h, tau + h) - f(sig + h, tau - h) - f(sig - h, tau + h) + f(sig - h, tau - h)) / (4 * h * h)
    assert mst == pytest.approx(fd, rel=1e-4)


def test_parabolic_symbol_derivative_closed_form():
    sig, tau = 0.4, 0.9
    _, ms, _, _ = lab.symbol("parabolic_m", sig, tau)
    assert ms == pytest.approx(1j * tau ** 2 / (tau ** 2 + 1j * sig) ** 2)


@given(st.floats(-1e3, 1e3).filter(lambda x: abs(x) > 1e-6), st.floats(-1e3, 1e3).filter(lambda x: abs(x) > 1e-6))
def test_symbol_identities(sig, tau):
    assert abs(lab.symbol("parabolic_m", sig, tau)[0]) <= 1 + 1e-12
    assert lab.symbol("cz_m12", sig, tau)[0] == pytest.approx(-lab.symbol("cz_m21", sig, tau)[0])


@pytest.mark.parametrize("m_id", lab.SYMBOLS)
def test_multiplier_condition_is_stable(m_id):
    rep = lab.multiplier_condition_check(m_id, levels=161)
    assert rep.passed
    assert np.isfinite(rep.measured_constant[0])
    if m_id == "parabolic_m":
        assert rep.extra["sup_abs_m"] <= 1 + 1e-12


def test_spectral_plane_derivatives():
    sp = lab.SpectralPlane(64, 24.0)
    s, t = np.meshgrid(sp.s - 12.0, sp.t - 12.0, indexing="ij")
    f = np.exp(-(s ** 2 + t ** 2) / 4)
    np.testing.assert_allclose(sp.ds(f), -0.5 * s * f, atol=1e-10)
    np.testing.assert_allclose(sp.dt(f), -0.5 * t * f, atol=1e-10)
    assert sp.norm(np.ones_like(f), 2.0) == pytest.approx(24.0)


def test_kappa():
    assert lab.kappa(2.0) == 2.0
    assert lab.kappa(4.0) == 4.0
    assert lab.kappa(1.5) == pytest.approx(3.0)


def test_resolvent_symbols_at_p2():
    rep = lab.eat_eps_check(2.0, 0.25)
    assert rep.passed
    modes = np.arange(-64, 65)
    a, b, c = lab.resolvent_symbols(0.25, modes)
    assert a.max() == pytest.approx(1.0)
    assert b.max() <= 0.5 + 1e-12
    assert c.max() < 1.0


@pytest.mark.parametrize("which", ["cz", "parabolic"])
def test_lp_inequalities_hold_with_moderate_constants(which):
    rep = lab.lp_inequality_check(which, 2.0, n=64, samples=20)
    assert rep.passed
    assert 0 < rep.measured_constant[0] < 3


def test_cz_eps_constant_is_uniform():
    rep = lab.lp_inequality_check("cz_eps", 2.0, eps=[0.25, 0.1], n=64, samples=20)
    assert rep.passed
    assert rep.trend["ratio"] <= lab.UNIFORMITY_FACTOR


def test_fit_decay_recovers_exponential_rate():
    h = 0.05
    s = np.arange(-400, 401) * h
    dens = np.exp(-0.8 * np.abs(s))
    rho, resid = lab.fit_decay(dens, s, h)
    assert rho == pytest.approx(0.8, rel=1e-2)
    assert resid < 1e-2


def test_report_serialization():
    rep = lab.EstimateReport("demo", [{"eps": 0.1}, {"eps": 0.05}], [1.0, float("nan")], [True, True],
                             trend=lab.summarize([1.0, 2.0]))
    d = rep.to_dict()
    assert d["measured_constant"] == [1.0, None]
    assert d["trend"] == {"max": 2.0, "ratio": 2.0}
    assert rep.to_csv().splitlines()[0] == "estimate_id,eps,measured_constant,bound_satisfied"
    assert rep.passed


@pytest.fixture(scope="module")
def wobble_lifts():
    P = wobble_potential(0.01, 0.005)
    low, high = enumerate_orbits(P, 1.0, SamplingPlan(n_nodes=16, lattice=8))
    cyl = hf.project_to_moduli(hf.enumerate_M0(high, low, P)[0], P).cylinder
    return cyl, P, [fl.newton_picard_lift(cyl, eps, P) for eps in (0.1, 0.05)]


def test_pi_eps_cylinder_matches_loopwise(wobble_lifts):
    u, _, _ = wobble_lifts
    rng = np.random.default_rng(0)
    z = fl.PairField(*rng.standard_normal((2,) + u.coords.shape))
    out = lab.pi_eps_cylinder(u, z, 0.1)
    j = 7
    np.testing.assert_allclose(out[j - 1], fl.pi_eps(None, z.xi[j], z.eta[j], 0.1), atol=1e-12)


@pytest.mark.parametrize("which", ["elliptic", "balanced"])
def test_linear_sweeps_are_uniform(wobble_lifts, which):
    u, P, _ = wobble_lifts
    rep = lab.linear_estimate_sweep(u, which, 2.0 if which == "elliptic" else 4.0, [0.1, 0.05], P, samples=3)
    assert rep.passed
    assert rep.trend["ratio"] <= lab.UNIFORMITY_FACTOR


@pytest.mark.parametrize("which", ["apriori", "gradient", "decay"])
def test_nonlinear_bounds(wobble_lifts, which):
    _, P, lifts = wobble_lifts
    rep = lab.nonlinear_bound_sweep([r.pair for r in lifts], P, which)
    assert rep.passed
    assert all(np.isfinite(c) for c in rep.measured_constant)


def test_unknown_estimate_names_raise(wobble_lifts):
    u, P, _ = wobble_lifts
    with pytest.raises(ValueError):
        lab.linear_estimate_sweep(u, "nope", 2.0, [0.1], P)
    with pytest.raises((ValueError, KeyError)):
        lab.lp_inequality_check("nope", 2.0)
