import numpy as np
import pytest

from loopfloer import stencils
from loopfloer.critical import (SamplingPlan, decompose_near_orbit, enumerate_orbits, find_orbit, hessian_matrix,
                                morse_index, orbit_residual, pair_hessian, same_orbit, spectrum)
from loopfloer.errors import NoNearbyOrbit, UnsupportedBackend
from loopfloer.geometry import FlatTorus, Sphere2, wrap_diff
from loopfloer.loops import (DiscreteLoop, constant_loop, cosine_potential, moving_cosine_potential, velocity,
                             winding_loop)

C = 0.01
FOUR_PI2 = 4 * np.pi ** 2


@pytest.fixture(scope="module")
def circle_orbits():
    return enumerate_orbits(cosine_potential(C), 1.0, SamplingPlan(n_nodes=64, lattice=8))


def test_circle_orbits_are_the_two_constants(circle_orbits):
    assert [o.index for o in circle_orbits] == [0, 1]
    low, high = circle_orbits
    np.testing.assert_allclose(low.loop.nodes, 0.0, atol=1e-12)
    np.testing.assert_allclose(high.loop.nodes, 0.5, atol=1e-12)
    assert low.action == pytest.approx(-C, abs=1e-14)
    assert high.action == pytest.approx(C, abs=1e-14)


def test_circle_spectrum_matches_discrete_symbol(circle_orbits):
    # constant orbits: eigenvalues of -L - V''(x0) are the Laplacian symbol shifted by 4 pi^2 c cos(2 pi x0)
    n = 64
    sym = np.sort(np.concatenate([[0.0], np.repeat(stencils.laplacian_symbol(n, np.arange(1, n // 2)), 2),
                                  [stencils.laplacian_symbol(n, n // 2)]]))
    for orb, sign in zip(circle_orbits, (1.0, -1.0)):
        w = spectrum(orb, cosine_potential(C))
        np.testing.assert_allclose(w, sym + sign * FOUR_PI2 * C, atol=1e-8)
    assert spectrum(circle_orbits[1], cosine_potential(C), k=1)[0] == pytest.approx(-FOUR_PI2 * C, abs=1e-10)


def test_action_cut_and_sorting(circle_orbits):
    only_low = enumerate_orbits(cosine_potential(C), 0.0, SamplingPlan(n_nodes=64, lattice=8))
    assert len(only_low) == 1 and only_low[0].index == 0
    assert circle_orbits[0].sort_key() < circle_orbits[1].sort_key()


def test_winding_orbits_of_moving_potential():
    P = moving_cosine_potential(C)
    orbits = enumerate_orbits(P, 1.0, SamplingPlan(n_nodes=32, components=((1,),), offsets=8))
    assert [(o.component, o.index) for o in orbits] == [((1,), 0), ((1,), 1)]
    assert [o.action for o in orbits] == pytest.approx([0.5 - C, 0.5 + C], abs=1e-12)
    for o, x0 in zip(orbits, (0.0, 0.5)):
        offset = wrap_diff(o.loop.coords[:, 0] - o.loop.t - x0)
        np.testing.assert_allclose(offset, 0.0, atol=1e-12)


def test_torus2_orbits_have_indices_0_1_1_2():
    P = cosine_potential(C, dim=2)
    orbits = enumerate_orbits(P, 1.0, SamplingPlan(n_nodes=16, lattice=4, components=((0, 0),)))
    assert sorted(o.index for o in orbits) == [0, 1, 1, 2]
    for o in orbits:
        assert o.action == pytest.approx(C * (2 * o.index - 2), abs=1e-14)
        assert morse_index(o) == o.index


def test_newton_converges_from_perturbed_guess():
    P = cosine_potential(C)
    rng = np.random.default_rng(0)
    guess = DiscreteLoop(FlatTorus(1), 0.45 + 0.01 * rng.standard_normal(32))
    orb = find_orbit(guess, P)
    assert np.abs(orbit_residual(orb.loop, P)).max() < 1e-10
    assert same_orbit(orb.loop, constant_loop(FlatTorus(1), [0.5], n=32))


def test_hessian_is_symmetric():
    P = moving_cosine_potential(0.1)
    x = winding_loop(FlatTorus(1), [1], [0.2], n=16)
    A = hessian_matrix(x, P)
    np.testing.assert_allclose(A, A.T, atol=1e-12)


def test_pair_hessian_is_symmetric_and_invertible_at_orbits(circle_orbits):
    P = cosine_potential(C)
    for orb in circle_orbits:
        ph = pair_hessian(orb.loop, velocity(orb.loop), P)
        assert ph.symmetry_defect < 1e-10
        assert ph.invertibility_margin > 1e-3
        xi = np.random.default_rng(1).standard_normal((64, 1))
        a, b = ph.apply(xi, np.zeros_like(xi))
        np.testing.assert_allclose(b, stencils.dplus(xi))


def test_orbit_computations_reject_the_sphere():
    x = DiscreteLoop(Sphere2(), np.tile([0.0, 0.0, 1.0], (8, 1)))
    with pytest.raises(UnsupportedBackend):
        find_orbit(x, cosine_potential(C))


def test_near_orbit_decomposition(circle_orbits):
    P = cosine_potential(C)
    base = circle_orbits[1].loop
    x = base.with_coords(base.coords + 0.01 * np.sin(2 * np.pi * base.t)[:, None])
    dec = decompose_near_orbit(x, velocity(x), P, 1.0, orbits=circle_orbits)
    assert dec.orbit is circle_orbits[1]
    np.testing.assert_allclose(dec.xi.vectors[:, 0], 0.01 * np.sin(2 * np.pi * base.t), atol=1e-14)
    assert dec.c1_size > 0
    with pytest.raises(NoNearbyOrbit):
        decompose_near_orbit(base.with_coords(base.coords + 0.25), velocity(base), P, 1.0, orbits=circle_orbits)
