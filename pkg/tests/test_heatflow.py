import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from loopfloer import heatflow as hf
from loopfloer.critical import SamplingPlan, enumerate_orbits
from loopfloer.errors import IndexMismatch
from loopfloer.geometry import FlatTorus
from loopfloer.loops import DiscreteLoop, classical_action, cosine_potential, wobble_potential

C = 0.01
RATE = 4 * np.pi ** 2 * C


@pytest.fixture(scope="module")
def P():
    return cosine_potential(C)


@pytest.fixture(scope="module")
def orbits(P):
    return enumerate_orbits(P, 1.0, SamplingPlan(n_nodes=32, lattice=8))


@pytest.fixture(scope="module")
def cylinders(orbits, P):
    low, high = orbits
    return hf.enumerate_M0(high, low, P)


@pytest.fixture(scope="module")
def wobble_cylinder():
    P = wobble_potential(C, 0.005)
    low, high = enumerate_orbits(P, 1.0, SamplingPlan(n_nodes=16, lattice=8))
    cyl = hf.enumerate_M0(high, low, P)[0]
    return hf.project_to_moduli(cyl, P).cylinder, P


def test_two_cylinders_with_energy_equal_to_action_drop(cylinders, orbits, P):
    assert len(cylinders) == 2
    drop = orbits[1].action - orbits[0].action
    assert drop == pytest.approx(2 * C)
    for c in cylinders:
        assert abs(hf.parabolic_energy(c, P) - drop) <= 1e-6
        assert np.all(np.diff(c.actions(P)) <= 1e-12)
        assert max(c.endpoint_distances()) < 1e-6
        assert hf.spectral_flow_index(c, P) == 1
    # the two cylinders leave the maximum in opposite directions
    mid = [c.coords[c.n_s // 2, 0, 0] - 0.5 for c in cylinders]
    assert mid[0] * mid[1] < 0


def test_batched_actions_match_loop_actions(cylinders, P):
    for c in cylinders:
        ref = [classical_action(c.loop(j), P) for j in range(c.n_s)]
        assert np.allclose(c.actions(P), ref, rtol=0, atol=1e-13)


def test_enumeration_requires_index_drop_one(orbits, P):
    with pytest.raises(IndexMismatch):
        hf.enumerate_M0(orbits[0], orbits[1], P)


def test_tail_rates_match_the_end_spectra(cylinders, P):
    (ls, lr), (rs, rr) = hf.tail_fit(cylinders[0], P)
    assert ls == pytest.approx(RATE, rel=1e-3)
    assert rs == pytest.approx(-RATE, rel=1e-3)
    assert lr < 1e-2 and rr < 1e-2


def test_matrix_matches_operator_and_adjoint(wobble_cylinder):
    u, P = wobble_cylinder
    rng = np.random.default_rng(0)
    a, b = rng.standard_normal((2,) + u.coords.shape)
    a[[0, -1]] = 0.0
    b[[0, -1]] = 0.0
    mat = hf.d0_matrix(u, P)
    np.testing.assert_allclose(mat @ a[1:-1].reshape(-1), hf.apply_D0(u, a, P)[1:-1].reshape(-1), atol=1e-9)
    lhs = hf.cylinder_pairing(u, hf.apply_D0(u, a, P), b)
    rhs = hf.cylinder_pairing(u, a, hf.apply_D0_adjoint(u, b, P))
    assert lhs == pytest.approx(rhs, rel=1e-10)


def test_projection_gives_an_exact_solution(wobble_cylinder):
    u, P = wobble_cylinder
    assert np.abs(hf.heat_residual(u, P)).max() < 1e-9
    assert hf.surjectivity_margin(u, P) > 0


def test_shift_round_trip(cylinders):
    c = cylinders[0]
    back = hf.shift_cylinder(hf.shift_cylinder(c, 0.3), -0.3)
    inner = slice(20, -20)
    np.testing.assert_allclose(back.coords[inner], c.coords[inner], atol=1e-6)


def test_concatenation_preserves_slices(cylinders):
    c = cylinders[0]
    half = c.n_s // 2
    left = c.with_coords(c.coords[: half + 1])
    left.s = c.s[: half + 1]
    right = c.with_coords(c.coords[half:])
    right.s = c.s[half:]
    glued = hf.concatenate(left, right)
    np.testing.assert_allclose(glued.coords, c.coords)
    assert glued.h_s == pytest.approx(c.h_s)


def test_heat_step_decreases_action(P):
    rng = np.random.default_rng(3)
    x = DiscreteLoop(FlatTorus(1), 0.3 + 0.05 * rng.standard_normal(32))
    y = hf.step_heat(x, P, 1e-3)
    assert classical_action(y, P) < classical_action(x, P)


def test_flow_converges_to_minimum_with_its_rate(P):
    rng = np.random.default_rng(4)
    x = DiscreteLoop(FlatTorus(1), 0.1 + 0.02 * rng.standard_normal(32))
    res = hf.evolve_to_orbit(x, P)
    assert res.orbit.index == 0
    assert res.decay_rate == pytest.approx(RATE, rel=1e-2)


@given(st.integers(0, 1000))
def test_deflated_solver_solution_is_orthogonal_to_kernel(seed):
    rng = np.random.default_rng(seed)
    n = 12
    q1, _ = np.linalg.qr(rng.standard_normal((n, n)))
    q2, _ = np.linalg.qr(rng.standard_normal((n, n)))
    sv = np.concatenate([[1e-9], rng.uniform(1, 2, n - 1)])
    A = q1 @ np.diag(sv) @ q2.T
    solver = hf.DeflatedSolver(A)
    assert solver.sigma[0] == pytest.approx(1e-9, rel=1e-3)
    f = rng.standard_normal(n)
    z = solver.solve(f)
    assert abs(solver.k[0] @ z) < 1e-10
    np.testing.assert_allclose(A @ z, f - solver.l[0] * (solver.l[0] @ f), atol=1e-8)
