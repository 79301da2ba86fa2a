import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from loopfloer import stencils as S

sizes = st.sampled_from([8, 16, 32, 64])


def field(n, m, seed):
    return np.random.default_rng(seed).standard_normal((n, m))


@given(sizes, st.integers(1, 3), st.integers(0, 10_000))
def test_dplus_adjoint_is_minus_dminus(n, m, seed):
    a, b = field(n, m, seed), field(n, m, seed + 1)
    assert np.sum(S.dplus(a) * b) == pytest.approx(-np.sum(a * S.dminus(b)), abs=1e-9 * n)


@given(sizes, st.integers(1, 3), st.integers(0, 10_000))
def test_matrices_match_array_stencils(n, m, seed):
    a = field(n, m, seed)
    flat = a.reshape(-1)
    np.testing.assert_allclose(S.dplus_matrix(n, m) @ flat, S.dplus(a).reshape(-1), atol=1e-10)
    np.testing.assert_allclose(S.dminus_matrix(n, m) @ flat, S.dminus(a).reshape(-1), atol=1e-10)
    np.testing.assert_allclose(S.laplacian_matrix(n, m) @ flat, S.laplacian(a).reshape(-1), atol=1e-8)


@pytest.mark.parametrize("n", [8, 32, 128])
def test_laplacian_symbol_on_fourier_modes(n):
    t = np.arange(n) / n
    for k in range(n // 2 + 1):
        mode = np.cos(2 * np.pi * k * t)[:, None]
        np.testing.assert_allclose(-S.laplacian(mode), S.laplacian_symbol(n, k) * mode, atol=1e-8 * n * n)
    # the symbol tends to (2 pi k)^2 for fixed k
    assert S.laplacian_symbol(n, 1) == pytest.approx((2 * np.pi) ** 2, rel=2 * (np.pi / n) ** 2)
    # only the constant mode is in the kernel (no Nyquist null mode)
    assert np.all(S.laplacian_symbol(n, np.arange(1, n)) > 0)


def test_dplus_points_uses_minimal_image():
    x = (np.arange(8) / 8 * 3.0 % 1.0)[:, None]
    np.testing.assert_allclose(S.dplus_points(x), 3.0)


def test_s_differences_are_exact_on_quadratics():
    s = np.linspace(-1, 1, 11)
    h = s[1] - s[0]
    f = (s ** 2)[:, None, None] * np.ones((1, 4, 2))
    np.testing.assert_allclose(S.ds_central(f, h), 2 * s[1:-1, None, None] * np.ones((1, 4, 2)), atol=1e-12)
    full = S.ds_full(f, h)
    assert full.shape == f.shape
    np.testing.assert_allclose(full[1:-1], S.ds_central(f, h))
