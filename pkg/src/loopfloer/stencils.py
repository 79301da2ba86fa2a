"""Finite-difference stencils on flat backends.

Arrays carry the loop-node axis second to last and the coordinate axis last,
so a loop field has shape (N, m) and a cylinder field (N_s, N, m).

The t-derivative comes as a forward/backward pair D+ and D- with
D+^T = -D-.  The second derivative is the compact three-point Laplacian
L = D- D+, which has no spurious null modes at the Nyquist frequency.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .geometry import wrap_diff


def dplus(f):
    n = f.shape[-2]
    return n * (np.roll(f, -1, axis=-2) - f)


def dminus(f):
    n = f.shape[-2]
    return n * (f - np.roll(f, 1, axis=-2))


def dcentral(f):
    n = f.shape[-2]
    return 0.5 * n * (np.roll(f, -1, axis=-2) - np.roll(f, 1, axis=-2))


def laplacian(f):
    return dminus(dplus(f))


def dplus_points(x):
    """Forward differences of torus coordinates, measured with the minimal image."""
    n = x.shape[-2]
    return n * wrap_diff(np.roll(x, -1, axis=-2) - x)


def laplacian_points(x):
    return dminus(dplus_points(x))


def laplacian_symbol(n: int, k):
    """Eigenvalue of -L on the Fourier mode exp(2 pi i k t) with N nodes."""
    return (2.0 * n * np.sin(np.pi * np.asarray(k) / n)) ** 2


def ds_central(f, h):
    """Central s-difference on interior slices (output has two fewer slices)."""
    return (f[2:] - f[:-2]) / (2.0 * h)


def ds_full(f, h):
    """s-difference on every slice: central inside, one-sided at the ends."""
    return np.gradient(f, h, axis=0)


# sparse matrices acting on flattened (node, coordinate) vectors


def _circ(n, offsets):
    rows = []
    cols = []
    vals = []
    for off, val in offsets:
        for k in range(n):
            rows.append(k)
            cols.append((k + off) % n)
            vals.append(val)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def dplus_matrix(n: int, m: int = 1):
    return sp.kron(_circ(n, [(0, -n), (1, n)]), sp.identity(m), format="csr")


def dminus_matrix(n: int, m: int = 1):
    return sp.kron(_circ(n, [(0, n), (-1, -n)]), sp.identity(m), format="csr")


def laplacian_matrix(n: int, m: int = 1):
    return (dminus_matrix(n, m) @ dplus_matrix(n, m)).tocsr()


@lru_cache(maxsize=16)
def laplacian_dense(n: int, m: int = 1):
    """Read-only dense Laplacian matrix, cached per grid size."""
    mat = laplacian_matrix(n, m).toarray()
    mat.flags.writeable = False
    return mat
