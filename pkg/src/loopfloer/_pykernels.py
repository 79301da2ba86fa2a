"""Pure numpy implementations of the hot kernels.

These define the reference semantics; the compiled module ``_ckernels``
implements the same functions with identical signatures.
"""

from __future__ import annotations

import numpy as np

TWO_PI = 2.0 * np.pi


def cyclic_tridiag_solve(lower, diag, upper, rhs):
    """Solve periodic tridiagonal systems for a batch of right-hand sides.

    Row i reads ``lower[i] x[i-1] + diag[i] x[i] + upper[i] x[i+1] = rhs[i]``
    with indices taken mod N.  ``rhs`` has shape (m, N); coefficients are
    shared across the batch.
    """
    a = np.asarray(lower, dtype=float)
    b = np.array(diag, dtype=float)
    c = np.asarray(upper, dtype=float)
    d = np.array(rhs, dtype=float, ndmin=2)
    n = b.shape[0]
    if n < 3:
        raise ValueError("cyclic solve needs at least three unknowns")
    gamma = -b[0]
    bb = b.copy()
    bb[0] = b[0] - gamma
    bb[-1] = b[-1] - a[0] * c[-1] / gamma
    # forward elimination coefficients, shared by all right-hand sides
    cp = np.empty(n)
    den = np.empty(n)
    den[0] = bb[0]
    cp[0] = c[0] / den[0]
    for i in range(1, n):
        den[i] = bb[i] - a[i] * cp[i - 1]
        cp[i] = c[i] / den[i]

    def thomas(rr):
        y = np.empty_like(rr)
        y[:, 0] = rr[:, 0] / den[0]
        for i in range(1, n):
            y[:, i] = (rr[:, i] - a[i] * y[:, i - 1]) / den[i]
        for i in range(n - 2, -1, -1):
            y[:, i] -= cp[i] * y[:, i + 1]
        return y

    uvec = np.zeros((1, n))
    uvec[0, 0] = gamma
    uvec[0, -1] = c[-1]
    z = thomas(uvec)[0]
    y = thomas(d)
    fact = (y[:, 0] + a[0] * y[:, -1] / gamma) / (1.0 + z[0] + a[0] * z[-1] / gamma)
    return y - fact[:, None] * z[None, :]


def fourier_terms(t, x, amp, kvec, mfreq, phase):
    """Value, gradient and Hessian of V(t,x) = sum_j a_j cos(2 pi (k_j.x - m_j t) + phi_j)."""
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    kvec = np.asarray(kvec, dtype=float)
    arg = TWO_PI * (x @ kvec.T - np.outer(t, mfreq)) + np.asarray(phase)[None, :]
    c = np.cos(arg) * amp
    s = np.sin(arg) * amp
    val = c.sum(axis=1)
    grad = -TWO_PI * s @ kvec
    hess = -(TWO_PI ** 2) * np.einsum("pj,ja,jb->pab", c, kvec, kvec)
    return val, grad, hess


def _lap(x, winding):
    n = x.shape[0]
    fwd = np.empty_like(x)
    fwd[:-1] = x[1:] - x[:-1]
    fwd[-1] = x[0] + winding - x[-1]
    back = np.roll(fwd, 1, axis=0)
    return (fwd - back) * n * n, fwd * n


def heat_steps(x, winding, t, h, nsteps, amp, kvec, mfreq, phase, tol):
    """Run up to ``nsteps`` semi-implicit heat steps on a flat torus loop.

    Each step solves (1 - h L) d = h (L x + grad V(t, x)) and sets x += d,
    with L the periodic second difference.  Stops early (returning the number
    of completed steps) when the discrete action rises by more than ``tol``.
    Returns (x, actions, sup_rates, l2_rates, steps_done); the rate arrays
    hold the sup and L2 norms of (L x + grad V) before each step.
    """
    x = np.array(x, dtype=float)
    n = x.shape[0]
    winding = np.asarray(winding, dtype=float)
    lower = np.full(n, -h * n * n)
    diag = np.full(n, 1.0 + 2.0 * h * n * n)
    actions = np.empty(nsteps + 1)
    sups = np.empty(nsteps)
    l2s = np.empty(nsteps)

    def action(y):
        lap, vel = _lap(y, winding)
        val, grad, _ = fourier_terms(t, y, amp, kvec, mfreq, phase)
        return 0.5 * np.sum(vel * vel) / n - val.sum() / n, lap + grad

    act, rate = action(x)
    actions[0] = act
    done = 0
    for step in range(nsteps):
        sups[step] = np.abs(rate).max()
        l2s[step] = np.sqrt(np.sum(rate * rate) / n)
        d = cyclic_tridiag_solve(lower, diag, lower, h * rate.T).T
        xn = x + d
        act_n, rate_n = action(xn)
        if act_n > act + tol:
            break
        x, act, rate = xn, act_n, rate_n
        actions[step + 1] = act
        done = step + 1
    return x, actions[: done + 1], sups[:done], l2s[:done], done
