# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the hot kernels in ``_pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin, sqrt, fabs, M_PI

cnp.import_array()

cdef double TWO_PI = 2.0 * M_PI


cdef class _CyclicFactor:
    cdef double[::1] a, c, cp, den, z
    cdef double gamma
    cdef Py_ssize_t n

    def __init__(self, lower, diag, upper):
        cdef Py_ssize_t i, n
        self.a = np.ascontiguousarray(lower, dtype=np.float64)
        b = np.array(diag, dtype=np.float64)
        self.c = np.ascontiguousarray(upper, dtype=np.float64)
        n = b.shape[0]
        if n < 3:
            raise ValueError("cyclic solve needs at least three unknowns")
        self.n = n
        self.gamma = -b[0]
        b[0] = b[0] - self.gamma
        b[n - 1] = b[n - 1] - self.a[0] * self.c[n - 1] / self.gamma
        self.cp = np.empty(n)
        self.den = np.empty(n)
        self.den[0] = b[0]
        self.cp[0] = self.c[0] / self.den[0]
        for i in range(1, n):
            self.den[i] = b[i] - self.a[i] * self.cp[i - 1]
            self.cp[i] = self.c[i] / self.den[i]
        self.z = np.zeros(n)
        self.z[0] = self.gamma
        self.z[n - 1] = self.c[n - 1]
        self._thomas(&self.z[0])

    cdef void _thomas(self, double* y) nogil:
        cdef Py_ssize_t i, n = self.n
        y[0] = y[0] / self.den[0]
        for i in range(1, n):
            y[i] = (y[i] - self.a[i] * y[i - 1]) / self.den[i]
        for i in range(n - 2, -1, -1):
            y[i] -= self.cp[i] * y[i + 1]

    cdef void solve_inplace(self, double* y) nogil:
        cdef Py_ssize_t i, n = self.n
        cdef double fact
        self._thomas(y)
        fact = (y[0] + self.a[0] * y[n - 1] / self.gamma) / (
            1.0 + self.z[0] + self.a[0] * self.z[n - 1] / self.gamma)
        for i in range(n):
            y[i] -= fact * self.z[i]


def cyclic_tridiag_solve(lower, diag, upper, rhs):
    cdef _CyclicFactor f = _CyclicFactor(lower, diag, upper)
    out = np.array(rhs, dtype=np.float64, ndmin=2, order="C", copy=True)
    cdef double[:, ::1] y = out
    cdef Py_ssize_t r
    if y.shape[1] != f.n:
        raise ValueError("right-hand side length mismatch")
    for r in range(y.shape[0]):
        f.solve_inplace(&y[r, 0])
    return out


cdef void _terms(double t, const double* x, Py_ssize_t d, const double[::1] amp, const double[:, ::1] kvec,
                 const double[::1] mfreq, const double[::1] phase, double* val, double* grad,
                 double* hess) nogil:
    cdef Py_ssize_t j, a, b, nt = amp.shape[0]
    cdef double arg, c, s
    val[0] = 0.0
    for a in range(d):
        grad[a] = 0.0
        for b in range(d):
            hess[a * d + b] = 0.0
    for j in range(nt):
        arg = -mfreq[j] * t
        for a in range(d):
            arg += kvec[j, a] * x[a]
        arg = TWO_PI * arg + phase[j]
        c = amp[j] * cos(arg)
        s = amp[j] * sin(arg)
        val[0] += c
        for a in range(d):
            grad[a] -= TWO_PI * s * kvec[j, a]
            for b in range(d):
                hess[a * d + b] -= TWO_PI * TWO_PI * c * kvec[j, a] * kvec[j, b]


def fourier_terms(t, x, amp, kvec, mfreq, phase):
    cdef const double[::1] tt = np.ascontiguousarray(t, dtype=np.float64)
    cdef const double[:, ::1] xx = np.ascontiguousarray(x, dtype=np.float64)
    cdef const double[::1] am = np.ascontiguousarray(amp, dtype=np.float64)
    cdef const double[:, ::1] kv = np.ascontiguousarray(kvec, dtype=np.float64)
    cdef const double[::1] mf = np.ascontiguousarray(mfreq, dtype=np.float64)
    cdef const double[::1] ph = np.ascontiguousarray(phase, dtype=np.float64)
    cdef Py_ssize_t p, npts = xx.shape[0], d = xx.shape[1]
    val = np.empty(npts)
    grad = np.empty((npts, d))
    hess = np.empty((npts, d, d))
    cdef double[::1] v = val
    cdef double[:, ::1] g = grad
    cdef double[:, :, ::1] hh = hess
    with nogil:
        for p in range(npts):
            _terms(tt[p], &xx[p, 0], d, am, kv, mf, ph, &v[p], &g[p, 0], &hh[p, 0, 0])
    return val, grad, hess


cdef double _action_rate(double[:, ::1] x, const double[::1] w, const double[::1] t, const double[::1] amp,
                         const double[:, ::1] kvec, const double[::1] mfreq, const double[::1] phase,
                         double[:, ::1] rate, double* hbuf, double* gbuf) nogil:
    cdef Py_ssize_t k, a, n = x.shape[0], d = x.shape[1]
    cdef double kin = 0.0, pot = 0.0, val, f, b, nn = <double>n
    for k in range(n):
        _terms(t[k], &x[k, 0], d, amp, kvec, mfreq, phase, &val, gbuf, hbuf)
        pot += val
        for a in range(d):
            if k == n - 1:
                f = x[0, a] + w[a] - x[k, a]
            else:
                f = x[k + 1, a] - x[k, a]
            if k == 0:
                b = x[0, a] + w[a] - x[n - 1, a]
            else:
                b = x[k, a] - x[k - 1, a]
            kin += f * f
            rate[k, a] = (f - b) * nn * nn + gbuf[a]
    return 0.5 * kin * nn - pot / nn


def heat_steps(x, winding, t, double h, Py_ssize_t nsteps, amp, kvec, mfreq, phase, double tol):
    cdef double[:, ::1] xx = np.array(x, dtype=np.float64, order="C", copy=True)
    cdef Py_ssize_t n = xx.shape[0], d = xx.shape[1], k, a, step, done = 0
    cdef const double[::1] w = np.ascontiguousarray(winding, dtype=np.float64)
    cdef const double[::1] tt = np.ascontiguousarray(t, dtype=np.float64)
    cdef const double[::1] am = np.ascontiguousarray(amp, dtype=np.float64)
    cdef const double[:, ::1] kv = np.ascontiguousarray(kvec, dtype=np.float64)
    cdef const double[::1] mf = np.ascontiguousarray(mfreq, dtype=np.float64)
    cdef const double[::1] ph = np.ascontiguousarray(phase, dtype=np.float64)
    cdef double nn = <double>n
    cdef _CyclicFactor f = _CyclicFactor(np.full(n, -h * nn * nn), np.full(n, 1.0 + 2.0 * h * nn * nn),
                                         np.full(n, -h * nn * nn))
    cdef double[:, ::1] rate = np.empty((n, d))
    cdef double[:, ::1] rate_n = np.empty((n, d))
    cdef double[:, ::1] xn = np.empty((n, d))
    cdef double[:, ::1] col = np.empty((d, n))
    cdef double[::1] hbuf = np.empty(d * d)
    cdef double[::1] gbuf = np.empty(d)
    actions_a = np.empty(nsteps + 1)
    sups_a = np.empty(max(nsteps, 1))
    l2s_a = np.empty(max(nsteps, 1))
    cdef double[::1] actions = actions_a
    cdef double[::1] sups = sups_a
    cdef double[::1] l2s = l2s_a
    cdef double act, act_n, smax, s2, r
    with nogil:
        act = _action_rate(xx, w, tt, am, kv, mf, ph, rate, &hbuf[0], &gbuf[0])
        actions[0] = act
        for step in range(nsteps):
            smax = 0.0
            s2 = 0.0
            for k in range(n):
                for a in range(d):
                    r = rate[k, a]
                    s2 += r * r
                    if fabs(r) > smax:
                        smax = fabs(r)
                    col[a, k] = h * r
            sups[step] = smax
            l2s[step] = sqrt(s2 / nn)
            for a in range(d):
                f.solve_inplace(&col[a, 0])
            for k in range(n):
                for a in range(d):
                    xn[k, a] = xx[k, a] + col[a, k]
            act_n = _action_rate(xn, w, tt, am, kv, mf, ph, rate_n, &hbuf[0], &gbuf[0])
            if act_n > act + tol:
                break
            xx[:, :] = xn
            rate[:, :] = rate_n
            act = act_n
            actions[step + 1] = act
            done = step + 1
    return (np.asarray(xx), actions_a[: done + 1].copy(), sups_a[:done].copy(),
            l2s_a[:done].copy(), done)
