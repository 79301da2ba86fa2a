"""The epsilon-Floer system on a flat torus and its lift from heat-flow cylinders.

A pair (u, v) on the cylinder grid solves

    d_s u - D- v - grad V(u) = 0,     d_s v + eps^-2 (D+ u - v) = 0

with central s-differences on interior slices and the staggered pair D+/D-
in t, so that v = D+ u turns the first equation into the discrete heat
equation.  Pair fields vanish on the two boundary slices.

Linear algebra is carried out in weighted coordinates (weight 1 on xi,
eps on eta) in which the (0,2,eps) pairing is Euclidean; there the
adjoint of the linearization is the matrix transpose.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

from . import stencils
from .errors import (HypothesisViolated, IndexMismatch, InjectivityRadiusExceeded, IterationDiverged,
                     NoRoot, NotMonotone, PreconditionFailed, UnsupportedBackend)
from .heatflow import (Cylinder, DeflatedSolver, _hessian_blocks, enumerate_M0, node_hessian_matrix,
                       project_to_moduli, shift_cylinder)
from .critical import newton_tolerance
from .loops import Perturbation

INJECTIVITY_RADIUS = 0.5


@dataclass
class PairField:
    """zeta = (xi, eta) on a cylinder grid, arrays of shape (N_s, N_t, m)."""

    xi: np.ndarray
    eta: np.ndarray

    def __add__(self, other):
        return PairField(self.xi + other.xi, self.eta + other.eta)

    def __sub__(self, other):
        return PairField(self.xi - other.xi, self.eta - other.eta)

    def scaled(self, c):
        return PairField(c * self.xi, c * self.eta)

    @staticmethod
    def zeros_like(u: Cylinder):
        return PairField(np.zeros_like(u.coords), np.zeros_like(u.coords))

    def interior(self):
        return self.xi[1:-1], self.eta[1:-1]


@dataclass
class CylinderPair:
    u: Cylinder
    v: np.ndarray
    eps: float
    exact: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0 < self.eps <= 1:
            raise ValueError("eps must lie in (0, 1]")
        if np.shape(self.v) != self.u.coords.shape:
            raise ValueError("v must live on the grid of u")


def _require_flat(u: Cylinder):
    if not u.backend.flat:
        raise UnsupportedBackend("the Floer system is implemented on flat tori only")


def _grad(coords, P):
    from .heatflow import _gradients

    return _gradients(coords, P)


def _embed(shape, interior):
    out = np.zeros(shape)
    out[1:-1] = interior
    return out


def floer_residual(w: CylinderPair, P: Perturbation) -> PairField:
    """(d_s u - D- v - grad V(u), d_s v + eps^-2 (D+ u - v)) on interior slices."""
    _require_flat(w.u)
    u, v, h = w.u.coords, w.v, w.u.h_s
    inner_u = u[1:-1]
    inner_v = v[1:-1]
    f1 = stencils.ds_central(u, h) - stencils.dminus(inner_v) - _grad(inner_u, P)
    f2 = stencils.ds_central(v, h) + (stencils.dplus_points(inner_u) - inner_v) / w.eps ** 2
    return PairField(_embed(u.shape, f1), _embed(u.shape, f2))


def floer_residual_unscaled(u: Cylinder, v, eps: float, P: Perturbation) -> PairField:
    """Residual of the Floer equations for the structure J_eps before rescaling s.

    (d_s u - eps D- v - eps grad V(u), d_s v + eps^-1 (D+ u - v)).
    """
    h = u.h_s
    inner_u = u.coords[1:-1]
    inner_v = np.asarray(v)[1:-1]
    f1 = stencils.ds_central(u.coords, h) - eps * (stencils.dminus(inner_v) + _grad(inner_u, P))
    f2 = stencils.ds_central(np.asarray(v), h) + (stencils.dplus_points(inner_u) - inner_v) / eps
    return PairField(_embed(u.coords.shape, f1), _embed(u.coords.shape, f2))


def rescale_s(u: Cylinder, v, eps: float) -> CylinderPair:
    """(u(s/eps, t), v(s/eps, t)) sampled on the grid eps * s."""
    cyl = Cylinder(u.backend, u.coords.copy(), eps * u.s, u.endpoints, dict(u.meta))
    return CylinderPair(cyl, np.array(v, dtype=float), eps)


def base_pair(u: Cylinder, eps: float) -> CylinderPair:
    """The graph pair (u, D+ u)."""
    return CylinderPair(u, stencils.dplus_points(u.coords), eps)


def pullback_F(u: Cylinder, v0, zeta: PairField, eps: float, P: Perturbation) -> PairField:
    """Residual of (exp_u(xi), Phi(u, xi)(v0 + eta)) pulled back to u (transport is the identity)."""
    _require_flat(u)
    if np.abs(zeta.xi).max(initial=0.0) >= INJECTIVITY_RADIUS:
        raise InjectivityRadiusExceeded("xi exceeds the injectivity radius of the flat torus")
    moved = u.with_coords(u.coords + zeta.xi)
    return floer_residual(CylinderPair(moved, np.asarray(v0) + zeta.eta, eps), P)


def _apply_h(blocks, terms, field, n, transpose=False):
    b = np.swapaxes(blocks, -1, -2) if transpose else blocks
    out = np.einsum("jkab,jkb->jka", b, field)
    if terms is not None:
        for j, tm in enumerate(terms):
            for c, a, bb in tm:
                if transpose:
                    a, bb = bb, a
                out[j] += c * np.sum(bb * field[j]) / n * a
    return out


def apply_D_eps(u: Cylinder, v, zeta: PairField, eps: float, P: Perturbation) -> PairField:
    """(d_s xi - D- eta - H xi, d_s eta + eps^-2 (D+ xi - eta)) on interior slices."""
    _require_flat(u)
    blocks, terms = _hessian_blocks(u.coords[1:-1], P)
    xi, eta = zeta.interior()
    h = u.h_s
    f1 = stencils.ds_central(zeta.xi, h) - stencils.dminus(eta) - _apply_h(blocks, terms, xi, u.n_t)
    f2 = stencils.ds_central(zeta.eta, h) + (stencils.dplus(xi) - eta) / eps ** 2
    return PairField(_embed(u.coords.shape, f1), _embed(u.coords.shape, f2))


def apply_D_eps_adjoint(u: Cylinder, v, zeta: PairField, eps: float, P: Perturbation) -> PairField:
    """Adjoint for the (0,2,eps) pairing: (-d_s xi - D- eta - H xi, -d_s eta + eps^-2 (D+ xi - eta))."""
    _require_flat(u)
    blocks, terms = _hessian_blocks(u.coords[1:-1], P)
    xi_full = zeta.xi.copy()
    eta_full = zeta.eta.copy()
    for f in (xi_full, eta_full):
        f[0] = 0.0
        f[-1] = 0.0
    xi, eta = xi_full[1:-1], eta_full[1:-1]
    h = u.h_s
    f1 = -stencils.ds_central(xi_full, h) - stencils.dminus(eta) - _apply_h(blocks, terms, xi, u.n_t, True)
    f2 = -stencils.ds_central(eta_full, h) + (stencils.dplus(xi) - eta) / eps ** 2
    return PairField(_embed(u.coords.shape, f1), _embed(u.coords.shape, f2))


def pairing_eps(u: Cylinder, a: PairField, b: PairField, eps: float) -> float:
    """(0,2,eps) inner product over interior slices."""
    ax, ae = a.interior()
    bx, be = b.interior()
    return float((np.sum(ax * bx) + eps ** 2 * np.sum(ae * be)) * u.h_s / u.n_t)


# ---------------------------------------------------------------------------
# sparse operator in weighted coordinates


def d_eps_matrix(u: Cylinder, eps: float, P: Perturbation):
    """Sparse D^eps on interior slices, unknowns ordered slice by slice as (xi_j, eta_j)."""
    ns = u.n_s - 2
    n, m = u.n_t, u.coords.shape[2]
    blk = n * m
    dp = stencils.dplus_matrix(n, m)
    dm = stencils.dminus_matrix(n, m)
    eye = sp.identity(blk, format="csr")
    blocks, terms = _hessian_blocks(u.coords[1:-1], P)
    local = sp.bmat([[None, -dm], [dp / eps ** 2, -eye / eps ** 2]], format="csr")
    main = sp.kron(sp.identity(ns), local) - node_hessian_matrix(blocks, terms, n, 2 * blk)
    ds = sp.diags([np.full(ns - 1, 1.0), np.full(ns - 1, -1.0)], [1, -1]) / (2.0 * u.h_s)
    return (main + sp.kron(ds, sp.identity(2 * blk))).tocsc()


def _weights(u: Cylinder, eps: float):
    """Diagonal of G: 1 on xi, eps on eta, in the slice-by-slice ordering."""
    blk = u.n_t * u.coords.shape[2]
    w = np.concatenate([np.ones(blk), np.full(blk, eps)])
    return np.tile(w, u.n_s - 2)


def _pack(zeta: PairField):
    xi, eta = zeta.interior()
    ns = xi.shape[0]
    return np.concatenate([xi.reshape(ns, -1), eta.reshape(ns, -1)], axis=1).reshape(-1)


def _unpack(u: Cylinder, vec):
    ns = u.n_s - 2
    blk = u.n_t * u.coords.shape[2]
    arr = vec.reshape(ns, 2 * blk)
    shape = (ns,) + u.coords.shape[1:]
    return PairField(_embed(u.coords.shape, arr[:, :blk].reshape(shape)),
                     _embed(u.coords.shape, arr[:, blk:].reshape(shape)))


@dataclass
class LinearSetup:
    """Factorized weighted operator G D G^{-1} with its near-kernel pair."""

    u: Cylinder
    eps: float
    weights: np.ndarray
    solver: DeflatedSolver

    @property
    def kernel(self) -> PairField:
        """Unit near-kernel direction of D (unit in the (0,2,eps) sense up to the cell volume)."""
        return _unpack(self.u, self.solver.k[0] / self.weights)

    @property
    def smallest_singular_value(self) -> float:
        return float(self.solver.sigma[0])

    def correction(self, residual: PairField) -> PairField:
        """-D^*(D D^*)^{-1} F realized as the k-orthogonal solution of D zeta = -(F - <l, F> l)."""
        rhs = self.weights * _pack(residual)
        return _unpack(self.u, -self.solver.solve(rhs) / self.weights)

    def membership_defect(self, zeta: PairField) -> float:
        """|<k, zeta>| / |zeta| in weighted coordinates (zero on the image of the adjoint)."""
        z = self.weights * _pack(zeta)
        nz = np.linalg.norm(z)
        return 0.0 if nz == 0 else float(abs(self.solver.k[0] @ z) / nz)


def linear_setup(u: Cylinder, eps: float, P: Perturbation) -> LinearSetup:
    _require_flat(u)
    mat = d_eps_matrix(u, eps, P)
    g = _weights(u, eps)
    scaled = sp.diags(g) @ mat @ sp.diags(1.0 / g)
    ds_u = stencils.ds_full(u.coords, u.h_s)
    seed = PairField(ds_u, stencils.dplus(ds_u))
    return LinearSetup(u, eps, g, DeflatedSolver(scaled, seed_right=g * _pack(seed)))


# ---------------------------------------------------------------------------
# norms


@dataclass
class EpsNorms:
    p: float
    eps: float
    zero: float
    one: float
    triple: float


def _lp(u: Cylinder, field_interior, p):
    mag = np.linalg.norm(field_interior, axis=-1)
    if np.isinf(p):
        return float(mag.max(initial=0.0))
    return float((np.sum(mag ** p) * u.h_s / u.n_t) ** (1.0 / p))


def _parts(u: Cylinder, zeta: PairField):
    xi, eta = zeta.interior()
    ds_xi = stencils.ds_central(zeta.xi, u.h_s)
    ds_eta = stencils.ds_central(zeta.eta, u.h_s)
    return xi, eta, stencils.dplus(xi), stencils.dminus(eta), ds_xi, ds_eta


def norm_0(u: Cylinder, zeta: PairField, p: float, weight: float) -> float:
    """(integral |xi|^p + weight^p |eta|^p)^(1/p); weight = eps gives the (0,p,eps) norm."""
    xi, eta = zeta.interior()
    a = np.linalg.norm(xi, axis=-1)
    b = np.linalg.norm(eta, axis=-1)
    return float((np.sum(a ** p + weight ** p * b ** p) * u.h_s / u.n_t) ** (1.0 / p))


def eps_norms(u: Cylinder, zeta: PairField, p: float, eps: float) -> EpsNorms:
    if p <= 1:
        raise ValueError("p must exceed 1")
    xi, eta, dt_xi, dt_eta, ds_xi, ds_eta = _parts(u, zeta)
    mag = [np.linalg.norm(f, axis=-1) for f in (xi, eta, dt_xi, dt_eta, ds_xi, ds_eta)]
    cell = u.h_s / u.n_t
    zero = (np.sum(mag[0] ** p + eps ** p * mag[1] ** p) * cell) ** (1.0 / p)
    one = (np.sum(mag[0] ** p + eps ** p * mag[1] ** p + eps ** p * mag[2] ** p + eps ** (2 * p) * mag[3] ** p
                  + eps ** (2 * p) * mag[4] ** p + eps ** (3 * p) * mag[5] ** p) * cell) ** (1.0 / p)
    triple = (_lp(u, xi, p) + eps ** 0.5 * _lp(u, eta, p) + eps ** 0.5 * _lp(u, dt_xi, p)
              + _lp(u, eta - dt_xi, p) + eps ** 2 * _lp(u, ds_eta, p) + eps * _lp(u, dt_eta, p)
              + eps * _lp(u, ds_xi, p) + eps ** (1.5 / p) * _lp(u, xi, np.inf)
              + eps ** (0.5 + 2.0 / p) * _lp(u, eta, np.inf))
    return EpsNorms(p=p, eps=eps, zero=float(zero), one=float(one), triple=float(triple))


# ---------------------------------------------------------------------------
# projection pi_eps


def pi_eps(x, xi, eta, eps: float):
    """(1 - eps L)^{-1} (xi - eps^2 D- eta) on one loop (node axis first)."""
    from . import kernels

    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    squeeze = xi.ndim == 1
    if squeeze:
        xi = xi[:, None]
        eta = eta[:, None]
    n = xi.shape[0]
    rhs = xi - eps ** 2 * stencils.dminus(eta)
    off = np.full(n, -eps * n * n)
    out = kernels.cyclic_tridiag_solve(off, np.full(n, 1.0 + 2.0 * eps * n * n), off, rhs.T).T
    return out[:, 0] if squeeze else out


# ---------------------------------------------------------------------------
# Newton-Picard lift


@dataclass
class LiftResult:
    pair: CylinderPair
    zeta: PairField
    base: Cylinder
    iterations: int
    residual_history: list
    correction_history: list
    triple_norm: float
    setup: LinearSetup = field(repr=False, default=None)
    projection_steps: int = 0


def _check_history(hist):
    if len(hist) < 3:
        return
    tail = hist[1:]
    if not np.all(np.isfinite(tail)):
        raise IterationDiverged("non-finite correction norms")
    grow = sum(1 for a, b in zip(tail[:-1], tail[1:]) if b >= a)
    if grow >= 3:
        raise IterationDiverged("correction norms are not contracting")


def newton_picard_lift(u: Cylinder, eps: float, P: Perturbation, p: float = 2.0, tol: float = 1e-10,
                       max_iter: int = 40, eps0: float = 0.25, project: bool = True, seed: PairField | None = None,
                       setup: LinearSetup | None = None) -> LiftResult:
    """Lift a heat-flow cylinder to an exact solution of the discrete eps-Floer system.

    The cylinder is first projected onto exact solutions of the discrete
    heat equation (same s-stencil), then the chord iteration
    zeta_nu = -D^*(D D^*)^{-1} F(Z_nu) with the fixed operator D = D^eps_u
    is run from Z_0 = ``seed`` (default zero) with v_0 = D+ u.
    """
    _require_flat(u)
    if eps > eps0:
        raise PreconditionFailed(f"eps = {eps} exceeds eps0 = {eps0}")
    steps = 0
    if project:
        from .heatflow import heat_residual

        if np.abs(heat_residual(u, P)).max() > newton_tolerance(u.n_t):
            proj = project_to_moduli(u, P)
            u, steps = proj.cylinder, proj.iterations
    if setup is not None and not (setup.u is u and setup.eps == eps):
        setup = None
    v0 = stencils.dplus_points(u.coords)
    Z = PairField.zeros_like(u) if seed is None else PairField(seed.xi.copy(), seed.eta.copy())
    res = pullback_F(u, v0, Z, eps, P)
    rnorm = norm_0(u, res, p, eps)
    res_hist = [rnorm]
    corr_hist = []
    it = 0
    while rnorm >= tol and it < max_iter:
        if setup is None:
            setup = linear_setup(u, eps, P)
        zeta = setup.correction(res)
        lam = 1.0
        for _ in range(6):
            trial = Z + zeta.scaled(lam)
            tres = pullback_F(u, v0, trial, eps, P)
            tnorm = norm_0(u, tres, p, eps)
            if tnorm < rnorm:
                break
            lam *= 0.5
        step = zeta.scaled(lam)
        corr_hist.append(eps_norms(u, step, p, eps).triple)
        Z, res, rnorm = trial, tres, tnorm
        res_hist.append(rnorm)
        it += 1
        _check_history(corr_hist)
        if lam < 1.0 and tnorm >= res_hist[-2]:
            break
    if rnorm >= max(tol, 1e-9):
        raise IterationDiverged(f"Floer residual {rnorm:.3e} after {it} iterations")
    pair = CylinderPair(u.with_coords(u.coords + Z.xi), v0 + Z.eta, eps, exact=rnorm <= 1e-9,
                        meta={"iterations": it, "residual": rnorm})
    return LiftResult(pair=pair, zeta=Z, base=u, iterations=it, residual_history=res_hist,
                      correction_history=corr_hist, triple_norm=eps_norms(u, Z, p, eps).triple, setup=setup,
                      projection_steps=steps)


def energy_density(w: CylinderPair, P: Perturbation):
    """Floer energy density per slice, integrated over t.

    s-derivatives are central inside and one-sided on the boundary slices.
    """
    u, v, eps = w.u.coords, w.v, w.eps
    h = w.u.h_s
    ds_u = stencils.ds_full(u, h)
    ds_v = stencils.ds_full(v, h)
    a = stencils.dminus(v) + _grad(u, P)
    b = stencils.dplus_points(u) - v
    return 0.5 * (np.sum(ds_u ** 2, axis=(1, 2)) + np.sum(a ** 2, axis=(1, 2))
                  + eps ** 2 * np.sum(ds_v ** 2, axis=(1, 2)) + np.sum(b ** 2, axis=(1, 2)) / eps ** 2) / w.u.n_t


def energy_eps(w: CylinderPair, P: Perturbation, s_range=None) -> float:
    """Trapezoid quadrature of the Floer energy density over the whole grid or a slice range."""
    dens = energy_density(w, P)
    if s_range is not None:
        lo, hi = s_range
        dens = dens[lo:hi]
    if dens.size < 2:
        return 0.0
    return float(np.trapezoid(dens, dx=w.u.h_s))


# ---------------------------------------------------------------------------
# uniqueness, time shifts and counting


def verify_uniqueness(u: Cylinder, w1: CylinderPair, w2: CylinderPair, eps: float, P: Perturbation,
                      delta: float = 1.0, setup: LinearSetup | None = None, tol: float = 1e-8) -> bool:
    """True when two exact pairs near u coincide.

    Pairs outside the tube |xi|_inf <= delta sqrt(eps) around u are distinct
    by definition; inside the tube both corrections must lie in the image of
    the adjoint of D^eps_u (defect at most 1e-6).  Corrections below ``tol``
    in sup norm are roundoff and carry no direction, so they are not tested.
    """
    setup = setup if setup is not None and setup.u is u and setup.eps == eps else linear_setup(u, eps, P)
    v0 = stencils.dplus_points(u.coords)
    inside = []
    for w in (w1, w2):
        if not w.exact:
            raise PreconditionFailed("both pairs must be exact")
        zeta = PairField(w.u.coords - u.coords, w.v - v0)
        in_tube = np.abs(zeta.xi).max() <= delta * np.sqrt(eps)
        inside.append(in_tube)
        scale = max(np.abs(zeta.xi).max(initial=0.0), np.abs(zeta.eta).max(initial=0.0))
        if in_tube and scale >= tol and setup.membership_defect(zeta) > 1e-6:
            raise HypothesisViolated(f"correction leaves the image of the adjoint ({setup.membership_defect(zeta):.2e})")
    if not all(inside):
        return False
    dist = max(np.abs(w1.u.coords - w2.u.coords).max(), np.abs(w1.v - w2.v).max())
    return bool(dist < tol)


@dataclass
class TimeShift:
    sigma: float
    constant: float
    bracket: tuple
    slope_min: float


def _shift_field(u: Cylinder, field_full, sigma):
    spline = CubicSpline(u.s, field_full, axis=0)
    return spline(np.clip(u.s + sigma, u.s[0], u.s[-1]))


def fit_time_shift(u: Cylinder, w: CylinderPair, eps: float, P: Perturbation, p: float = 2.0,
                   delta: float = 1.0, setup: LinearSetup | None = None, samples: int = 9) -> TimeShift:
    """Shift sigma for which w - (u_sigma, D+ u_sigma) is orthogonal to the near kernel at u_sigma.

    theta(sigma) = -<Z_sigma, zeta(sigma)>_eps with Z_sigma the near-kernel
    direction of D^eps at u, carried along by the same s-shift.
    """
    setup = setup if setup is not None and setup.u is u and setup.eps == eps else linear_setup(u, eps, P)
    kern = setup.kernel
    kern_xi = kern.xi
    kern_eta = kern.eta
    shift_lift = np.round(np.mean(w.u.coords - u.coords, axis=(0, 1)))
    wc = w.u.coords - shift_lift

    def zeta(sigma):
        us = _shift_field(u, u.coords, sigma)
        return PairField(wc - us, w.v - stencils.dplus_points(us))

    def theta(sigma):
        z = zeta(sigma)
        zk = PairField(_shift_field(u, kern_xi, sigma), _shift_field(u, kern_eta, sigma))
        zk.xi[0] = zk.xi[-1] = 0.0
        zk.eta[0] = zk.eta[-1] = 0.0
        z.xi[0] = z.xi[-1] = 0.0
        z.eta[0] = z.eta[-1] = 0.0
        return -pairing_eps(u, zk, z, eps)

    probe = np.linspace(-1.0, 1.0, 21)
    tube = [np.abs(zeta(s).xi).max() for s in probe]
    if min(tube) > delta * np.sqrt(eps):
        raise PreconditionFailed("pair lies outside the tube around every shift of u")
    half = 0.25
    limit = 0.25 * u.S
    while True:
        lo, hi = -half, half
        t_lo, t_hi = theta(lo), theta(hi)
        if t_lo < 0 < t_hi:
            break
        half *= 2.0
        if half > limit:
            raise NoRoot("no sign change of theta within the admissible bracket")
    grid = np.linspace(lo, hi, samples)
    vals = np.array([theta(s) for s in grid])
    slopes = np.diff(vals) / np.diff(grid)
    if np.any(slopes <= 0):
        raise NotMonotone("theta is not increasing on the bracket")
    sigma = brentq(theta, lo, hi, xtol=1e-13, rtol=1e-14, maxiter=200)
    z = zeta(sigma)
    scale = _lp(u, z.xi[1:-1], p) + eps ** 2
    return TimeShift(sigma=float(sigma), constant=float(abs(sigma) / scale), bracket=(lo, hi),
                     slope_min=float(slopes.min()))


@dataclass
class MepsResult:
    lifts: list
    cylinders: list
    distinct: bool
    uniqueness: list
    alignment: list


def enumerate_M_eps(xm, xp, eps: float, P: Perturbation, cylinders=None, p: float = 2.0, eps0: float = 0.25,
                    recheck: bool = True) -> MepsResult:
    """Lift every heat cylinder from xm to xp and certify that the lifts are pairwise distinct."""
    if xm.index - xp.index != 1:
        raise IndexMismatch(f"index difference {xm.index - xp.index} is not one")
    cyls = enumerate_M0(xm, xp, P) if cylinders is None else cylinders
    lifts = [newton_picard_lift(c, eps, P, p=p, eps0=eps0) for c in cyls]
    uniq = []
    if recheck:
        rng = np.random.default_rng(7)
        for lift in lifts:
            base = lift.base
            bump = np.exp(-base.s ** 2)[:, None, None] * np.ones_like(base.coords)
            seed = PairField(1e-6 * rng.standard_normal() * bump, np.zeros_like(base.coords))
            seed.xi[0] = seed.xi[-1] = 0.0
            if lift.setup is None:
                lift.setup = linear_setup(base, eps, P)
            kern = lift.setup.kernel
            coef = pairing_eps(base, kern, seed, eps) / pairing_eps(base, kern, kern, eps)
            seed = seed - kern.scaled(coef)
            again = newton_picard_lift(base, eps, P, p=p, eps0=eps0, project=False, seed=seed, setup=lift.setup)
            uniq.append(verify_uniqueness(base, lift.pair, again.pair, eps, P, setup=lift.setup, tol=1e-8))
    align = []
    distinct = True
    for i, li in enumerate(lifts):
        for j, lj in enumerate(lifts):
            if i == j:
                continue
            try:
                shift = fit_time_shift(li.base, lj.pair, eps, P, p=p, setup=li.setup)
            except (PreconditionFailed, NoRoot, NotMonotone):
                align.append((i, j, None))
                continue
            shifted = shift_cylinder(li.pair.u, shift.sigma)
            d = np.abs(shifted.coords - lj.pair.u.coords).max()
            align.append((i, j, float(d)))
            if d < 1e-6:
                distinct = False
    return MepsResult(lifts=lifts, cylinders=list(cyls), distinct=distinct, uniqueness=uniq, alignment=align)


# ---------------------------------------------------------------------------
# quadratic remainders


@dataclass
class RemainderReport:
    first: float
    second: float
    first_ratio: float
    second_ratio: float


def quadratic_remainder_measure(u: Cylinder, v, Z: PairField, zeta: PairField, eps: float, p: float,
                                P: Perturbation) -> RemainderReport:
    """Taylor remainders of F_{u,v} in the (0,p,eps^{3/2}) norm and their ratios to the quadratic bounds."""
    delta = INJECTIVITY_RADIUS
    if np.abs(Z.xi).max(initial=0) >= delta or np.abs(zeta.xi).max(initial=0) >= delta:
        raise PreconditionFailed("fields exceed the chart threshold")
    base = pullback_F(u, v, Z, eps, P)
    full = pullback_F(u, v, Z + zeta, eps, P)
    moved = u.with_coords(u.coords + Z.xi)
    dz = apply_D_eps(moved, np.asarray(v) + Z.eta, zeta, eps, P)
    d0 = apply_D_eps(u, v, zeta, eps, P)
    w = eps ** 1.5
    r1 = norm_0(u, full - base - dz, p, w)
    r2 = norm_0(u, dz - d0, p, w)
    nz = eps_norms(u, zeta, p, eps).triple
    nZ = eps_norms(u, Z, p, eps).triple
    xi_inf = float(np.abs(zeta.xi).max(initial=0))
    eta_inf = float(np.abs(zeta.eta).max(initial=0))
    b1 = nz * (eps ** -0.5 * xi_inf + xi_inf ** 2 / eps) + eps ** (-1 - 1.5 / p) * nZ * nz * (
        xi_inf + eps ** 0.5 * eta_inf)
    b2 = (eps ** (-0.5 - 1.5 / p) * nZ + eps ** (-1 - 3.5 / p) * nZ ** 2) * nz
    return RemainderReport(first=r1, second=r2, first_ratio=r1 / b1 if b1 > 0 else 0.0,
                           second_ratio=r2 / b2 if b2 > 0 else 0.0)
