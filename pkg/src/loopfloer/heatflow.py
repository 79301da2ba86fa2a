"""Heat flow on the loop space of a flat torus.

The semi-discrete flow is d u/ds = L u + grad V(u) with L the periodic
second difference in t, which is the exact L2 gradient flow of the discrete
action.  Connecting cylinders are built by shooting along unstable
eigenvectors with a stiff ODE integrator and resampling on a uniform s-grid;
their linearization D0 = d/ds - L - H is discretized with central
s-differences on interior slices, the boundary slices being held fixed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from . import kernels, stencils
from .critical import (PeriodicOrbit, find_orbit, hessian_matrix, newton_tolerance, orbit_residual,
                       spectrum)
from .errors import (EigenvalueCollision, IndexMismatch, NoConvergence, PreconditionFailed,
                     ProjectionFailed, StepRejected, UnsupportedBackend)
from .loops import DiscreteLoop, FourierPotential, Perturbation, classical_action, lp_norm

# ---------------------------------------------------------------------------
# cylinders


@dataclass
class Cylinder:
    """Loops u(s_j, .) on a uniform s-grid; coords has shape (N_s, N_t, m) and is a continuous lift."""

    backend: object
    coords: np.ndarray
    s: np.ndarray
    endpoints: tuple = (None, None)
    meta: dict = field(default_factory=dict)

    @property
    def h_s(self) -> float:
        return float(self.s[1] - self.s[0])

    @property
    def S(self) -> float:
        return float(0.5 * (self.s[-1] - self.s[0]))

    @property
    def n_s(self) -> int:
        return self.coords.shape[0]

    @property
    def n_t(self) -> int:
        return self.coords.shape[1]

    def loop(self, j: int) -> DiscreteLoop:
        return DiscreteLoop(self.backend, self.coords[j], check=False)

    def actions(self, P: Perturbation):
        if self.backend.flat and isinstance(P, FourierPotential):
            n = self.n_t
            vel = stencils.dplus_points(self.coords)
            t = np.broadcast_to(np.arange(n) / n, self.coords.shape[:-1])
            return 0.5 * np.sum(vel * vel, axis=(1, 2)) / n - np.mean(P.local(t, self.coords)[0], axis=1)
        return np.array([classical_action(self.loop(j), P) for j in range(self.n_s)])

    def with_coords(self, coords, **meta):
        m = dict(self.meta)
        m.update(meta)
        return Cylinder(self.backend, np.array(coords, dtype=float), self.s.copy(), self.endpoints, m)

    def endpoint_distances(self):
        out = []
        for j, orb in ((0, self.endpoints[0]), (-1, self.endpoints[1])):
            out.append(np.nan if orb is None else self.loop(j).distance(orb.loop))
        return tuple(out)


def flow_field(coords, P: Perturbation):
    """L u + grad V(u) slice by slice (coords of shape (..., N, m))."""
    return stencils.laplacian_points(coords) + _gradients(coords, P)


def _gradients(coords, P):
    if isinstance(P, FourierPotential):
        return P.slice_gradients(coords)
    return P.slice_gradients(coords, _flat_backend(coords.shape[-1]))


def _hessian_blocks(coords, P):
    """Per-node Hessian blocks for every slice, with rank terms when present."""
    if isinstance(P, FourierPotential):
        return P.slice_hessians(coords), None
    backend = _flat_backend(coords.shape[-1])
    blocks = []
    terms = []
    for c in coords.reshape((-1,) + coords.shape[-2:]):
        b, tm = P.hessian_parts(DiscreteLoop(backend, c, check=False))
        blocks.append(b)
        terms.append(tm)
    return np.stack(blocks).reshape(coords.shape + (coords.shape[-1],)), terms


def _flat_backend(m):
    from .geometry import FlatTorus

    return FlatTorus(m)


def parabolic_energy(u: Cylinder, P: Perturbation, method: str = "field") -> float:
    """Energy: integral of |d_s u|^2 over the cylinder (trapezoid in s).

    ``method="field"`` evaluates d_s u through the flow vector field
    L u + grad V(u), which equals d_s u on solutions and is free of
    s-discretization error; ``method="difference"`` uses finite differences.
    """
    if method == "field":
        ds = flow_field(u.coords, P)
    else:
        ds = stencils.ds_full(u.coords, u.h_s)
    dens = np.sum(ds * ds, axis=(1, 2)) / u.n_t
    return float(np.trapezoid(dens, dx=u.h_s))


# ---------------------------------------------------------------------------
# time stepping


def step_heat(x: DiscreteLoop, P: Perturbation, h: float, tol: float | None = None) -> DiscreteLoop:
    """One semi-implicit step: (1 - h L) d = h (L x + grad V(x)), x <- x + d."""
    if h <= 0:
        raise ValueError("step size must be positive")
    if not x.backend.flat:
        raise UnsupportedBackend("heat stepping is implemented on flat tori only")
    n, m = x.coords.shape
    tol = 1e-12 * n if tol is None else tol
    rate = orbit_residual(x, P)
    off = np.full(n, -h * n * n)
    d = kernels.cyclic_tridiag_solve(off, np.full(n, 1.0 + 2.0 * h * n * n), off, h * rate.T).T
    out = x.with_coords(x.coords + d)
    if classical_action(out, P) > classical_action(x, P) + tol:
        raise StepRejected(f"action increased at step size {h:g}")
    return out


@dataclass
class FlowResult:
    orbit: PeriodicOrbit
    decay_rate: float
    rate_flagged: bool
    s_total: float
    actions: np.ndarray
    rate_history: np.ndarray
    step: float


def _fit_rate(l2s, h, window=0.25):
    """Continuous decay rate of the scheme's per-step contraction factor."""
    good = np.nonzero(l2s > 1e-13)[0]
    if good.size < 8:
        return np.nan
    tail = l2s[good]
    start = int((1.0 - window) * tail.size)
    y = np.log(tail[start:])
    if y.size < 4:
        return np.nan
    slope = np.polyfit(np.arange(y.size), y, 1)[0]
    q = np.exp(slope)
    # the linearized step multiplies the slowest mode by q = 1 - h * rho
    return float((1.0 - q) / h)


def evolve_to_orbit(x: DiscreteLoop, P: Perturbation, h: float | None = None, s_budget: float = 2000.0,
                    stop: float = 1e-11) -> FlowResult:
    """Flow until sup |d_s u| < ``stop``; return the limit orbit and the fitted decay rate."""
    if not x.backend.flat:
        raise UnsupportedBackend("heat flow is implemented on flat tori only")
    n, m = x.coords.shape
    rate0 = orbit_residual(x, P)
    if np.abs(rate0).max() < stop:
        orb = find_orbit(x, P)
        return FlowResult(orb, np.nan, True, 0.0, np.array([orb.action]), np.zeros(0), 0.0)
    if h is None:
        h = 0.2 / max(abs(spectrum(x, P, k=1)[0]), 1e-3)
        h = min(h, 1.0)
    coords = x.coords.copy()
    s_total = 0.0
    actions = [classical_action(x, P)]
    l2_hist = []
    use_kernel = isinstance(P, FourierPotential)
    t = x.t
    while s_total < s_budget:
        chunk = max(1, min(200, int((s_budget - s_total) / h)))
        if use_kernel:
            coords, acts, sups, l2s, done = kernels.heat_steps(coords, x.winding.astype(float), t, h, chunk,
                                                               *P.args, 1e-12 * n)
        else:
            acts, sups, l2s = [actions[-1]], [], []
            done = 0
            loop = x.with_coords(coords)
            for _ in range(chunk):
                r = orbit_residual(loop, P)
                sups.append(np.abs(r).max())
                l2s.append(np.sqrt(np.sum(r * r) / n))
                if sups[-1] < stop:
                    sups.pop()
                    l2s.pop()
                    break
                try:
                    loop = step_heat(loop, P, h)
                except StepRejected:
                    break
                acts.append(classical_action(loop, P))
                done += 1
            coords = loop.coords
            acts, sups, l2s = map(np.asarray, (acts, sups, l2s))
        s_total += done * h
        actions.extend(list(acts[1:]))
        l2_hist.extend(list(l2s))
        below = np.nonzero(sups < stop)[0]
        final = orbit_residual(x.with_coords(coords), P)
        if below.size or np.abs(final).max() < stop:
            break
        if done < chunk:
            h *= 0.5
    final_loop = x.with_coords(coords)
    if np.abs(orbit_residual(final_loop, P)).max() >= stop:
        raise NoConvergence(f"flow not converged within s-budget {s_budget}")
    orb = find_orbit(final_loop, P)
    l2_hist = np.asarray(l2_hist)
    rho = _fit_rate(l2_hist, h)
    return FlowResult(orb, rho, not np.isfinite(rho), s_total, np.asarray(actions), l2_hist, h)


# ---------------------------------------------------------------------------
# shooting along unstable manifolds


def _flow_rhs(P, shape):
    def rhs(s, y):
        return flow_field(y.reshape(shape), P).reshape(-1)

    return rhs


def _flow_jac(P, shape):
    n, m = shape
    lap = stencils.laplacian_matrix(n, m)

    def jac(s, y):
        blocks, terms = _hessian_blocks(y.reshape(1, n, m), P)
        hm = sp.block_diag(list(blocks[0]), format="csr")
        out = lap + hm
        if terms and terms[0]:
            dense = out.toarray()
            for c, a, b in terms[0]:
                dense += (c / n) * np.outer(a.reshape(-1), b.reshape(-1))
            return dense
        return out

    return jac


def _unit_mode(vec):
    """Normalize to unit L2 norm (1/N weights) with a deterministic sign."""
    n = vec.shape[0]
    vec = vec / np.sqrt(np.sum(vec * vec) / n)
    tot = vec.sum()
    if abs(tot) < 1e-8 * np.abs(vec).sum():
        tot = vec.reshape(-1)[np.argmax(np.abs(vec))]
    return vec * np.sign(tot)


@dataclass
class Trajectory:
    """Dense representation of one forward flow line."""

    start: np.ndarray
    growth: float
    mode: np.ndarray
    delta: float
    pieces: list
    s_end: float
    limit: PeriodicOrbit

    def __call__(self, s):
        s = np.atleast_1d(np.asarray(s, dtype=float))
        out = np.empty((s.size,) + self.start.shape)
        for i, si in enumerate(s):
            if si <= 0.0:
                out[i] = self.start + self.delta * np.exp(self.growth * si) * self.mode
                continue
            sc = min(si, self.s_end)
            for lo, hi, sol in self.pieces:
                if lo <= sc <= hi:
                    out[i] = sol(sc).reshape(self.start.shape)
                    break
        return out


def flow_line(y0, P: Perturbation, s_max: float = 2000.0, stop: float = 1e-12, chunk: float = 20.0,
              rtol: float = 1e-12, atol: float = 1e-14):
    """Integrate the semi-discrete flow from y0 until sup |d_s u| < ``stop``.

    Returns (pieces, s_end, y_end) with ``pieces`` a list of dense-output
    segments (lo, hi, callable).
    """
    shape = y0.shape
    rhs = _flow_rhs(P, shape)
    jac = _flow_jac(P, shape)
    y = y0.reshape(-1).copy()
    s = 0.0
    pieces = []
    while s < s_max:
        sol = solve_ivp(rhs, (s, s + chunk), y, method="BDF", jac=jac, rtol=rtol, atol=atol, dense_output=True)
        if not sol.success:
            raise NoConvergence(f"flow integration failed: {sol.message}")
        pieces.append((s, s + chunk, sol.sol))
        s += chunk
        y = sol.y[:, -1]
        if np.abs(rhs(s, y)).max() < stop:
            return pieces, s, y.reshape(shape)
    raise NoConvergence(f"flow line not converged by s = {s_max}")


def _polish_limit(y_end, template: DiscreteLoop, P):
    return find_orbit(template.with_coords(y_end), P)


def shoot_unstable(x: PeriodicOrbit, direction: int, delta: float, P: Perturbation, h_s: float = 0.05,
                   endpoint_tol: float = 1e-9, s_max: float = 2000.0, mode=None, growth=None) -> Cylinder:
    """Cylinder leaving x along +/- its unstable eigenvector and converging to a limit orbit.

    The slice whose action is the mean of the endpoint actions sits at s = 0.
    The half-length S is the smallest multiple of h_s that is at least
    12 / (smaller endpoint gap) and puts both boundary slices within
    ``endpoint_tol`` of the endpoint orbits.
    """
    if not x.loop.backend.flat:
        raise UnsupportedBackend("shooting is implemented on flat tori only")
    if mode is None:
        if x.index != 1:
            raise PreconditionFailed("shooting along a single direction needs an index-1 orbit")
        w, v = spectrum(x, P, k=1, vectors=True)
        mode = _unit_mode(v[:, 0].reshape(x.loop.coords.shape))
        growth = -float(w[0])
    if not 1e-6 <= delta <= 1e-3:
        raise PreconditionFailed("shoot offset must lie in [1e-6, 1e-3]")
    mode = direction * np.asarray(mode, dtype=float)
    start = x.loop.coords
    y0 = start + delta * mode
    pieces, s_end, y_end = flow_line(y0, P, s_max=s_max)
    limit = _polish_limit(y_end, x.loop, P)
    traj = Trajectory(start=start, growth=growth, mode=mode, delta=delta, pieces=pieces, s_end=s_end, limit=limit)
    return _resample(traj, x, limit, P, h_s, endpoint_tol)


def _resample(traj: Trajectory, xm: PeriodicOrbit, xp: PeriodicOrbit, P, h_s, endpoint_tol, s_cut=None,
              tail=None):
    loop = xm.loop
    mid = 0.5 * (xm.action + xp.action)

    def act(s):
        return classical_action(loop.with_coords(traj(s)[0]), P) - mid

    hi = traj.s_end if s_cut is None else s_cut
    s_star = brentq(act, -1.0 / max(traj.growth, 1e-3), hi, xtol=1e-14, rtol=1e-15, maxiter=200)
    gap = min(xm.nondeg_margin, xp.nondeg_margin)
    s_default = 12.0 / gap
    # backward tail: distance decays like delta * exp(growth * s) * |mode|_inf
    amp = traj.delta * np.abs(traj.mode).max()
    s_back = s_star - np.log(endpoint_tol / amp) / traj.growth if amp > endpoint_tol else 0.0
    # forward: first s at which the trajectory stays within tolerance of the limit
    probe = np.arange(s_star, (traj.s_end if s_cut is None else s_cut) + h_s, h_s)
    vals = traj(probe) if tail is None else np.stack([tail(si) for si in probe])
    dist = np.max(np.abs(_wrapped(vals - xp.loop.coords[None])), axis=(1, 2))
    inside = np.nonzero(dist > endpoint_tol)[0]
    s_fwd = probe[inside[-1] + 1] - s_star if inside.size and inside[-1] + 1 < probe.size else (
        probe[-1] - s_star if inside.size else 0.0)
    S = max(s_default, s_back, s_fwd)
    n_half = int(np.ceil(S / h_s))
    s = h_s * np.arange(-n_half, n_half + 1)
    if tail is None:
        coords = traj(s + s_star)
    else:
        coords = np.stack([tail(si) for si in s + s_star])
    cyl = Cylinder(loop.backend, coords, s, (xm, xp),
                   {"delta": traj.delta, "s_shift": float(s_star), "h_s": h_s})
    d0, d1 = cyl.endpoint_distances()
    if max(d0, d1) > max(endpoint_tol * 10, 1e-6):
        raise NoConvergence(f"boundary slices too far from endpoints ({d0:.2e}, {d1:.2e})")
    return cyl


def _wrapped(d):
    return d - np.round(d)


def enumerate_M0(xm: PeriodicOrbit, xp: PeriodicOrbit, P: Perturbation, delta: float = 1e-5, h_s: float = 0.05,
                 endpoint_tol: float = 1e-9, scan: int = 16) -> list:
    """One representative per shift class of connecting cylinders from xm to xp."""
    if xm.index - xp.index != 1:
        raise IndexMismatch(f"index difference {xm.index - xp.index} is not one")
    if xm.component != xp.component:
        return []
    if xm.index == 1:
        out = []
        for direction in (1, -1):
            cyl = shoot_unstable(xm, direction, delta, P, h_s=h_s, endpoint_tol=endpoint_tol)
            if cyl.endpoints[1].loop.distance(xp.loop) < 1e-6:
                cyl.endpoints = (xm, xp)
                cyl.meta["direction"] = direction
                out.append(cyl)
        return out
    if xm.index == 2:
        return _scan_two_dim(xm, xp, P, delta, h_s, endpoint_tol, scan)
    raise UnsupportedBackend("unstable manifolds of dimension above two are not scanned")


def _landing_labeler(xm: PeriodicOrbit, P, h: float = 0.05, s_max: float = 200.0):
    """Cheap basin classifier: the lifted mean of the endpoint of a semi-implicit flow run."""
    loop = xm.loop
    if isinstance(P, FourierPotential):
        nsteps = int(s_max / h)

        def label(y0):
            y, *_ = kernels.heat_steps(y0, loop.winding.astype(float), loop.t, h, nsteps, *P.args, np.inf)
            return tuple(np.round(np.mean(y, axis=0), 3))
    else:
        def label(y0):
            _, _, y = flow_line(y0, P, s_max=s_max, stop=1e-6, rtol=1e-8, atol=1e-12)
            return tuple(np.round(np.mean(y, axis=0), 3))
    return label


def _scan_two_dim(xm, xp, P, delta, h_s, endpoint_tol, scan):
    """Connecting cylinders into an index-one orbit from an index-two orbit.

    Directions on the circle of unstable eigenvectors are classified by the
    lifted landing point; every change of label between neighbouring
    directions is refined by bisection, and the accurately integrated flow
    line at the refined direction is cut at its closest approach to xp and
    continued with the stable linear flow.
    """
    w, v = spectrum(xm, P, k=2, vectors=True)
    shape = xm.loop.coords.shape
    e1 = _unit_mode(v[:, 0].reshape(shape))
    e2 = _unit_mode(v[:, 1].reshape(shape))
    growth = -float(np.max(w[:2]))
    label = _landing_labeler(xm, P)

    def mode(theta):
        return np.cos(theta) * e1 + np.sin(theta) * e2

    def classify(theta):
        return label(xm.loop.coords + delta * mode(theta))

    thetas = 2 * np.pi * (np.arange(scan) + 0.25) / scan
    labels = [classify(th) for th in thetas]
    out = []
    for i in range(scan):
        j = (i + 1) % scan
        if labels[i] == labels[j]:
            continue
        lo, hi = thetas[i], thetas[j] + (2 * np.pi if j == 0 else 0.0)
        lab_lo = labels[i]
        while hi - lo > 1e-12:
            mid = 0.5 * (lo + hi)
            if classify(mid) == lab_lo:
                lo = mid
            else:
                hi = mid
        theta = 0.5 * (lo + hi)
        m = mode(theta)
        pieces, s_end, y_end = flow_line(xm.loop.coords + delta * m, P)
        limit = _polish_limit(y_end, xm.loop, P)
        traj = Trajectory(xm.loop.coords, growth, m, delta, pieces, s_end, limit)
        cyl = _cut_near(traj, xm, xp, P, h_s, endpoint_tol)
        if cyl is not None:
            cyl.meta["theta"] = float(theta)
            out.append(cyl)
    return out


def _cut_near(traj, xm, xp, P, h_s, endpoint_tol):
    probe = np.arange(0.0, traj.s_end, 0.5 * h_s)
    vals = traj(probe)
    dist = np.max(np.abs(_wrapped(vals - xp.loop.coords[None])), axis=(1, 2))
    k = int(np.argmin(dist))
    if dist[k] > 1e-4:
        return None
    s_cut = probe[k]
    base = vals[k]
    shift = np.round(np.mean(base - xp.loop.coords, axis=0))
    target = xp.loop.coords + shift
    a = hessian_matrix(xp, P)
    w, v = np.linalg.eigh(a)
    stable = w > 0
    coeff = v[:, stable].T @ (base - target).reshape(-1)

    def tail(s):
        if s <= s_cut:
            return traj(s)[0]
        dec = np.exp(-w[stable] * (s - s_cut)) * coeff
        return target + (v[:, stable] @ dec).reshape(target.shape)

    cyl = _resample(traj, xm, xp, P, h_s, max(endpoint_tol, 1e-6), s_cut=s_cut, tail=tail)
    cyl.meta["closest_approach"] = float(dist[k])
    return cyl


# ---------------------------------------------------------------------------
# linearized operator


def _interior_shape(u: Cylinder):
    return (u.n_s - 2, u.n_t, u.coords.shape[2])


def node_hessian_matrix(blocks, terms, n: int, stride: int):
    """Sparse slice-by-slice Hessian; slice j occupies rows j*stride .. j*stride + n*m."""
    ns, _, m, _ = blocks.shape
    blk = n * m
    base = (np.arange(ns) * stride)[:, None, None, None] + (np.arange(n) * m)[None, :, None, None]
    rows = np.broadcast_to(base + np.arange(m)[None, None, :, None], blocks.shape)
    cols = np.broadcast_to(base + np.arange(m)[None, None, None, :], blocks.shape)
    mat = sp.coo_matrix((blocks.reshape(-1), (rows.reshape(-1), cols.reshape(-1))),
                        shape=(ns * stride, ns * stride)).tocsr()
    if terms is not None and any(terms):
        extra = sp.lil_matrix(mat.shape)
        for j, tm in enumerate(terms):
            if not tm:
                continue
            dense = np.zeros((blk, blk))
            for c, a, b in tm:
                dense += (c / n) * np.outer(a.reshape(-1), b.reshape(-1))
            extra[j * stride:j * stride + blk, j * stride:j * stride + blk] = dense
        mat = mat + extra.tocsr()
    return mat


def d0_matrix(u: Cylinder, P: Perturbation):
    """Sparse D0 on interior slices (boundary values held at zero)."""
    ns, n, m = _interior_shape(u)
    blk = n * m
    lap = stencils.laplacian_matrix(n, m)
    blocks, terms = _hessian_blocks(u.coords[1:-1], P)
    main = sp.kron(sp.identity(ns), -lap) - node_hessian_matrix(blocks, terms, n, blk)
    ds = sp.diags([np.full(ns - 1, 1.0), np.full(ns - 1, -1.0)], [1, -1]) / (2.0 * u.h_s)
    return (main + sp.kron(ds, sp.identity(blk))).tocsc()


def _interior(field):
    return np.asarray(field)[1:-1]


def _embed(u: Cylinder, interior):
    out = np.zeros_like(u.coords)
    out[1:-1] = interior.reshape(_interior_shape(u))
    return out


def apply_D0(u: Cylinder, xi, P: Perturbation):
    """D0 xi = d_s xi - L xi - H xi on interior slices (central s-difference)."""
    xi = np.asarray(xi, dtype=float)
    blocks, terms = _hessian_blocks(u.coords[1:-1], P)
    inner = xi[1:-1]
    hx = np.einsum("jkab,jkb->jka", blocks, inner)
    if terms is not None:
        n = u.n_t
        for j, tm in enumerate(terms):
            for c, a, b in tm:
                hx[j] += c * np.sum(b * inner[j]) / n * a
    out = stencils.ds_central(xi, u.h_s) - stencils.laplacian(inner) - hx
    return _embed(u, out)


def apply_D0_adjoint(u: Cylinder, xi, P: Perturbation):
    """Adjoint of D0 with respect to the L2 pairing on interior slices."""
    xi = np.asarray(xi, dtype=float)
    blocks, terms = _hessian_blocks(u.coords[1:-1], P)
    inner = xi[1:-1]
    hx = np.einsum("jkab,jkb->jka", np.swapaxes(blocks, -1, -2), inner)
    if terms is not None:
        n = u.n_t
        for j, tm in enumerate(terms):
            for c, a, b in tm:
                hx[j] += c * np.sum(a * inner[j]) / n * b
    padded = xi.copy()
    padded[0] = 0.0
    padded[-1] = 0.0
    out = -stencils.ds_central(padded, u.h_s) - stencils.laplacian(inner) - hx
    return _embed(u, out)


def cylinder_pairing(u: Cylinder, a, b) -> float:
    """L2 pairing h_s/N_t * sum over interior slices."""
    return float(np.sum(_interior(a) * _interior(b)) * u.h_s / u.n_t)


def heat_residual(u: Cylinder, P: Perturbation):
    """Central-difference residual d_s u - L u - grad V(u) on interior slices."""
    return stencils.ds_central(u.coords, u.h_s) - flow_field(u.coords[1:-1], P)


def cylinder_norm(u: Cylinder, field_interior, p=2.0) -> float:
    v = np.linalg.norm(np.asarray(field_interior), axis=-1)
    if np.isinf(p):
        return float(v.max())
    return float((np.sum(v ** p) * u.h_s / u.n_t) ** (1.0 / p))


# ---------------------------------------------------------------------------
# near-kernel pair and deflated solves


class DeflatedSolver:
    """LU factorization of a square operator with a one-dimensional near kernel.

    The operator is used in scaled coordinates where the relevant inner
    product is Euclidean.  ``k`` and ``l`` are the right and left singular
    vectors of the smallest singular value, found by inverse iteration.
    ``solve(f)`` returns the solution of D z = f - <l, f> l orthogonal to k.
    """

    def __init__(self, mat, seed_right=None, iterations: int = 4, n_kernel: int = 1):
        try:
            self.lu = spla.splu(sp.csc_matrix(mat))
        except RuntimeError as exc:  # singular factor
            from .errors import LinearSolveFailed

            raise LinearSolveFailed(str(exc)) from exc
        self.mat = mat
        self.n_kernel = n_kernel
        size = mat.shape[0]
        rng = np.random.default_rng(12345)
        if n_kernel == 0:
            self.k = np.zeros((0, size))
            self.l = np.zeros((0, size))
            self.sigma = np.zeros(0)
            return
        k = rng.standard_normal(size) if seed_right is None else np.asarray(seed_right, dtype=float).copy()
        k /= np.linalg.norm(k)
        l_vec = rng.standard_normal(size)
        l_vec /= np.linalg.norm(l_vec)
        for _ in range(iterations):
            k = self.lu.solve(self.lu.solve(k, trans="T"))
            k /= np.linalg.norm(k)
            l_vec = self.lu.solve(self.lu.solve(l_vec), trans="T")
            l_vec /= np.linalg.norm(l_vec)
        dk = mat @ k
        sigma = float(np.linalg.norm(dk))
        if sigma > 0 and np.dot(dk, l_vec) < 0:
            l_vec = -l_vec
        if seed_right is not None and np.dot(k, seed_right) < 0:
            k = -k
            l_vec = -l_vec
        self.k = k[None, :]
        self.l = l_vec[None, :]
        self.sigma = np.array([sigma])

    def solve(self, f):
        f = np.asarray(f, dtype=float)
        g = f - self.l.T @ (self.l @ f)
        z = self.lu.solve(g)
        return z - self.k.T @ (self.k @ z)

    def solve_plain(self, f, trans="N"):
        return self.lu.solve(np.asarray(f, dtype=float), trans=trans)


def spectral_flow_index(u: Cylinder, P: Perturbation, k: int = 6, collision_tol: float = 1e-9) -> int:
    """Signed count of sign changes of the lowest slice-Hessian eigenvalues along s."""
    n, m = u.n_t, u.coords.shape[2]
    k = min(k, n * m)
    eig = np.empty((u.n_s, k))
    chunk = max(1, 2 ** 22 // (n * m) ** 2)
    for j0 in range(0, u.n_s, chunk):
        mats = np.stack([hessian_matrix(u.loop(j), P) for j in range(j0, min(j0 + chunk, u.n_s))])
        eig[j0:j0 + len(mats)] = np.linalg.eigvalsh(mats)[:, :k]
    count = 0
    for j in range(u.n_s - 1):
        a, b = eig[j], eig[j + 1]
        for i in range(k):
            if np.sign(a[i]) == np.sign(b[i]):
                continue
            for row in (a, b):
                nb = [row[q] for q in (i - 1, i + 1) if 0 <= q < k]
                if nb and min(abs(row[i] - z) for z in nb) < collision_tol:
                    raise EigenvalueCollision(f"eigenvalues collide at slice {j}")
            count += 1 if a[i] < 0 < b[i] else -1
    return count


def concatenate(u1: Cylinder, u2: Cylinder) -> Cylinder:
    """Glue two cylinders whose end/start slices agree (lifts aligned)."""
    shift = np.round(np.mean(u1.coords[-1] - u2.coords[0], axis=0))
    coords = np.concatenate([u1.coords, u2.coords[1:] + shift], axis=0)
    s = u1.h_s * np.arange(coords.shape[0])
    s = s - 0.5 * (s[-1] - s[0])
    return Cylinder(u1.backend, coords, s, (u1.endpoints[0], u2.endpoints[1]), {"concatenated": True})


def reference_operator(u: Cylinder):
    """d_s - L + 1 on interior slices: a fixed invertible comparison operator."""
    ns, n, m = _interior_shape(u)
    lap = stencils.laplacian_matrix(n, m)
    main = sp.block_diag([sp.identity(n * m) - lap] * ns, format="csr")
    ds = sp.diags([np.full(ns - 1, 1.0), np.full(ns - 1, -1.0)], [1, -1]) / (2.0 * u.h_s)
    return (main + sp.kron(ds, sp.identity(n * m))).tocsc()


def surjectivity_margin(u: Cylinder, P: Perturbation, n_kernel: int | None = None, power_steps: int = 30) -> float:
    """Surjectivity margin of D0 after removing its expected near kernel.

    The operator is measured relative to the invertible reference
    Q = d_s - L + 1 (so the margin is the injectivity modulus of the
    adjoint of D0 Q^{-1}, normalized by its operator norm), skipping the
    index-many smallest singular values that come from s-translation.
    Returns 0 when an endpoint Hessian is degenerate, since D0 is then not
    Fredholm.
    """
    for orb in u.endpoints:
        if orb is not None:
            if np.min(np.abs(spectrum(orb.loop, P, k=orb.loop.coords.size))) < 1e-8:
                return 0.0
    if n_kernel is None:
        n_kernel = max(0, u.endpoints[0].index - u.endpoints[1].index) if all(u.endpoints) else 0
    d = d0_matrix(u, P)
    q = reference_operator(u)
    lu_d = spla.splu(d)
    size = d.shape[0]
    # largest singular values of Q D^{-1} are the inverses of the smallest of D Q^{-1}
    inv = spla.LinearOperator((size, size), matvec=lambda x: q @ lu_d.solve(x),
                              rmatvec=lambda x: lu_d.solve(q.T @ x, trans="T"), dtype=float)
    kk = n_kernel + 1
    sv = spla.svds(inv, k=kk, return_singular_vectors=False, random_state=0, tol=1e-6)
    sv = np.sort(sv)[::-1]
    smallest = 1.0 / sv[n_kernel]
    lu_q = spla.splu(q)
    # power iteration on (D Q^{-1})^T (D Q^{-1}); the top singular values cluster near 1
    vec = np.random.default_rng(0).standard_normal(size)
    top = 0.0
    for _ in range(power_steps):
        vec /= np.linalg.norm(vec)
        w = d @ lu_q.solve(vec)
        top = float(np.linalg.norm(w))
        vec = lu_q.solve(d.T @ w, trans="T")
    return float(smallest / top)


# ---------------------------------------------------------------------------
# projection onto the moduli space


@dataclass
class Projection:
    cylinder: Cylinder
    xi: np.ndarray
    constant: float
    residual_in: float
    residual_out: float
    iterations: int
    im_adjoint_defect: float


def project_to_moduli(u_approx: Cylinder, P: Perturbation, p: float = 2.0, delta0: float = 1e-3,
                      tol: float | None = None, max_iter: int = 30) -> Projection:
    """Newton projection onto solutions of the discrete heat equation.

    Boundary slices are held fixed; each correction is taken orthogonal to
    the near kernel of D0 (the s-translation direction), which places the
    total correction in the image of the adjoint up to the reported defect.
    """
    res = heat_residual(u_approx, P)
    r_in = cylinder_norm(u_approx, res, p)
    if r_in > delta0:
        raise PreconditionFailed(f"heat residual {r_in:.3e} exceeds {delta0:g}")
    tol = newton_tolerance(u_approx.n_t) if tol is None else tol
    u = u_approx
    total = np.zeros_like(u.coords[1:-1])
    n_kernel = 1
    if all(u.endpoints):
        n_kernel = max(0, u.endpoints[0].index - u.endpoints[1].index)
    kernel_vec = None
    it = 0
    rmax = float(np.abs(res).max())
    while rmax > tol and it < max_iter:
        seed = stencils.ds_central(u.coords, u.h_s).reshape(-1)
        solver = DeflatedSolver(d0_matrix(u, P), seed_right=seed if n_kernel else None, n_kernel=n_kernel)
        if kernel_vec is None and n_kernel:
            kernel_vec = solver.k[0].copy()
        step = -solver.solve(res.reshape(-1)).reshape(total.shape)
        lam = 1.0
        for _ in range(6):
            trial = u.with_coords(np.concatenate([u.coords[:1], u.coords[1:-1] + lam * step, u.coords[-1:]]))
            tres = heat_residual(trial, P)
            tmax = float(np.abs(tres).max())
            if tmax < rmax:
                break
            lam *= 0.5
        if tmax >= rmax:
            raise ProjectionFailed(f"Newton projection stalled at residual {rmax:.3e}")
        total += lam * step
        u, res, rmax = trial, tres, tmax
        it += 1
    if rmax > tol:
        raise ProjectionFailed(f"Newton projection did not reach {tol:.1e} (residual {rmax:.3e})")
    xi_norm = cylinder_norm(u, total, p)
    defect = 0.0
    if kernel_vec is not None and xi_norm > 0:
        tv = total.reshape(-1)
        defect = float(abs(np.dot(tv, kernel_vec)) / np.linalg.norm(tv))
    const = xi_norm / r_in if r_in > 0 else 0.0
    return Projection(u.with_coords(u.coords, projected=True), _embed(u, total), const, r_in,
                      cylinder_norm(u, res, p), it, defect)


def shift_cylinder(u: Cylinder, sigma: float) -> Cylinder:
    """u(s + sigma, .) resampled on the same grid by cubic splines in s (ends clamped)."""
    from scipy.interpolate import CubicSpline

    spline = CubicSpline(u.s, u.coords, axis=0)
    s_new = np.clip(u.s + sigma, u.s[0], u.s[-1])
    return u.with_coords(spline(s_new), shifted_by=float(sigma))


def tail_fit(u: Cylinder, P: Perturbation, quarter: float = 0.25):
    """Affine fits of log ||d_s u(s)||_{L2} over the first and last quarter of the domain.

    Returns ((slope, residual) at the left end, (slope, residual) at the right end);
    the residual is the RMS deviation of the fit.
    """
    ds = flow_field(u.coords, P)
    norms = np.sqrt(np.sum(ds * ds, axis=(1, 2)) / u.n_t)
    q = max(4, int(quarter * u.n_s))
    out = []
    for sl in (slice(0, q), slice(u.n_s - q, u.n_s)):
        y = np.log(norms[sl])
        x = u.s[sl]
        coef = np.polyfit(x, y, 1)
        resid = float(np.sqrt(np.mean((np.polyval(coef, x) - y) ** 2)))
        out.append((float(coef[0]), resid))
    return tuple(out)


def apriori_norms(u: Cylinder, P: Perturbation):
    """Sup norms of d_s u, d_t u and the second t-derivative over the cylinder."""
    ds = flow_field(u.coords, P)
    dt = stencils.dplus_points(u.coords)
    dtt = stencils.laplacian_points(u.coords)
    return (float(np.abs(ds).max()), float(np.abs(dt).max()), float(np.abs(dtt).max()))
