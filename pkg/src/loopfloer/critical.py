"""Periodic orbits of the perturbed geodesic equation and their Hessians.

Critical loops of the discrete action solve L x + grad V(x) = 0, where L is
the periodic second difference; the Hessian of the action is
A = -L - H_V (flat backends carry no curvature term).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from . import stencils
from .errors import Degenerate, NoConvergence, NoNearbyOrbit, UnsupportedBackend
from .loops import DiscreteLoop, LoopField, Perturbation, classical_action, lp_norm, velocity

DEGENERACY_TOL = 1e-8
DEDUP_TOL = 1e-6


def _require_flat(x: DiscreteLoop):
    if not x.backend.flat:
        raise UnsupportedBackend("orbit computations are implemented on flat tori only")


@dataclass
class PeriodicOrbit:
    loop: DiscreteLoop
    action: float
    index: int
    spectrum_head: np.ndarray
    nondeg_margin: float
    residual: float = 0.0
    unstable_modes: np.ndarray = field(default=None, repr=False)

    @property
    def component(self):
        return self.loop.component

    def sort_key(self):
        return (self.component, self.index, round(self.action, 12), tuple(np.round(self.loop.nodes[0], 9)))

    def summary(self) -> dict:
        return {
            "component": list(self.component),
            "index": int(self.index),
            "action": float(self.action),
            "nondeg_margin": float(self.nondeg_margin),
            "residual": float(self.residual),
            "spectrum_head": [float(v) for v in self.spectrum_head],
            "base_point": [float(v) for v in self.loop.nodes[0]],
        }


def orbit_residual(x: DiscreteLoop, P: Perturbation):
    """L x + grad V(x); vanishes exactly on critical loops."""
    _require_flat(x)
    return stencils.laplacian_points(x.coords) + P.gradient(x)


def _hessian_dense(x: DiscreteLoop, P: Perturbation):
    n, m = x.coords.shape
    return -stencils.laplacian_dense(n, m) - P.hessian_dense(x)


def hessian_matrix(x, P: Perturbation):
    """Dense symmetric matrix of A = -L - H_V on flattened node vectors.

    The matrix represents the Hessian with respect to the L2 pairing, whose
    weight 1/N is uniform, so symmetry of the matrix is self-adjointness.
    """
    loop = x.loop if isinstance(x, PeriodicOrbit) else x
    _require_flat(loop)
    mat = _hessian_dense(loop, P)
    return 0.5 * (mat + mat.T)


def spectrum(x, P: Perturbation, k: int | None = None, vectors: bool = False):
    """Lowest eigenvalues (and optionally eigenvectors) of the Hessian."""
    loop = x.loop if isinstance(x, PeriodicOrbit) else x
    mat = hessian_matrix(loop, P)
    size = mat.shape[0]
    k = size if k is None else min(k, size)
    if size <= 256:
        if vectors:
            w, v = sla.eigh(mat, subset_by_index=[0, k - 1])
            return w, v
        return sla.eigh(mat, eigvals_only=True, subset_by_index=[0, k - 1])
    w, v = spla.eigsh(mat, k=min(k, size - 2), which="SA")
    order = np.argsort(w)
    return (w[order], v[:, order]) if vectors else w[order]


def _classify(loop: DiscreteLoop, P: Perturbation, residual: float, k_head: int = 8) -> PeriodicOrbit:
    size = loop.coords.size
    w, v = spectrum(loop, P, k=size, vectors=True)
    margin = float(np.min(np.abs(w)))
    if margin < DEGENERACY_TOL:
        raise Degenerate(f"Hessian eigenvalue {margin:.3e} below the degeneracy threshold")
    index = int(np.sum(w < 0))
    modes = v[:, :index].T.reshape(index, *loop.coords.shape) if index else np.zeros((0,) + loop.coords.shape)
    return PeriodicOrbit(loop=loop, action=classical_action(loop, P), index=index,
                         spectrum_head=w[:k_head].copy(), nondeg_margin=margin, residual=residual,
                         unstable_modes=modes)


def newton_tolerance(n: int, scale: float = 1.0) -> float:
    """Residual tolerance: 1e-12, relaxed to the rounding level of the N^2-scaled stencil."""
    return max(1e-12, 64.0 * np.finfo(float).eps * n * n * max(1.0, scale))


def find_orbit(guess: DiscreteLoop, P: Perturbation, tol: float | None = None, max_iter: int = 50) -> PeriodicOrbit:
    """Newton iteration on L x + grad V(x) = 0 started from ``guess``."""
    _require_flat(guess)
    x = guess.with_coords(guess.coords.copy())
    n, m = x.coords.shape
    tol = newton_tolerance(n) if tol is None else tol
    lap = stencils.laplacian_dense(n, m)
    res = orbit_residual(x, P)
    rnorm = float(np.abs(res).max())
    for _ in range(max_iter):
        if rnorm <= tol:
            return _classify(x, P, rnorm)
        jac = -lap - P.hessian_dense(x)
        try:
            step = np.linalg.solve(jac, res.reshape(-1)).reshape(n, m)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(jac, res.reshape(-1), rcond=None)[0].reshape(n, m)
        # the residual is -grad S and jac is the Hessian of S
        lam = 1.0
        for _ in range(30):
            trial = x.with_coords(x.coords + lam * step)
            tres = orbit_residual(trial, P)
            tnorm = float(np.abs(tres).max())
            if tnorm < rnorm or tnorm <= tol:
                break
            lam *= 0.5
        x, res, rnorm = trial, tres, tnorm
    if rnorm <= tol:
        return _classify(x, P, rnorm)
    raise NoConvergence(f"Newton residual {rnorm:.3e} after {max_iter} steps")


def morse_index(x: PeriodicOrbit) -> int:
    if x.nondeg_margin < DEGENERACY_TOL:
        raise Degenerate("orbit is degenerate")
    return int(x.index)


@dataclass
class SamplingPlan:
    """Multistart plan: a lattice of constant loops plus winding representatives."""

    n_nodes: int = 64
    lattice: int = 8
    components: tuple = ((0,),)
    offsets: int = 8

    def starts(self, backend):
        d = backend.n
        for comp in self.components:
            comp = np.asarray(comp, dtype=float)
            if np.all(comp == 0):
                grid = (np.arange(self.lattice) + 0.5) / self.lattice
                for pt in product(grid, repeat=d):
                    yield DiscreteLoop(backend, np.tile(np.asarray(pt), (self.n_nodes, 1)))
            else:
                t = np.arange(self.n_nodes) / self.n_nodes
                grid = (np.arange(self.offsets) + 0.5) / self.offsets
                for pt in product(grid, repeat=d):
                    yield DiscreteLoop(backend, np.asarray(pt)[None, :] + np.outer(t, comp))


def same_orbit(a: DiscreteLoop, b: DiscreteLoop, tol: float = DEDUP_TOL) -> bool:
    return a.component == b.component and a.distance(b) < tol


def enumerate_orbits(P: Perturbation, a: float, starts: SamplingPlan | None = None, backend=None) -> list:
    """All distinct orbits reached from the multistart plan with action <= a."""
    from .geometry import FlatTorus

    plan = starts or SamplingPlan()
    backend = backend or FlatTorus(getattr(P, "dim", 1))
    found: list[PeriodicOrbit] = []
    for guess in plan.starts(backend):
        try:
            orb = find_orbit(guess, P)
        except NoConvergence:
            continue
        if orb.component != guess.component:
            continue
        if any(same_orbit(orb.loop, o.loop) for o in found):
            continue
        found.append(orb)
    out = [o for o in found if o.action <= a]
    out.sort(key=PeriodicOrbit.sort_key)
    return out


@dataclass
class PairHessian:
    matrix: np.ndarray
    n_nodes: int
    dim: int

    def apply(self, xi, eta):
        vec = np.concatenate([np.asarray(xi).reshape(-1), np.asarray(eta).reshape(-1)])
        out = self.matrix @ vec
        half = out.size // 2
        shape = (self.n_nodes, self.dim)
        return out[:half].reshape(shape), out[half:].reshape(shape)

    @property
    def symmetry_defect(self) -> float:
        return float(np.abs(self.matrix - self.matrix.T).max())

    @property
    def invertibility_margin(self) -> float:
        return float(np.linalg.svd(self.matrix, compute_uv=False).min())


def pair_hessian(x: DiscreteLoop, y, P: Perturbation) -> PairHessian:
    """(xi, eta) -> (-D- eta - H xi, D+ xi - eta) on a flat torus.

    The staggered pair D+/D- makes the matrix symmetric whenever the
    curvature term vanishes (always on flat backends).
    """
    _require_flat(x)
    n, m = x.coords.shape
    dp = stencils.dplus_matrix(n, m).toarray()
    dm = stencils.dminus_matrix(n, m).toarray()
    h = P.hessian_dense(x)
    eye = np.eye(n * m)
    mat = np.block([[-h, -dm], [dp, -eye]])
    return PairHessian(matrix=mat, n_nodes=n, dim=m)


@dataclass
class NearOrbitDecomposition:
    orbit: PeriodicOrbit
    xi: LoopField
    eta: LoopField
    c1_size: float


def decompose_near_orbit(x: DiscreteLoop, y, P: Perturbation, a: float, orbits=None,
                         trust_radius: float = 0.1, plan: SamplingPlan | None = None) -> NearOrbitDecomposition:
    """Write (x, y) = (exp_{x0}(xi0), x0dot + eta0) for the nearest orbit x0 in P^a."""
    _require_flat(x)
    if orbits is None:
        plan = plan or SamplingPlan(n_nodes=x.n_nodes, components=(x.component,))
        orbits = enumerate_orbits(P, a, plan, backend=x.backend)
    best = None
    best_d = np.inf
    for o in orbits:
        if o.component != x.component or o.loop.n_nodes != x.n_nodes:
            continue
        d = x.distance(o.loop)
        if d < best_d:
            best, best_d = o, d
    if best is None or best_d > trust_radius:
        raise NoNearbyOrbit(f"no orbit within {trust_radius} (closest {best_d:.3g})")
    xi = x.backend.log(best.loop.coords, x.coords)
    yv = np.asarray(y.vectors if isinstance(y, LoopField) else y, dtype=float).reshape(x.coords.shape)
    eta = yv - velocity(best.loop)
    size = (lp_norm(xi, np.inf) + lp_norm(stencils.dplus(xi), np.inf) + lp_norm(eta, np.inf)
            + lp_norm(stencils.dminus(eta), np.inf))
    return NearOrbitDecomposition(orbit=best, xi=LoopField(best.loop, xi), eta=LoopField(best.loop, eta),
                                  c1_size=float(size))
