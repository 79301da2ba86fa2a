"""Discrete loops, loop fields, action functionals and perturbations.

A loop is sampled at N nodes t_k = k/N.  On the torus the coordinates are
stored as a continuous lift (so the winding class is kept); the reduced
angles are available through :attr:`DiscreteLoop.nodes`.  The L2 pairing on
loop fields is (1/N) sum_k <a_k, b_k>, i.e. trapezoid quadrature on the unit
circle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .geometry import FlatTorus, Sphere2, wrap_diff

TWO_PI = 2.0 * np.pi


class DiscreteLoop:
    """Closed loop sampled on the uniform grid t_k = k/N."""

    def __init__(self, backend, coords, check: bool = True):
        coords = np.array(coords, dtype=float)
        if coords.ndim == 1:
            coords = coords[:, None]
        n = coords.shape[0]
        if check and (n < 8 or n & (n - 1)):
            raise ValueError("node count must be a power of two and at least 8")
        if coords.shape[1] != backend.ambient_dim:
            raise ValueError("coordinate dimension does not match backend")
        self.backend = backend
        if backend.flat:
            steps = wrap_diff(np.diff(coords, axis=0))
            lift = np.empty_like(coords)
            lift[0] = coords[0]
            lift[1:] = coords[0] + np.cumsum(steps, axis=0)
            self.winding = np.rint(wrap_diff(coords[0] - lift[-1]) + lift[-1] - lift[0]).astype(int)
            self.coords = lift
        else:
            self.coords = backend.reduce(coords)
            self.winding = np.zeros(0, dtype=int)

    @property
    def n_nodes(self) -> int:
        return self.coords.shape[0]

    @property
    def t(self):
        return np.arange(self.n_nodes) / self.n_nodes

    @property
    def nodes(self):
        return self.backend.reduce(self.coords)

    @property
    def component(self) -> tuple:
        return tuple(int(w) for w in self.winding)

    def shifted(self, k: int):
        """Coordinates of node k+j for j = 0..N-1, continued through the winding."""
        x = np.roll(self.coords, -k, axis=0)
        if self.backend.flat and k:
            n = self.n_nodes
            idx = (np.arange(n) + k) // n
            x = x + idx[:, None] * self.winding[None, :]
        return x

    def with_coords(self, coords):
        return DiscreteLoop(self.backend, coords, check=False)

    def distance(self, other: "DiscreteLoop") -> float:
        """Sup over nodes of the pointwise distance."""
        return float(np.max(self.backend.dist(self.coords, other.coords)))

    def __repr__(self):
        return f"DiscreteLoop({self.backend!r}, N={self.n_nodes}, component={self.component})"


@dataclass
class LoopField:
    """Tangent vectors along a loop, one per node."""

    base: DiscreteLoop
    vectors: np.ndarray

    def __post_init__(self):
        v = np.array(self.vectors, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.shape != self.base.coords.shape:
            raise ValueError("field shape does not match its base loop")
        self.vectors = self.base.backend.project(self.base.coords, v)


def constant_loop(backend, point, n: int = 64) -> DiscreteLoop:
    return DiscreteLoop(backend, np.tile(np.asarray(point, dtype=float), (n, 1)))


def winding_loop(backend, winding, offset, n: int = 64) -> DiscreteLoop:
    t = np.arange(n) / n
    return DiscreteLoop(backend, np.asarray(offset, dtype=float)[None, :] + np.outer(t, winding))


# ---------------------------------------------------------------------------
# quadrature and differences


def l2_inner(a, b) -> float:
    a = np.asarray(a)
    return float(np.sum(a * np.asarray(b)) / a.shape[0])


def lp_norm(values, p=2.0) -> float:
    """L^p norm on the unit circle of nodal values (shape (N,) or (N, m))."""
    v = np.asarray(values, dtype=float)
    mag = np.abs(v) if v.ndim == 1 else np.linalg.norm(v, axis=-1)
    if np.isinf(p):
        return float(mag.max()) if mag.size else 0.0
    return float((np.sum(mag ** p) / mag.shape[0]) ** (1.0 / p))


def velocity(x: DiscreteLoop):
    """Forward velocity N * log_{x_k}(x_{k+1}) at each node."""
    n = x.n_nodes
    if x.backend.flat:
        return n * (x.shifted(1) - x.coords)
    return n * x.backend.log(x.coords, np.roll(x.coords, -1, axis=0))


def central_velocity(x: DiscreteLoop):
    """Central-difference velocity, projected to the tangent space."""
    n = x.n_nodes
    if x.backend.flat:
        return 0.5 * n * (x.shifted(1) - x.shifted(-1))
    d = 0.5 * n * (np.roll(x.coords, -1, axis=0) - np.roll(x.coords, 1, axis=0))
    return x.backend.project(x.coords, d)


def nabla_t(field: LoopField) -> LoopField:
    """Covariant central difference of a loop field."""
    n = field.base.n_nodes
    d = 0.5 * n * (np.roll(field.vectors, -1, axis=0) - np.roll(field.vectors, 1, axis=0))
    return LoopField(field.base, field.base.backend.project(field.base.coords, d))


# ---------------------------------------------------------------------------
# perturbations


class Perturbation:
    """Abstract perturbation functional on the loop space.

    Subclasses provide the L2 gradient, the Hessian as local (per-node)
    blocks plus low-rank corrections, and the functional value.
    """

    kind = "abstract"
    time_dependent = True

    def functional(self, x: DiscreteLoop) -> float:
        raise NotImplementedError

    def gradient(self, x: DiscreteLoop):
        raise NotImplementedError

    def hessian_parts(self, x: DiscreteLoop):
        """Return (blocks, rank_terms).

        ``blocks`` has shape (N, m, m); ``rank_terms`` is a list of
        (c, a, b) meaning xi -> c <b, xi>_{L2} a.
        """
        raise NotImplementedError

    def hessian_apply(self, x: DiscreteLoop, xi):
        blocks, terms = self.hessian_parts(x)
        xi = np.asarray(xi, dtype=float)
        out = np.einsum("kab,kb->ka", blocks, xi)
        for c, a, b in terms:
            out = out + c * l2_inner(b, xi) * a
        return out

    def hessian_dense(self, x: DiscreteLoop):
        """Hessian as an (N m) x (N m) matrix acting on flattened node vectors."""
        blocks, terms = self.hessian_parts(x)
        n, m, _ = blocks.shape
        mat = np.zeros((n * m, n * m))
        idx = np.arange(n)
        mat.reshape(n, m, n, m)[idx, :, idx, :] = blocks
        for c, a, b in terms:
            mat += (c / n) * np.outer(a.reshape(-1), b.reshape(-1))
        return mat

    # slice-level helpers used by the cylinder code: coords has shape (..., N, m)
    def slice_gradients(self, coords, backend):
        flat = coords.reshape((-1,) + coords.shape[-2:])
        out = np.stack([self.gradient(DiscreteLoop(backend, c, check=False)) for c in flat])
        return out.reshape(coords.shape)

    def describe(self) -> dict:
        raise NotImplementedError


class FourierPotential(Perturbation):
    """V(t,x) = sum_j a_j cos(2 pi (k_j . x - m_j t) + phi_j) on a flat torus.

    The perturbation is the integral of V over the loop, so its gradient and
    Hessian are nodewise.
    """

    kind = "potential"

    def __init__(self, terms, dim: int = 1):
        self.dim = int(dim)
        rows = [(float(a), np.broadcast_to(np.asarray(k, dtype=float), (self.dim,)).copy(),
                 float(m), float(ph)) for a, k, m, ph in terms]
        self.amp = np.array([r[0] for r in rows], dtype=float)
        self.kvec = np.array([r[1] for r in rows], dtype=float).reshape(len(rows), self.dim)
        self.mfreq = np.array([r[2] for r in rows], dtype=float)
        self.phase = np.array([r[3] for r in rows], dtype=float)
        self.time_dependent = bool(np.any(self.mfreq != 0))

    @property
    def args(self):
        return self.amp, self.kvec, self.mfreq, self.phase

    def local(self, t, x):
        t = np.broadcast_to(np.asarray(t, dtype=float), np.shape(x)[:-1])
        shape = np.shape(x)
        xf = np.asarray(x, dtype=float).reshape(-1, self.dim)
        if self.amp.size == 0:
            return (np.zeros(shape[:-1]), np.zeros(shape), np.zeros(shape + (self.dim,)))
        val, grad, hess = kernels.fourier_terms(t.reshape(-1), xf, *self.args)
        return val.reshape(shape[:-1]), grad.reshape(shape), hess.reshape(shape + (self.dim,))

    def functional(self, x):
        return float(np.mean(self.local(x.t, x.coords)[0]))

    def gradient(self, x):
        return self.local(x.t, x.coords)[1]

    def hessian_parts(self, x):
        return self.local(x.t, x.coords)[2], []

    def slice_gradients(self, coords, backend=None):
        n = coords.shape[-2]
        t = np.broadcast_to(np.arange(n) / n, coords.shape[:-1])
        return self.local(t, coords)[1]

    def slice_hessians(self, coords):
        n = coords.shape[-2]
        t = np.broadcast_to(np.arange(n) / n, coords.shape[:-1])
        return self.local(t, coords)[2]

    def describe(self):
        return {
            "kind": "fourier_potential",
            "dim": self.dim,
            "formula": "V(t,x) = sum a*cos(2*pi*(k.x - m*t) + phase)",
            "terms": [
                {"a": float(a), "k": [float(v) for v in k], "m": float(m), "phase": float(p)}
                for a, k, m, p in zip(self.amp, self.kvec, self.mfreq, self.phase)
            ],
        }


def cosine_potential(c: float, dim: int = 1) -> FourierPotential:
    """V(x) = c * sum_i cos(2 pi x_i)."""
    terms = []
    for i in range(dim):
        k = np.zeros(dim)
        k[i] = 1.0
        terms.append((c, k, 0.0, 0.0))
    return FourierPotential(terms, dim)


def moving_cosine_potential(c: float) -> FourierPotential:
    """V(t,x) = c cos(2 pi (x - t)) on the circle."""
    return FourierPotential([(c, [1.0], 1.0, 0.0)], 1)


def wobble_potential(c: float = 0.01, b: float = 0.005) -> FourierPotential:
    """V(t,x) = c cos(2 pi x) + b sin(2 pi t) sin(2 pi x)."""
    # sin(2 pi t) sin(2 pi x) = (cos(2 pi (x - t)) - cos(2 pi (x + t))) / 2
    return FourierPotential([(c, [1.0], 0.0, 0.0), (0.5 * b, [1.0], 1.0, 0.0), (-0.5 * b, [1.0], -1.0, 0.0)], 1)


class SphereLinearPotential(Perturbation):
    """V(t,p) = <b0 + b1 sin(2 pi t), p> on the unit sphere."""

    kind = "potential"

    def __init__(self, b0, b1=(0.0, 0.0, 0.0)):
        self.b0 = np.asarray(b0, dtype=float)
        self.b1 = np.asarray(b1, dtype=float)
        self.time_dependent = bool(np.any(self.b1 != 0))

    def _b(self, t):
        return self.b0[None, :] + np.sin(TWO_PI * np.asarray(t))[:, None] * self.b1[None, :]

    def functional(self, x):
        return float(np.mean(np.sum(self._b(x.t) * x.coords, axis=1)))

    def gradient(self, x):
        b = self._b(x.t)
        return b - np.sum(b * x.coords, axis=1, keepdims=True) * x.coords

    def hessian_parts(self, x):
        b = self._b(x.t)
        p = x.coords
        proj = np.eye(3)[None] - p[:, :, None] * p[:, None, :]
        return -np.sum(b * p, axis=1)[:, None, None] * proj, []

    def describe(self):
        return {"kind": "sphere_linear", "formula": "V(t,p) = <b0 + b1*sin(2*pi*t), p>",
                "b0": self.b0.tolist(), "b1": self.b1.tolist()}


class SmoothCutoff:
    """Smooth step rho with rho = 1 on (-inf, r0], rho = 0 on [r1, inf).

    Between the two radii rho(r) = psi((r1 - r)/(r1 - r0)) where
    psi(s) = f(s)/(f(s) + f(1-s)) and f(s) = exp(-1/s) for s > 0.
    """

    def __init__(self, r0: float = 0.05, r1: float = 0.1):
        if not r1 > r0:
            raise ValueError("cutoff needs r1 > r0")
        self.r0 = float(r0)
        self.r1 = float(r1)

    @staticmethod
    def _f(s):
        s = np.asarray(s, dtype=float)
        pos = s > 0
        safe = np.where(pos, s, 1.0)
        f = np.where(pos, np.exp(-1.0 / safe), 0.0)
        f1 = np.where(pos, f / safe ** 2, 0.0)
        f2 = np.where(pos, f * (1.0 / safe ** 4 - 2.0 / safe ** 3), 0.0)
        return f, f1, f2

    def __call__(self, r):
        """Return rho(r), rho'(r), rho''(r)."""
        length = self.r1 - self.r0
        s = (self.r1 - np.asarray(r, dtype=float)) / length
        f, f1, f2 = self._f(s)
        g, g1, g2 = self._f(1.0 - s)
        g1 = -g1
        tot = f + g
        psi = f / tot
        num1 = f1 * g - f * g1
        psi1 = num1 / tot ** 2
        psi2 = ((f2 * g - f * g2) * tot - 2.0 * num1 * (f1 + g1)) / tot ** 3
        return psi, -psi1 / length, psi2 / length ** 2

    def describe(self):
        return {"r0": self.r0, "r1": self.r1,
                "formula": "rho(r) = psi((r1-r)/(r1-r0)), psi(s) = f(s)/(f(s)+f(1-s)), f(s) = exp(-1/s) for s>0"}


class ArchetypalPerturbation(Perturbation):
    """rho(||x - x0||^2_{L2}) * integral of V_t(x), for a reference loop x0.

    The distance is measured in the ambient embedding: on the torus through
    the isometric embedding of each circle factor with radius 1/(2 pi), so
    |e(x) - e(y)|^2 = sum_i sin^2(pi (x_i - y_i)) / pi^2; on the sphere the
    ambient chord.
    """

    kind = "archetypal"

    def __init__(self, base: Perturbation, center: DiscreteLoop, cutoff: SmoothCutoff | None = None):
        self.base = base
        self.center = center
        self.cutoff = cutoff or SmoothCutoff()
        self.time_dependent = True

    def _dist_parts(self, x: DiscreteLoop):
        y = self.center.coords
        if x.backend.flat:
            d = x.coords - y
            val = np.sum(np.sin(np.pi * d) ** 2, axis=1) / np.pi ** 2
            grad = np.sin(TWO_PI * d) / np.pi
            hess = np.einsum("ka,ab->kab", 2.0 * np.cos(TWO_PI * d), np.eye(d.shape[1]))
        else:
            p = x.coords
            val = np.sum((p - y) ** 2, axis=1)
            grad = -2.0 * (y - np.sum(y * p, axis=1, keepdims=True) * p)
            proj = np.eye(3)[None] - p[:, :, None] * p[:, None, :]
            hess = 2.0 * np.sum(y * p, axis=1)[:, None, None] * proj
        return float(np.mean(val)), grad, hess

    def functional(self, x):
        dist, _, _ = self._dist_parts(x)
        rho = self.cutoff(dist)[0]
        return float(rho * self.base.functional(x))

    def gradient(self, x):
        dist, gd, _ = self._dist_parts(x)
        rho, rho1, _ = self.cutoff(dist)
        return rho1 * self.base.functional(x) * gd + rho * self.base.gradient(x)

    def hessian_parts(self, x):
        dist, gd, hd = self._dist_parts(x)
        rho, rho1, rho2 = self.cutoff(dist)
        val = self.base.functional(x)
        gv = self.base.gradient(x)
        hv, base_terms = self.base.hessian_parts(x)
        blocks = rho1 * val * hd + rho * hv
        terms = [(rho2 * val, gd, gd), (rho1, gd, gv), (rho1, gv, gd)]
        terms += [(rho * c, a, b) for c, a, b in base_terms]
        return blocks, terms

    def describe(self):
        return {"kind": "archetypal", "base": self.base.describe(), "cutoff": self.cutoff.describe(),
                "center_nodes": int(self.center.n_nodes)}


class ZeroPerturbation(Perturbation):
    kind = "potential"
    time_dependent = False

    def functional(self, x):
        return 0.0

    def gradient(self, x):
        return np.zeros_like(x.coords)

    def hessian_parts(self, x):
        m = x.coords.shape[1]
        return np.zeros((x.n_nodes, m, m)), []

    def describe(self):
        return {"kind": "zero"}


# ---------------------------------------------------------------------------
# functionals


def classical_action(x: DiscreteLoop, P: Perturbation) -> float:
    """Trapezoid quadrature of |xdot|^2 / 2 with forward velocities, minus the perturbation."""
    vel = velocity(x)
    return float(0.5 * np.sum(vel * vel) / x.n_nodes - P.functional(x))


def symplectic_action(x: DiscreteLoop, y: LoopField, P: Perturbation) -> float:
    vel = velocity(x)
    yv = np.asarray(y.vectors if isinstance(y, LoopField) else y, dtype=float)
    dens = np.sum(yv * vel, axis=1) - 0.5 * np.sum(yv * yv, axis=1)
    return float(np.mean(dens) - P.functional(x))


def grad_V(x: DiscreteLoop, P: Perturbation) -> LoopField:
    return LoopField(x, P.gradient(x))


def hess_V(x: DiscreteLoop, xi: LoopField, P: Perturbation) -> LoopField:
    vec = xi.vectors if isinstance(xi, LoopField) else xi
    return LoopField(x, P.hessian_apply(x, vec))


@dataclass
class AxiomReport:
    s_ratio: float
    t_ratio: float
    n_points: int


def axiom_probe(P: Perturbation, samples) -> AxiomReport:
    """Empirical maxima of the two growth ratios over sampled cylinders.

    ``samples`` is a list of (backend, coords, h_s) with coords of shape
    (N_s, N_t, m), or objects exposing ``backend``, ``coords`` and ``h_s``.
    The ratios are |nabla_s grad V(u)| / (|d_s u| + ||d_s u||_{L1}) and
    |nabla_t grad V(u)| / (1 + |d_t u|), derivatives by central differences.
    """
    s_max = 0.0
    t_max = 0.0
    count = 0
    for item in samples:
        if isinstance(item, tuple):
            backend, coords, h_s = item
        else:
            backend, coords, h_s = item.backend, item.coords, item.h_s
        coords = np.asarray(coords, dtype=float)
        ns, nt, _ = coords.shape
        loops = [DiscreteLoop(backend, c, check=False) for c in coords]
        g = np.stack([P.gradient(lp) for lp in loops])
        lifted = np.stack([lp.coords for lp in loops])
        # s-derivatives on interior slices
        ds_u = (lifted[2:] - lifted[:-2]) / (2 * h_s)
        ds_g = (g[2:] - g[:-2]) / (2 * h_s)
        base = lifted[1:-1]
        ds_u = backend.project(base, ds_u)
        ds_g = backend.project(base, ds_g)
        mag_u = np.linalg.norm(ds_u, axis=-1)
        l1 = np.mean(mag_u, axis=1, keepdims=True)
        den = mag_u + l1
        num = np.linalg.norm(ds_g, axis=-1)
        ok = den > 1e-14
        if np.any(ok):
            s_max = max(s_max, float(np.max(num[ok] / den[ok])))
        elif np.any(num > 1e-14):
            s_max = np.inf
        # t-derivatives on all slices
        dt_u = np.stack([central_velocity(lp) for lp in loops])
        dt_g = 0.5 * nt * (np.roll(g, -1, axis=1) - np.roll(g, 1, axis=1))
        dt_g = backend.project(lifted, dt_g)
        t_max = max(t_max, float(np.max(np.linalg.norm(dt_g, axis=-1) / (1.0 + np.linalg.norm(dt_u, axis=-1)))))
        count += ns * nt
    return AxiomReport(s_ratio=s_max, t_ratio=t_max, n_points=count)


__all__ = [
    "DiscreteLoop", "LoopField", "constant_loop", "winding_loop", "l2_inner", "lp_norm", "velocity",
    "central_velocity", "nabla_t", "Perturbation", "FourierPotential", "cosine_potential",
    "moving_cosine_potential", "wobble_potential", "SphereLinearPotential", "SmoothCutoff",
    "ArchetypalPerturbation", "ZeroPerturbation", "classical_action", "symplectic_action", "grad_V",
    "hess_V", "axiom_probe", "AxiomReport", "FlatTorus", "Sphere2",
]
