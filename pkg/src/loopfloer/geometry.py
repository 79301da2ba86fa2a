"""Riemannian backends: the flat torus T^n = R^n/Z^n and the round unit sphere S^2.

Backends expose vectorized methods acting on arrays whose last axis holds
coordinates (torus: n angles, sphere: ambient 3-vectors).  The value types
:class:`ManifoldPoint` and :class:`TangentVector` together with the module
level functions give a checked, scalar-style interface on top of them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BaseMismatch

_SMALL = 1e-12


def wrap_diff(d):
    """Minimal-image representative of an angle difference, in [-1/2, 1/2]."""
    return d - np.round(d)


class FlatTorus:
    """Flat torus R^n/Z^n with the Euclidean metric."""

    flat = True

    def __init__(self, n: int = 1):
        if n < 1:
            raise ValueError("torus dimension must be positive")
        self.n = int(n)
        self.dim = self.n
        self.ambient_dim = self.n

    def __repr__(self):
        return f"FlatTorus({self.n})"

    def __eq__(self, other):
        return isinstance(other, FlatTorus) and other.n == self.n

    def __hash__(self):
        return hash(("torus", self.n))

    @property
    def name(self):
        return f"torus{self.n}"

    def reduce(self, x):
        r = np.mod(np.asarray(x, dtype=float), 1.0)
        return np.where(r >= 1.0, 0.0, r)

    def project(self, p, v):
        return np.asarray(v, dtype=float)

    def inner(self, p, a, b):
        return np.sum(np.asarray(a) * np.asarray(b), axis=-1)

    def curvature(self, p, a, b, c):
        return np.zeros(np.broadcast(a, b, c).shape)

    def exp(self, p, v):
        return np.asarray(p, dtype=float) + np.asarray(v, dtype=float)

    def log(self, p, q):
        return wrap_diff(np.asarray(q, dtype=float) - np.asarray(p, dtype=float))

    def dist(self, p, q):
        return np.linalg.norm(self.log(p, q), axis=-1)

    def transport(self, p, v, w):
        return np.array(w, dtype=float)

    def geodesic_maps(self, p, v):
        eye = np.eye(self.n)
        shape = np.shape(v)[:-1] + (self.n, self.n)
        return np.broadcast_to(eye, shape).copy(), np.broadcast_to(eye, shape).copy()

    def tangent_basis(self, p):
        return np.eye(self.n)

    def random_point(self, rng):
        return rng.random(self.n)

    def random_tangent(self, rng, p):
        return rng.standard_normal(self.n)

    def injectivity_radius(self):
        return 0.5


class Sphere2:
    """Unit sphere in R^3; tangent vectors are ambient vectors orthogonal to the base."""

    flat = False
    n = 2
    dim = 2
    ambient_dim = 3

    def __repr__(self):
        return "Sphere2()"

    def __eq__(self, other):
        return isinstance(other, Sphere2)

    def __hash__(self):
        return hash("sphere2")

    @property
    def name(self):
        return "sphere2"

    def reduce(self, x):
        x = np.asarray(x, dtype=float)
        return x / np.linalg.norm(x, axis=-1, keepdims=True)

    def project(self, p, v):
        p = np.asarray(p, dtype=float)
        v = np.asarray(v, dtype=float)
        return v - np.sum(p * v, axis=-1, keepdims=True) * p

    def inner(self, p, a, b):
        return np.sum(np.asarray(a) * np.asarray(b), axis=-1)

    def curvature(self, p, a, b, c):
        """R(a,b)c = <b,c>a - <a,c>b for constant curvature one."""
        a, b, c = (np.asarray(z, dtype=float) for z in (a, b, c))
        bc = np.sum(b * c, axis=-1, keepdims=True)
        ac = np.sum(a * c, axis=-1, keepdims=True)
        return bc * a - ac * b

    @staticmethod
    def _polar(v):
        theta = np.linalg.norm(v, axis=-1, keepdims=True)
        safe = np.where(theta > _SMALL, theta, 1.0)
        return theta, v / safe

    def exp(self, p, v):
        p = np.asarray(p, dtype=float)
        v = self.project(p, v)
        theta, u = self._polar(v)
        out = np.cos(theta) * p + np.sin(theta) * u
        small = theta < _SMALL
        out = np.where(small, p + v, out)
        return self.reduce(out)

    def log(self, p, q):
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        w = q - np.sum(p * q, axis=-1, keepdims=True) * p
        s = np.linalg.norm(w, axis=-1, keepdims=True)
        c = np.sum(p * q, axis=-1, keepdims=True)
        ang = np.arctan2(s, c)
        safe = np.where(s > _SMALL, s, 1.0)
        return np.where(s > _SMALL, ang * w / safe, w)

    def dist(self, p, q):
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        s = np.linalg.norm(np.cross(p, q), axis=-1)
        c = np.sum(p * q, axis=-1)
        return np.arctan2(s, c)

    def transport(self, p, v, w):
        """Parallel transport of w along t -> exp_p(t v), t in [0, 1]."""
        p = np.asarray(p, dtype=float)
        v = self.project(p, v)
        w = self.project(p, w)
        theta, u = self._polar(v)
        wu = np.sum(w * u, axis=-1, keepdims=True)
        moved = -np.sin(theta) * p + np.cos(theta) * u
        out = w - wu * u + wu * moved
        return np.where(theta < _SMALL, w, out)

    def geodesic_maps(self, p, v):
        """Closed-form E1, E2 as 3x3 matrices acting on T_pM.

        With theta = |v| and u = v/theta, the component of a tangent vector
        along u is transported, while the orthogonal component is scaled by
        cos(theta) (for E1) or sin(theta)/theta (for E2).
        """
        p = np.asarray(p, dtype=float)
        v = self.project(p, v)
        theta, u = self._polar(v)
        th = theta[..., 0]
        perp = np.eye(3) - u[..., :, None] * u[..., None, :] - p[..., :, None] * p[..., None, :]
        moved = -np.sin(theta) * p + np.cos(theta) * u
        along = moved[..., :, None] * u[..., None, :]
        sinc = np.where(th > _SMALL, np.sin(th) / np.where(th > _SMALL, th, 1.0), 1.0)
        e1 = np.cos(th)[..., None, None] * perp + along
        e2 = sinc[..., None, None] * perp + along
        tang = np.eye(3) - p[..., :, None] * p[..., None, :]
        small = (th < _SMALL)[..., None, None]
        return np.where(small, tang, e1), np.where(small, tang, e2)

    def tangent_basis(self, p):
        p = np.asarray(p, dtype=float)
        trial = np.eye(3)[np.argmin(np.abs(p))]
        e1 = trial - np.dot(trial, p) * p
        e1 /= np.linalg.norm(e1)
        e2 = np.cross(p, e1)
        return np.stack([e1, e2])

    def random_point(self, rng):
        return self.reduce(rng.standard_normal(3))

    def random_tangent(self, rng, p):
        return self.project(p, rng.standard_normal(3))

    def injectivity_radius(self):
        return np.pi


def make_backend(name: str):
    """Backend from a short name: ``torus1``, ``torus2``, ... or ``sphere2``."""
    if name == "sphere2":
        return Sphere2()
    if name.startswith("torus"):
        return FlatTorus(int(name[5:] or 1))
    raise ValueError(f"unknown backend {name!r}")


def geodesic_maps_fd(backend, p, v, h: float = 1e-5):
    """Finite-difference E1, E2 from central differences of the exponential map."""
    p = np.asarray(p, dtype=float)
    v = backend.project(p, v)
    basis = backend.tangent_basis(p)
    m = backend.ambient_dim
    e1 = np.zeros((m, m))
    e2 = np.zeros((m, m))
    cols1 = []
    cols2 = []
    for e in basis:
        d2 = (backend.exp(p, v + h * e) - backend.exp(p, v - h * e)) / (2 * h)
        fwd = backend.exp(backend.exp(p, h * e), backend.transport(p, h * e, v))
        bwd = backend.exp(backend.exp(p, -h * e), backend.transport(p, -h * e, v))
        cols1.append((fwd - bwd) / (2 * h))
        cols2.append(d2)
    # express as matrices acting on ambient vectors through the tangent basis
    b = np.asarray(basis)
    e1 = np.array(cols1).T @ b
    e2 = np.array(cols2).T @ b
    return e1, e2


# ---------------------------------------------------------------------------
# checked value types


@dataclass(frozen=True)
class ManifoldPoint:
    backend: object
    coords: np.ndarray = field(repr=True)

    def __post_init__(self):
        c = self.backend.reduce(np.asarray(self.coords, dtype=float).reshape(-1))
        if c.shape[0] != self.backend.ambient_dim:
            raise ValueError("coordinate length does not match backend")
        object.__setattr__(self, "coords", c)

    def same_as(self, other: "ManifoldPoint", tol: float = 1e-12) -> bool:
        return self.backend == other.backend and float(self.backend.dist(self.coords, other.coords)) <= tol


@dataclass(frozen=True)
class TangentVector:
    base: ManifoldPoint
    components: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.components, dtype=float).reshape(-1)
        c = self.base.backend.project(self.base.coords, c)
        object.__setattr__(self, "components", c)

    def __mul__(self, k):
        return TangentVector(self.base, k * self.components)

    __rmul__ = __mul__

    def __add__(self, other):
        _check_base(self.base, other)
        return TangentVector(self.base, self.components + other.components)


def _check_base(p: ManifoldPoint, *vecs: TangentVector):
    for v in vecs:
        if not v.base.same_as(p):
            raise BaseMismatch("tangent vector based at a different point")


def metric_inner(p: ManifoldPoint, a: TangentVector, b: TangentVector) -> float:
    _check_base(p, a, b)
    return float(p.backend.inner(p.coords, a.components, b.components))


def curvature(p: ManifoldPoint, a: TangentVector, b: TangentVector, c: TangentVector) -> TangentVector:
    _check_base(p, a, b, c)
    return TangentVector(p, p.backend.curvature(p.coords, a.components, b.components, c.components))


def exp_map(p: ManifoldPoint, v: TangentVector) -> ManifoldPoint:
    _check_base(p, v)
    return ManifoldPoint(p.backend, p.backend.exp(p.coords, v.components))


def parallel_transport(p: ManifoldPoint, v: TangentVector, w: TangentVector) -> TangentVector:
    _check_base(p, v, w)
    q = exp_map(p, v)
    return TangentVector(q, p.backend.transport(p.coords, v.components, w.components))


def geodesic_maps(p: ManifoldPoint, v: TangentVector, method: str = "auto"):
    """Return (E1, E2) as matrices acting on ambient component vectors.

    ``method="fd"`` forces the finite-difference fallback (step 1e-5).
    """
    _check_base(p, v)
    if method == "fd":
        return geodesic_maps_fd(p.backend, p.coords, v.components)
    return p.backend.geodesic_maps(p.coords, v.components)
