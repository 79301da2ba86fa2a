"""Z2 Morse and Floer chain complexes built from connecting-trajectory counts."""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .critical import PeriodicOrbit, SamplingPlan, enumerate_orbits
from .errors import DegenerateComplex, NotNested, UnknownReference

# ---------------------------------------------------------------------------
# linear algebra over GF(2)


def gf2_rref(mat):
    """Reduced row echelon form over GF(2); returns (rref, pivot columns)."""
    a = (np.asarray(mat, dtype=np.uint8) & 1).copy()
    rows, cols = a.shape
    pivots = []
    r = 0
    for c in range(cols):
        if r >= rows:
            break
        hit = np.nonzero(a[r:, c])[0]
        if hit.size == 0:
            continue
        p = r + hit[0]
        if p != r:
            a[[r, p]] = a[[p, r]]
        others = np.nonzero(a[:, c])[0]
        others = others[others != r]
        a[others] ^= a[r]
        pivots.append(c)
        r += 1
    return a, pivots


def gf2_rank(mat) -> int:
    mat = np.asarray(mat)
    if mat.size == 0:
        return 0
    return len(gf2_rref(mat)[1])


def gf2_nullspace(mat):
    """Basis of the kernel, one vector per column of the returned (n, k) array."""
    mat = np.asarray(mat, dtype=np.uint8)
    n = mat.shape[1]
    if mat.shape[0] == 0:
        return np.eye(n, dtype=np.uint8)
    r, piv = gf2_rref(mat)
    free = [c for c in range(n) if c not in piv]
    basis = np.zeros((n, len(free)), dtype=np.uint8)
    for j, f in enumerate(free):
        basis[f, j] = 1
        for i, pc in enumerate(piv):
            basis[pc, j] = r[i, f]
    return basis


def gf2_solve(a, b):
    """Some x with a x = b over GF(2), or None."""
    a = np.asarray(a, dtype=np.uint8)
    b = np.asarray(b, dtype=np.uint8).reshape(-1, 1)
    aug, piv = gf2_rref(np.hstack([a, b]))
    n = a.shape[1]
    if n in piv:
        return None
    x = np.zeros(n, dtype=np.uint8)
    for i, pc in enumerate(piv):
        x[pc] = aug[i, -1]
    return x


# ---------------------------------------------------------------------------
# complexes


@dataclass
class ChainComplex:
    """Generators per (component, index) and boundary maps d_k: C_k -> C_{k-1} over Z2."""

    generators: dict
    boundary: dict
    action_cut: float
    mode: str
    counts: dict = field(default_factory=dict)
    _bases: dict = field(default_factory=dict, repr=False)

    @property
    def components(self):
        return sorted({c for c, _ in self.generators})

    def degrees(self, comp):
        return sorted(k for c, k in self.generators if c == comp)

    def gens(self, comp, k):
        return self.generators.get((comp, k), [])

    def d(self, comp, k):
        """Matrix of d_k (rows: index k-1 generators, columns: index k generators)."""
        rows = len(self.gens(comp, k - 1))
        cols = len(self.gens(comp, k))
        return self.boundary.get((comp, k), np.zeros((rows, cols), dtype=np.uint8))

    def check_square_zero(self):
        for comp in self.components:
            for k in self.degrees(comp):
                prod = (self.d(comp, k - 1).astype(np.int64) @ self.d(comp, k).astype(np.int64)) % 2
                if prod.size and prod.any():
                    raise DegenerateComplex(f"d^2 != 0 in component {comp}, degree {k}")

    def homology_basis(self, comp, k):
        """(cycle representatives as columns, matrix of im d_{k+1}) with deterministic choices."""
        key = (comp, k)
        if key not in self._bases:
            n = len(self.gens(comp, k))
            cycles = gf2_nullspace(self.d(comp, k)) if n else np.zeros((0, 0), dtype=np.uint8)
            image = self.d(comp, k + 1) if n else np.zeros((0, 0), dtype=np.uint8)
            reps = []
            span = image.copy() if image.size else np.zeros((n, 0), dtype=np.uint8)
            base_rank = gf2_rank(span) if span.size else 0
            for j in range(cycles.shape[1]):
                trial = np.hstack([span, cycles[:, j:j + 1]])
                r = gf2_rank(trial)
                if r > base_rank:
                    span, base_rank = trial, r
                    reps.append(cycles[:, j])
            rep = np.array(reps, dtype=np.uint8).T if reps else np.zeros((n, 0), dtype=np.uint8)
            self._bases[key] = (rep, image if image.size else np.zeros((n, 0), dtype=np.uint8))
        return self._bases[key]

    def to_dict(self):
        out = {"mode": self.mode, "action_cut": float(self.action_cut), "components": []}
        for comp in self.components:
            entry = {"component": list(comp), "degrees": []}
            for k in self.degrees(comp):
                entry["degrees"].append({
                    "index": int(k),
                    "generators": [o.summary() for o in self.gens(comp, k)],
                    "boundary": self.d(comp, k).astype(int).tolist(),
                })
            entry["ranks"] = homology_ranks(self)[comp]
            out["components"].append(entry)
        return out


def bitmatrix_text(mat) -> str:
    """Plain-text bit matrix: one row per line, characters 0/1."""
    mat = np.asarray(mat, dtype=np.uint8)
    if mat.size == 0:
        return f"# {mat.shape[0]}x{mat.shape[1]}\n"
    lines = [f"# {mat.shape[0]}x{mat.shape[1]}"] + ["".join(str(int(b)) for b in row) for row in mat]
    return "\n".join(lines) + "\n"


def _group(orbits):
    groups: dict = {}
    for o in sorted(orbits, key=PeriodicOrbit.sort_key):
        groups.setdefault((o.component, o.index), []).append(o)
    return groups


def count_connections(xm, xp, P, mode: str = "heat", eps: float = 0.1, cache=None) -> int:
    """Number of connecting trajectories modulo shift from xm to xp (index difference one)."""
    from .floer import enumerate_M_eps
    from .heatflow import enumerate_M0

    key = (id(xm), id(xp))
    cache = {} if cache is None else cache
    if key not in cache:
        cache[key] = enumerate_M0(xm, xp, P)
    cyls = cache[key]
    if mode == "heat":
        return len(cyls)
    res = enumerate_M_eps(xm, xp, eps, P, cylinders=cyls, recheck=False)
    if not res.distinct:
        raise DegenerateComplex("two lifts coincide after time-shift alignment")
    return len(res.lifts)


def build_complex(P, a: float, mode: str = "heat", eps: float = 0.1, plan: SamplingPlan | None = None,
                  backend=None, orbits=None, cache=None) -> ChainComplex:
    """Z2 complex on the orbits of action at most ``a``; boundary entries are counts mod 2."""
    if mode not in ("heat", "floer"):
        raise ValueError("mode must be 'heat' or 'floer'")
    if orbits is None:
        orbits = enumerate_orbits(P, a, plan, backend=backend)
    orbits = [o for o in orbits if o.action <= a]
    groups = _group(orbits)
    boundary = {}
    counts = {}
    for (comp, k), gens in groups.items():
        below = groups.get((comp, k - 1), [])
        if not below:
            continue
        mat = np.zeros((len(below), len(gens)), dtype=np.uint8)
        for j, xm in enumerate(gens):
            for i, xp in enumerate(below):
                if xp.action >= xm.action:
                    continue
                cnt = count_connections(xm, xp, P, mode, eps, cache)
                counts[(comp, k, i, j)] = cnt
                mat[i, j] = cnt % 2
        boundary[(comp, k)] = mat
    cx = ChainComplex(generators=groups, boundary=boundary, action_cut=a,
                      mode=mode if mode == "heat" else f"floer({eps:g})", counts=counts)
    cx.check_square_zero()
    return cx


def homology_ranks(C: ChainComplex) -> dict:
    """Z2 Betti numbers per component, listed from degree 0 to the top degree present."""
    out = {}
    for comp in C.components:
        top = max(C.degrees(comp))
        ranks = []
        for k in range(top + 1):
            n = len(C.gens(comp, k))
            rk_out = gf2_rank(C.d(comp, k)) if n and C.gens(comp, k - 1) else 0
            rk_in = gf2_rank(C.d(comp, k + 1)) if n and C.gens(comp, k + 1) else 0
            ranks.append(int(n - rk_out - rk_in))
        out[comp] = ranks
    return out


def filtration_map(C_a: ChainComplex, C_b: ChainComplex) -> dict:
    """Inclusion-induced maps H_k(C_a) -> H_k(C_b) as Z2 matrices keyed by (component, degree)."""
    if C_a.action_cut > C_b.action_cut:
        raise NotNested("the first complex must have the lower action cut")
    maps = {}
    for (comp, k), gens_a in C_a.generators.items():
        gens_b = C_b.gens(comp, k)
        pos = []
        for g in gens_a:
            hit = [i for i, h in enumerate(gens_b) if h.loop.distance(g.loop) < 1e-6]
            if not hit:
                raise NotNested("a generator of the smaller complex is missing from the larger one")
            pos.append(hit[0])
        rep_a, _ = C_a.homology_basis(comp, k)
        rep_b, image_b = C_b.homology_basis(comp, k)
        mat = np.zeros((rep_b.shape[1], rep_a.shape[1]), dtype=np.uint8)
        for j in range(rep_a.shape[1]):
            pushed = np.zeros(len(gens_b), dtype=np.uint8)
            for src, dst in enumerate(pos):
                pushed[dst] ^= rep_a[src, j]
            system = np.hstack([rep_b, image_b]) if image_b.size else rep_b
            x = gf2_solve(system, pushed)
            if x is None:
                raise NotNested("pushed cycle is not a cycle in the larger complex")
            mat[:, j] = x[:rep_b.shape[1]]
        maps[(comp, k)] = mat
    for comp in C_b.components:
        for k in C_b.degrees(comp):
            if (comp, k) not in maps:
                rep_b, _ = C_b.homology_basis(comp, k)
                maps[(comp, k)] = np.zeros((rep_b.shape[1], 0), dtype=np.uint8)
    return maps


def compose(map_bc: dict, map_ab: dict) -> dict:
    out = {}
    for key, m_ab in map_ab.items():
        m_bc = map_bc.get(key)
        if m_bc is None:
            continue
        out[key] = (m_bc.astype(np.int64) @ m_ab.astype(np.int64) % 2).astype(np.uint8)
    return out


# ---------------------------------------------------------------------------
# reference loop-space homology


def _reference_ranks(key: str):
    """Z2 Betti numbers of a loop-space component.

    circle-contractible: contractible loops in the circle retract onto the
    constant loops, a circle.  circle-winding-w: loops of degree w retract
    onto the rotations t -> x0 + w t, again a circle.  torus2-contractible:
    constant loops, the 2-torus.
    """
    if key == "circle-contractible":
        return [1, 1]
    m = re.fullmatch(r"circle-winding-(-?\d+)", key)
    if m and int(m.group(1)) != 0:
        return [1, 1]
    if key == "torus2-contractible":
        return [1, 2, 1]
    raise UnknownReference(key)


def _reference_component(key: str):
    if key == "circle-contractible":
        return (0,)
    m = re.fullmatch(r"circle-winding-(-?\d+)", key)
    if m:
        return (int(m.group(1)),)
    return (0, 0)


@dataclass
class ReferenceReport:
    key: str
    expected: list
    measured: list
    per_degree: list
    passed: bool


def compare_reference(C: ChainComplex, reference_key: str) -> ReferenceReport:
    expected = _reference_ranks(reference_key)
    comp = _reference_component(reference_key)
    measured = homology_ranks(C).get(comp, [])
    top = max(len(expected), len(measured))
    exp = expected + [0] * (top - len(expected))
    got = measured + [0] * (top - len(measured))
    per = [e == g for e, g in zip(exp, got)]
    return ReferenceReport(reference_key, exp, got, per, all(per))
