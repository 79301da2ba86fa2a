"""Pipeline stages.  Each stage returns (summary, data) where summary is JSON-ready.

``summary`` always carries ``verdicts`` (name -> bool) and ``results``.
``data`` maps file names to binary payloads (cylinder snapshots).  Artifacts
are rendered from these two alone, so a stored run can be re-emitted.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .. import floer as fl
from .. import heatflow as hf
from .. import homology as hm
from .. import lab
from ..critical import enumerate_orbits, spectrum
from ..errors import ConfigInvalid, IndexMismatch
from .formats import write_cylinder_binary

log = logging.getLogger("loopfloer.driver")

ENERGY_TOL_HEAT = 1e-6
ENERGY_TOL_FLOER = 1e-5
RESIDUAL_TOL = 1e-9
EXPONENT_MIN = 1.8
DECAY_SPREAD = 1.2
SHIFT = 0.07
SHIFT_TOL = 1e-4


class Context:
    """Lazily computed objects shared by the stages of one invocation."""

    def __init__(self, scenario, workers: int = 1):
        self.sc = scenario
        self.P = scenario.perturbation()
        self.backend = scenario.backend()
        self.workers = workers
        self._orbits = None
        self.cache = {}

    @property
    def orbits(self):
        if self._orbits is None:
            self._orbits = enumerate_orbits(self.P, self.sc.action_cut, self.sc.plan(), backend=self.backend)
        return self._orbits

    def pairs(self):
        """(i, j) index pairs into ``orbits`` with index drop one inside a component, action decreasing."""
        out = []
        for i, a in enumerate(self.orbits):
            for j, b in enumerate(self.orbits):
                if a.component == b.component and a.index - b.index == 1 and a.action > b.action:
                    out.append((i, j))
        return out

    def cylinders(self, i, j):
        xm, xp = self.orbits[i], self.orbits[j]
        key = (id(xm), id(xp))
        if key not in self.cache:
            self.cache[key] = hf.enumerate_M0(xm, xp, self.P, h_s=self.sc.h_s)
        return self.cache[key]

    def first_cylinder(self):
        pairs = self.pairs()
        if not pairs:
            raise IndexMismatch("scenario has no pair of orbits with index difference one")
        cyls = self.cylinders(*pairs[0])
        if not cyls:
            raise IndexMismatch("no connecting cylinder for the first pair")
        return pairs[0], cyls[0]


def _orbit_row(k, o, P):
    row = o.summary()
    row["id"] = k
    row["lowest_eigenvalue"] = float(spectrum(o, P, k=1)[0])
    return row


def stage_orbits(ctx: Context, options: dict):
    rows = [_orbit_row(k, o, ctx.P) for k, o in enumerate(ctx.orbits)]
    verdicts = {"nondegenerate": all(r["nondeg_margin"] > 1e-8 for r in rows)}
    return {"verdicts": verdicts, "results": {"orbits": rows}}, {}


def stage_heat_connect(ctx: Context, options: dict):
    rows, data = [], {}
    for i, j in ctx.pairs():
        xm, xp = ctx.orbits[i], ctx.orbits[j]
        cyls = ctx.cylinders(i, j)
        entry = {"from": i, "to": j, "count": len(cyls), "action_drop": xm.action - xp.action, "cylinders": []}
        for k, c in enumerate(cyls):
            name = f"cylinder_{i}_{j}_{k}.lfc"
            energy = hf.parabolic_energy(c, ctx.P)
            acts = c.actions(ctx.P)
            (ls, lr), (rs, rr) = hf.tail_fit(c, ctx.P)
            entry["cylinders"].append({
                "file": name, "n_s": c.n_s, "n_t": c.n_t, "S": c.S, "h_s": c.h_s, "energy": energy,
                "energy_error": energy - (xm.action - xp.action),
                "spectral_flow": hf.spectral_flow_index(c, ctx.P),
                "action_monotone": bool(np.all(np.diff(acts) <= 1e-12)),
                "tail_rates": [ls, rs], "tail_residuals": [lr, rr],
                "endpoint_distances": list(c.endpoint_distances()),
            })
            data[name] = write_cylinder_binary(c.s, {"coords": c.coords}, c.h_s, {"from": i, "to": j, "index": k})
        rows.append(entry)
    cyl = [c for e in rows for c in e["cylinders"]]
    verdicts = {
        "energy_identity": all(abs(c["energy_error"]) <= ENERGY_TOL_HEAT for c in cyl),
        "spectral_flow_one": all(c["spectral_flow"] == 1 for c in cyl),
        "action_monotone": all(c["action_monotone"] for c in cyl),
    }
    return {"verdicts": verdicts, "results": {"pairs": rows}}, data


def _lift_row(ctx, i, j, k, eps, res, xm, xp):
    energy = fl.energy_eps(res.pair, ctx.P)
    return {
        "from": i, "to": j, "cylinder": k, "eps": eps, "iterations": res.iterations,
        "residual": res.residual_history[-1], "triple_norm": res.triple_norm,
        "energy": energy, "energy_error": energy - (xm.action - xp.action), "exact": res.pair.exact,
        "projection_steps": res.projection_steps, "residual_history": res.residual_history,
        "correction_history": res.correction_history, "n_s": res.base.n_s, "n_t": res.base.n_t,
    }


def stage_floer_lift(ctx: Context, options: dict):
    if options.get("stage") == "time-shift":
        return _time_shift(ctx, options)
    rows, data = [], {}
    for i, j in ctx.pairs():
        xm, xp = ctx.orbits[i], ctx.orbits[j]
        for k, c in enumerate(ctx.cylinders(i, j)):
            for eps in ctx.sc.eps_list:
                res = fl.newton_picard_lift(c, eps, ctx.P, p=ctx.sc.p_list[0])
                row = _lift_row(ctx, i, j, k, eps, res, xm, xp)
                row["file"] = f"lift_{i}_{j}_{k}_eps{eps:g}.lfc"
                data[row["file"]] = write_cylinder_binary(res.pair.u.s, {"coords": res.pair.u.coords, "v": res.pair.v},
                                                          res.pair.u.h_s, {"eps": eps})
                rows.append(row)
    verdicts = {
        "residual": all(r["residual"] < RESIDUAL_TOL for r in rows),
        "energy_identity": all(abs(r["energy_error"]) <= ENERGY_TOL_FLOER for r in rows if r["exact"]),
    }
    return {"verdicts": verdicts, "results": {"lifts": rows}}, data


def _time_shift(ctx: Context, options: dict):
    (i, j), c = ctx.first_cylinder()
    eps = ctx.sc.eps_list[min(1, len(ctx.sc.eps_list) - 1)]
    base = fl.newton_picard_lift(c, eps, ctx.P)
    shifted = hf.shift_cylinder(base.base, SHIFT)
    lifted = fl.newton_picard_lift(shifted, eps, ctx.P)
    fit = fl.fit_time_shift(base.base, lifted.pair, eps, ctx.P, setup=base.setup)
    row = {"eps": eps, "sigma0": SHIFT, "sigma": fit.sigma, "error": fit.sigma - SHIFT,
           "bracket": list(fit.bracket), "slope_min": fit.slope_min, "constant": fit.constant}
    verdicts = {"recovered": abs(fit.sigma - SHIFT) < SHIFT_TOL, "monotone": fit.slope_min > 0}
    return {"verdicts": verdicts, "results": {"time_shift": row}}, {}


def stage_count_check(ctx: Context, options: dict):
    rows = []
    for i, j in ctx.pairs():
        xm, xp = ctx.orbits[i], ctx.orbits[j]
        cyls = ctx.cylinders(i, j)
        for eps in ctx.sc.eps_list:
            res = fl.enumerate_M_eps(xm, xp, eps, ctx.P, cylinders=cyls)
            rows.append({"from": i, "to": j, "eps": eps, "heat_count": len(cyls), "floer_count": len(res.lifts),
                         "distinct": res.distinct, "uniqueness": res.uniqueness,
                         "alignment": [[a, b, d] for a, b, d in res.alignment]})
    verdicts = {
        "counts_equal": all(r["heat_count"] == r["floer_count"] for r in rows),
        "distinct": all(r["distinct"] for r in rows),
        "unique": all(all(r["uniqueness"]) for r in rows),
    }
    return {"verdicts": verdicts, "results": {"counts": rows}}, {}


def _comp_key(comp):
    return ",".join(str(c) for c in comp)


def _functorial(ctx: Context):
    cuts = sorted(float(a) for a in ctx.sc.data["nested_cuts"])
    if len(cuts) < 3:
        return None, {}
    cxs = [hm.build_complex(ctx.P, a, "heat", orbits=ctx.orbits, cache=ctx.cache) for a in cuts[:3]]
    f_ab = hm.filtration_map(cxs[0], cxs[1])
    f_bc = hm.filtration_map(cxs[1], cxs[2])
    f_ac = hm.filtration_map(cxs[0], cxs[2])
    comp = hm.compose(f_bc, f_ab)
    ok = all(np.array_equal(comp[k], f_ac[k]) for k in f_ac if k in comp)
    ident = hm.filtration_map(cxs[0], cxs[0])
    ok_id = all(np.array_equal(m, np.eye(m.shape[0], dtype=np.uint8)) for m in ident.values())
    detail = {"cuts": cuts[:3], "ranks": [{_comp_key(c): r for c, r in hm.homology_ranks(cx).items()} for cx in cxs]}
    return bool(ok and ok_id), detail


def stage_homology(ctx: Context, options: dict):
    modes = options.get("modes") or ["heat", "floer"]
    eps = ctx.sc.eps_list[0]
    ref_key = ctx.sc.data.get("reference")
    out, verdicts = {}, {}
    for mode in modes:
        cx = hm.build_complex(ctx.P, ctx.sc.action_cut, mode, eps=eps, orbits=ctx.orbits, cache=ctx.cache)
        ranks = {_comp_key(c): r for c, r in hm.homology_ranks(cx).items()}
        entry = {"ranks": ranks, "complex": cx.to_dict(), "square_zero": True}
        if ref_key:
            rep = hm.compare_reference(cx, ref_key)
            entry["reference"] = {"key": rep.key, "expected": rep.expected, "measured": rep.measured,
                                  "per_degree": rep.per_degree}
            verdicts[f"reference_{mode}"] = rep.passed
        out[mode] = entry
    if len(modes) > 1:
        verdicts["modes_agree"] = all(out[m]["ranks"] == out[modes[0]]["ranks"] for m in modes)
    functorial, detail = _functorial(ctx)
    if functorial is not None:
        verdicts["filtration_functorial"] = functorial
    verdicts["square_zero"] = True
    return {"verdicts": verdicts, "results": {"eps": eps, "modes": out, "filtration": detail}}, {}


# ---------------------------------------------------------------------------
# estimates


def _run_task(task):
    name, kwargs = task
    return getattr(lab, name)(**kwargs).to_dict()


def _pool_map(tasks, workers):
    if workers <= 1 or len(tasks) < 2:
        return [_run_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(_run_task, tasks))


def estimate_tasks(ctx: Context, group: str) -> list:
    sc = ctx.sc
    tasks = []
    if group in ("mean_value", "all"):
        for eps in (0.25, 1.0):
            for r in (0.5, 1.0):
                for a in (0.0, 1.0):
                    tasks.append(("mean_value_check", {"eps": eps, "r": r, "a": a}))
    if group in ("multiplier", "all"):
        tasks += [("multiplier_condition_check", {"m_id": m}) for m in lab.SYMBOLS]
    if group in ("lp", "all"):
        for p in sc.p_list:
            tasks.append(("lp_inequality_check", {"which": "cz", "p": p, "seed": sc.seed}))
            tasks.append(("lp_inequality_check", {"which": "parabolic", "p": p, "seed": sc.seed}))
            tasks.append(("lp_inequality_check", {"which": "cz_eps", "p": p, "eps": [1.0, 0.5, 0.25, 0.125],
                                                  "seed": sc.seed}))
    if group in ("eat", "all"):
        for p in sc.p_list:
            for eps in sc.eps_list:
                tasks.append(("eat_eps_check", {"p": p, "eps": eps, "n_t": sc.n_t, "seed": sc.seed}))
    return tasks


def stage_estimates(ctx: Context, options: dict):
    group = options.get("stage") or "all"
    groups = ("mean_value", "multiplier", "lp", "eat", "linear", "nonlinear", "all")
    if group not in groups:
        raise ConfigInvalid(f"--stage for estimates must be one of {', '.join(groups)}")
    reports = _pool_map(estimate_tasks(ctx, group), ctx.workers)
    if group == "linear":
        _, c = ctx.first_cylinder()
        c = hf.project_to_moduli(c, ctx.P).cylinder
        p = ctx.sc.p_list[0]
        for which in ("elliptic", "inverse", "composite"):
            reports.append(lab.linear_estimate_sweep(c, which, p, ctx.sc.eps_list, ctx.P, seed=ctx.sc.seed).to_dict())
        reports.append(lab.linear_estimate_sweep(c, "balanced", 4.0, ctx.sc.eps_list, ctx.P,
                                                 seed=ctx.sc.seed).to_dict())
    if group == "nonlinear":
        _, c = ctx.first_cylinder()
        pairs = [fl.newton_picard_lift(c, eps, ctx.P).pair for eps in ctx.sc.eps_list]
        for which in ("apriori", "gradient", "second", "decay"):
            reports.append(lab.nonlinear_bound_sweep(pairs, ctx.P, which).to_dict())
    verdicts = {}
    for r in reports:
        key = r["estimate_id"]
        verdicts[key] = verdicts.get(key, True) and all(r["bound_satisfied"])
    return {"verdicts": verdicts, "results": {"group": group, "reports": reports}}, {}


def fit_exponent(eps_list, values):
    """Least-squares slope of log(value) against log(eps)."""
    return float(np.polyfit(np.log(eps_list), np.log(values), 1)[0])


def stage_sweep(ctx: Context, options: dict):
    (i, j), c = ctx.first_cylinder()
    xm, xp = ctx.orbits[i], ctx.orbits[j]
    rows, pairs = [], []
    proj = hf.project_to_moduli(c, ctx.P).cylinder
    for eps in ctx.sc.eps_list:
        res = fl.newton_picard_lift(proj, eps, ctx.P, p=ctx.sc.p_list[0])
        row = _lift_row(ctx, i, j, 0, eps, res, xm, xp)
        pairs.append(res.pair)
        rows.append(row)
    decay = lab.nonlinear_bound_sweep(pairs, ctx.P, "decay")
    for row, rho, g in zip(rows, decay.measured_constant, decay.parameter_grid):
        row["decay_rate"] = rho
        row["decay_fit_residual"] = g["fit_residual"]
    eps = [r["eps"] for r in rows]
    norms = [r["triple_norm"] for r in rows]
    exponent = fit_exponent(eps, norms) if len(rows) > 1 and min(norms) > 0 else float("nan")
    rates = [r["decay_rate"] for r in rows]
    verdicts = {
        "residual": all(r["residual"] < RESIDUAL_TOL for r in rows),
        "exponent": bool(exponent >= EXPONENT_MIN),
        "energy_identity": all(abs(r["energy_error"]) <= ENERGY_TOL_FLOER for r in rows if r["exact"]),
        "decay_fit": all(r["decay_rate"] > 0 and r["decay_fit_residual"] < 1e-2 for r in rows),
        "decay_uniform": bool(max(rates) / min(rates) <= DECAY_SPREAD) if min(rates) > 0 else False,
    }
    return {"verdicts": verdicts, "results": {"lifts": rows, "exponent": exponent}}, {}


STAGES = {
    "orbits": stage_orbits,
    "heat-connect": stage_heat_connect,
    "floer-lift": stage_floer_lift,
    "count-check": stage_count_check,
    "homology": stage_homology,
    "estimates": stage_estimates,
    "sweep": stage_sweep,
}
