"""Render stored summaries and binary payloads into JSON, CSV and bit-matrix artifacts."""

from __future__ import annotations

import numpy as np

from ..homology import bitmatrix_text
from ..lab import EstimateReport
from .formats import canonical_json, cylinder_csv, read_cylinder_binary, table_csv

FORMATS = ("json", "csv", "text")


def _report(record) -> dict:
    return {
        "command": record["command"],
        "scenario_id": record["scenario"]["id"],
        "options": record["options"],
        "verdicts": record["summary"]["verdicts"],
        "results": record["summary"]["results"],
    }


def _csv_tables(command, results, data):
    out = {}
    if command == "orbits":
        cols = ["id", "component", "index", "action", "nondeg_margin", "residual", "lowest_eigenvalue", "base_point"]
        out["orbits.csv"] = table_csv(results["orbits"], cols)
    elif command == "heat-connect":
        rows = []
        for e in results["pairs"]:
            for c in e["cylinders"]:
                rows.append(dict(c, **{"from": e["from"], "to": e["to"], "count": e["count"]}))
        cols = ["from", "to", "count", "file", "n_s", "n_t", "S", "energy", "energy_error", "spectral_flow",
                "action_monotone", "tail_rates"]
        out["cylinders.csv"] = table_csv(rows, cols)
        for name, blob in sorted(data.items()):
            cyl = read_cylinder_binary(blob)
            out[f"trajectories/{name[:-4]}.csv"] = cylinder_csv(cyl["s"], cyl["fields"]["coords"])
    elif command == "floer-lift" and "lifts" in results:
        cols = ["from", "to", "cylinder", "eps", "iterations", "residual", "triple_norm", "energy", "energy_error",
                "exact", "n_s", "n_t"]
        out["lifts.csv"] = table_csv(results["lifts"], cols)
        hist = []
        for r in results["lifts"]:
            corr = [None] + list(r["correction_history"])
            for it, res in enumerate(r["residual_history"]):
                hist.append({"from": r["from"], "to": r["to"], "cylinder": r["cylinder"], "eps": r["eps"],
                             "iteration": it, "residual": res,
                             "correction_triple_norm": corr[it] if corr[it] is not None else float("nan")})
        out["histories.csv"] = table_csv(hist, ["from", "to", "cylinder", "eps", "iteration", "residual",
                                                "correction_triple_norm"])
        for name, blob in sorted(data.items()):
            cyl = read_cylinder_binary(blob)
            out[f"snapshots/{name[:-4]}.csv"] = cylinder_csv(cyl["s"], cyl["fields"]["coords"], cyl["fields"]["v"])
    elif command == "floer-lift":
        row = results["time_shift"]
        out["time_shift.csv"] = table_csv([row], ["eps", "sigma0", "sigma", "error", "slope_min", "constant"])
    elif command == "count-check":
        out["counts.csv"] = table_csv(results["counts"], ["from", "to", "eps", "heat_count", "floer_count",
                                                          "distinct", "uniqueness"])
    elif command == "homology":
        rows = []
        for mode, entry in results["modes"].items():
            for comp, ranks in entry["ranks"].items():
                for k, r in enumerate(ranks):
                    rows.append({"mode": mode, "component": comp, "degree": k, "rank": r})
        out["ranks.csv"] = table_csv(rows, ["mode", "component", "degree", "rank"])
    elif command == "estimates":
        for k, rep in enumerate(results["reports"]):
            obj = EstimateReport(rep["estimate_id"], rep["parameter_grid"],
                                 [np.nan if c is None else c for c in rep["measured_constant"]],
                                 rep["bound_satisfied"], trend=rep["trend"])
            out[f"estimates/{k:02d}_{rep['estimate_id']}.csv"] = obj.to_csv().encode()
    elif command == "sweep":
        cols = ["eps", "iterations", "residual", "triple_norm", "energy_error", "decay_rate", "decay_fit_residual",
                "exact"]
        out["sweep.csv"] = table_csv(results["lifts"], cols)
    return out


def _bitmatrices(command, results):
    out = {}
    if command != "homology":
        return out
    for mode, entry in results["modes"].items():
        for comp in entry["complex"]["components"]:
            key = "_".join(str(c) for c in comp["component"])
            for deg in comp["degrees"]:
                mat = np.array(deg["boundary"], dtype=np.uint8)
                rows = len(deg["boundary"])
                if rows == 0:
                    continue
                out[f"boundary/{mode.split('(')[0]}_c{key}_d{deg['index']}.txt"] = bitmatrix_text(mat).encode()
    return out


def render(record: dict, data: dict, fmt: str) -> dict:
    """Artifacts of one format as {relative name: bytes}."""
    if fmt == "json":
        return {"report.json": canonical_json(_report(record))}
    if fmt == "csv":
        return _csv_tables(record["command"], record["summary"]["results"], data)
    if fmt == "text":
        return _bitmatrices(record["command"], record["summary"]["results"])
    raise ValueError(f"unknown format {fmt!r}")


def render_all(record: dict, data: dict) -> dict:
    out = {}
    for fmt in FORMATS:
        out.update(render(record, data, fmt))
    return out
