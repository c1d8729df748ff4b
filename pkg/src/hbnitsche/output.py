"""Run logs, convergence-rate fits, matrix dumps and summary reports."""
import csv
import json
import math
import os
from dataclasses import fields

import numpy as np

from .adapt import FIELDS, AfemRecord, RunResult, complexity_ratio

_INT_FIELDS = {f.name for f in fields(AfemRecord) if f.type in (int, "int")}


def write_run_log(records, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(FIELDS)
        for rec in records:
            d = rec.as_dict()
            w.writerow([d[k] if k in _INT_FIELDS else repr(float(d[k])) for k in FIELDS])


def read_run_log(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if rows and set(rows[0]) != set(FIELDS):
        raise ValueError(f"{path}: columns {sorted(rows[0])} do not match a run log")
    return [AfemRecord(**{k: int(r[k]) if k in _INT_FIELDS else float(r[k]) for k in FIELDS}) for r in rows]


def fit_slope(x, q):
    """Least-squares slope of log q against log x. Needs at least 3 points."""
    x = np.asarray(x, dtype=float)
    q = np.asarray(q, dtype=float)
    if len(x) != len(q):
        raise ValueError("x and q differ in length")
    keep = np.isfinite(q) & (q > 0) & np.isfinite(x) & (x > 0)
    if keep.sum() < 3:
        raise ValueError(f"need at least 3 positive data points for a rate, got {int(keep.sum())}")
    return float(np.polyfit(np.log(x[keep]), np.log(q[keep]), 1)[0])


RATE_QUANTITIES = {
    "energy_error": lambda r: r.energy_error,
    "eta": lambda r: math.sqrt(r.eta_sq),
    "osc": lambda r: math.sqrt(r.osc_sq),
    "pairing": lambda r: abs(r.pairing),
}


def rates(records):
    """{quantity: {"h": slope vs h_max, "N": slope vs N^(-1/2)}}; quantities
    lacking three usable values are skipped."""
    h = [r.h_max for r in records]
    n = [r.ndofs ** -0.5 for r in records]
    out = {}
    for name, get in RATE_QUANTITIES.items():
        q = [get(r) for r in records]
        try:
            out[name] = {"h": fit_slope(h, q), "N": fit_slope(n, q)}
        except ValueError:
            continue
    if not out and len(records) < 3:
        raise ValueError(f"need at least 3 records for rates, got {len(records)}")
    return out


def measured_constants(result: RunResult):
    recs = result.records
    cfg = result.config
    c = {}
    eff = [math.sqrt(r.eta_sq) / r.energy_error for r in recs if r.energy_error > 0]
    if eff:
        c["effectivity_min"], c["effectivity_max"] = min(eff), max(eff)
    bnd = [(cfg.gamma1 * r.bnd_value + cfg.gamma2 * r.bnd_normal) / r.eta_sq for r in recs if r.eta_sq > 0]
    if bnd:
        c["boundary_control"] = max(bnd)
    if len(recs) > 1:
        ratios = [b.eta_sq / a.eta_sq for a, b in zip(recs, recs[1:]) if a.eta_sq > 0]
        if ratios:
            c["eta_sq_ratio_max"] = max(ratios)
            c["eta_sq_ratio_geomean"] = math.exp(sum(map(math.log, ratios)) / len(ratios)) if min(ratios) > 0 else 0.0
        c["complexity_ratio"] = complexity_ratio(result)
    return c


def summary(result: RunResult) -> dict:
    last = result.final
    out = {
        "config": result.config.as_dict(),
        "stop_reason": result.stop_reason,
        "iterations": len(result.records),
        "final": last.as_dict(),
        "final_eta": math.sqrt(last.eta_sq),
        "constants": measured_constants(result),
    }
    if len(result.records) >= 3:
        out["rates"] = rates(result.records)
    return out


def _clean(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def write_summary(result: RunResult, path):
    with open(path, "w") as fh:
        json.dump(_clean(summary(result)), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_matrix_coo(A, path):
    A = A.tocoo()
    order = np.lexsort((A.col, A.row))
    with open(path, "w") as fh:
        fh.write(f"# {A.shape[0]} {A.shape[1]} {A.nnz}\n")
        for k in order:
            fh.write(f"{A.row[k]} {A.col[k]} {float(A.data[k])!r}\n")


def read_matrix_coo(path):
    import scipy.sparse as sps

    with open(path) as fh:
        n, mcols, _ = map(int, fh.readline().lstrip("#").split())
        data = np.loadtxt(fh, ndmin=2)
    if data.size == 0:
        return sps.csr_matrix((n, mcols))
    return sps.coo_matrix((data[:, 2], (data[:, 0].astype(int), data[:, 1].astype(int))), shape=(n, mcols)).tocsr()


def write_outputs(result: RunResult, outdir):
    """Run log, summary, final mesh/edges/dofs and indicators under outdir."""
    from .estimator import write_indicators_csv
    from .hbspline import build_space, write_dofs_csv
    from .hmesh import write_edges_csv, write_mesh_csv

    os.makedirs(outdir, exist_ok=True)
    write_run_log(result.records, os.path.join(outdir, "run_log.csv"))
    write_summary(result, os.path.join(outdir, "summary.json"))
    mesh = result.meshes[-1]
    write_mesh_csv(mesh, os.path.join(outdir, "mesh.csv"))
    write_edges_csv(mesh, os.path.join(outdir, "edges.csv"))
    write_dofs_csv(build_space(mesh, result.config.degree), os.path.join(outdir, "dofs.csv"))
    if result.indicators is not None:
        write_indicators_csv(result.indicators, os.path.join(outdir, "indicators.csv"))
