"""Doerfler marking and the SOLVE -> ESTIMATE -> MARK -> REFINE driver."""
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import List

import numpy as np

from .assembly import assemble, inconsistency_pairing
from .config import RunConfig
from .estimator import IndicatorField, boundary_seminorms, energy_error_sq, estimate, total_error
from .hbspline import build_space
from .hmesh import initial_mesh, is_admissible, refine, uniform_refine
from .solve import SolverError, solve

log = logging.getLogger(__name__)


def mark(indicators, theta: float):
    """Smallest set of cells carrying at least theta of the total eta^2.

    `indicators` is an IndicatorField or a mapping cell -> eta^2. Cells are
    taken in order of decreasing eta^2, ties broken by the cell ordering.
    """
    if not (0 < theta <= 1):
        raise ValueError(f"theta must lie in (0, 1], got {theta}")
    items = indicators.as_dict() if isinstance(indicators, IndicatorField) else dict(indicators)
    if any(v < 0 for v in items.values()):
        raise ValueError("indicators must be nonnegative")
    total = math.fsum(items.values())
    if total == 0:
        return []
    target = theta * total
    order = sorted(items, key=lambda c: (-items[c], c))
    chosen, acc = [], []
    for c in order:
        if items[c] == 0:
            break
        chosen.append(c)
        acc.append(items[c])
        if math.fsum(acc) >= target:
            break
    return chosen


def doerfler_holds(indicators, marked, theta) -> bool:
    items = dict(indicators)
    return math.fsum(items[c] for c in marked) >= theta * math.fsum(items.values())


@dataclass
class AfemRecord:
    iteration: int
    ndofs: int
    ncells: int
    max_level: int
    h_max: float
    eta_sq: float
    osc_sq: float
    energy_error: float  # nan without an exact solution
    rho_sq: float
    bnd_value: float  # ||U||^2_{3/2}
    bnd_normal: float  # ||dU/dn||^2_{1/2}
    a_err: float  # a_P(u - U, u - U)
    Q: float  # a_err + c_est * eta_sq, or eta_sq alone
    n_marked: int
    cum_marked: int
    pairing: float = float("nan")
    seconds: float = 0.0

    def as_dict(self):
        return asdict(self)


FIELDS = tuple(AfemRecord.__dataclass_fields__)


@dataclass
class RunResult:
    config: RunConfig
    records: List[AfemRecord]
    meshes: list = field(repr=False)
    coeffs: np.ndarray = field(repr=False, default=None)
    indicators: IndicatorField = field(repr=False, default=None)
    stop_reason: str = ""

    @property
    def final(self) -> AfemRecord:
        return self.records[-1]


def _step(cfg, mesh, f, exact, iteration, pairing_v=None):
    t0 = time.perf_counter()
    space = build_space(mesh, cfg.degree)
    order = cfg.quad_order
    system = assemble(space, f, cfg.gamma1, cfg.gamma2, order)
    try:
        U = solve(system.matrix, system.load, rtol=cfg.solver_tol, direct_limit=cfg.direct_limit)
    except SolverError as exc:
        raise SolverError(f"iteration {iteration} ({space.n_dofs} dofs): {exc}") from exc
    ind = estimate(space, U, f, order)
    bv, bn = boundary_seminorms(space, U, order)
    eta_sq = ind.total_sq
    nan = float("nan")
    err = rho_sq = a_err = nan
    Q = eta_sq
    if exact is not None and cfg.report_error:
        te = total_error(space, U, exact, cfg.gamma1, cfg.gamma2, order)
        err, rho_sq = te.energy_error, te.rho ** 2
        a_err = energy_error_sq(space, U, exact, cfg.gamma1, cfg.gamma2, order)
        Q = a_err + cfg.c_est * eta_sq
    pairing = nan
    if pairing_v is not None and exact is not None:
        pairing = inconsistency_pairing(space, exact, pairing_v, order)
    rec = AfemRecord(
        iteration, space.n_dofs, len(mesh.cells), mesh.max_level, mesh.h_max, eta_sq, ind.osc_total_sq,
        err, rho_sq, bv, bn, a_err, Q, 0, 0, pairing,
    )
    rec.seconds = time.perf_counter() - t0
    return rec, U, ind


def afem_run(cfg: RunConfig, callback=None) -> RunResult:
    """Adaptive loop from the uniform mesh of level cfg.initial_level."""
    f, exact = cfg.source_function()
    mesh = initial_mesh(cfg.initial_level, m=cfg.m, degree=cfg.degree)
    records, meshes, cum = [], [mesh], 0
    reason = "max_iter"
    for it in range(cfg.max_iter):
        rec, U, ind = _step(cfg, mesh, f, exact, it)
        stop = None
        if math.sqrt(rec.eta_sq) <= cfg.eta_tol:
            stop = "eta_tol"
        elif it == cfg.max_iter - 1:
            stop = "max_iter"
        if stop is None:
            marked = mark(ind, cfg.theta)
            rec.n_marked = len(marked)
            cum += len(marked)
            new = refine(mesh, marked)
            if len(build_space(new, cfg.degree).functions) > cfg.max_dofs:
                stop = "max_dofs"
        rec.cum_marked = cum
        records.append(rec)
        log.info("it=%d dofs=%d cells=%d eta=%.3e err=%.3e marked=%d", it, rec.ndofs, rec.ncells,
                 math.sqrt(rec.eta_sq), rec.energy_error, rec.n_marked)
        if callback:
            callback(rec)
        if stop:
            reason = stop
            break
        mesh = new
        meshes.append(mesh)
    return RunResult(cfg, records, meshes, U, ind, reason)


def uniform_run(cfg: RunConfig, levels=None, pairing_v=None, callback=None) -> RunResult:
    """One solve per uniform level; `pairing_v` adds the inconsistency pairing."""
    f, exact = cfg.source_function()
    lo, hi = cfg.levels if levels is None else levels
    mesh = initial_mesh(lo, m=cfg.m, degree=cfg.degree)
    records, meshes = [], []
    for it, level in enumerate(range(lo, hi + 1)):
        rec, U, ind = _step(cfg, mesh, f, exact, it, pairing_v)
        records.append(rec)
        meshes.append(mesh)
        if callback:
            callback(rec)
        if level < hi:
            mesh = uniform_refine(mesh)
    return RunResult(cfg, records, meshes, U, ind, "levels")


def complexity_ratio(result: RunResult) -> float:
    """max_k (#P_k - #P_0) / sum_{l<k} #M_l over the run."""
    n0 = result.records[0].ncells
    best = 0.0
    for prev, rec in zip(result.records, result.records[1:]):
        if prev.cum_marked:
            best = max(best, (rec.ncells - n0) / prev.cum_marked)
    return best


def check_nested(result: RunResult) -> bool:
    """Consecutive meshes are nested refinements and all admissible."""
    for a, b in zip(result.meshes, result.meshes[1:]):
        if not (set(a.cells) <= b.nodes):
            return False
    return all(is_admissible(m) for m in result.meshes)
