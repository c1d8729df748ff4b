"""Residual a posteriori indicators, data oscillation and error diagnostics.

Per active cell

    eta^2(T) = h_T^4 ||f - bilap U||^2_T
               + sum over interior edges e on the boundary of T of
                 h_e^3 ||[d lap U / dn]||^2_e + h_e ||[lap U]||^2_e

with h_T the cell diameter and h_e the edge length. Every interior edge is
charged to both neighbours, so the global sum counts each jump twice.
Boundary edges carry no jump term.
"""
import csv
import math
from dataclasses import dataclass

import numpy as np

from .assembly import boundary_samples, mesh_norms, nitsche_energy, _boundary_sums
from .hbspline import HBSplineSpace, sample_cells
from .projection import sample_operator
from .quadrature import cell_rule, edge_rule

SQRT2 = math.sqrt(2.0)


@dataclass
class IndicatorField:
    cells: tuple  # active cells, in mesh order
    residual_sq: np.ndarray
    jump_sq: np.ndarray
    osc_sq: np.ndarray

    @property
    def eta_sq(self) -> np.ndarray:
        return self.residual_sq + self.jump_sq

    @property
    def total_sq(self) -> float:
        return math.fsum(self.eta_sq)

    @property
    def total(self) -> float:
        return math.sqrt(self.total_sq)

    @property
    def osc_total_sq(self) -> float:
        return math.fsum(self.osc_sq)

    def subset_sq(self, cells) -> float:
        pos = {c: k for k, c in enumerate(self.cells)}
        eta = self.eta_sq
        return math.fsum(eta[pos[c]] for c in cells)

    def as_dict(self):
        return dict(zip(self.cells, self.eta_sq))


def _order(space, order):
    return space.degree + 2 if order is None else order


def _cell_residuals(space, coeffs, f, order):
    r = space.degree
    rule = cell_rule(order)
    S0 = sample_operator(r - 2, order, rule.points)[0]
    n = len(space.mesh.cells)
    res, osc = np.zeros(n), np.zeros(n)
    for sel, lb in space.cell_batches():
        s = 2.0 ** -lb.level
        x = (lb.idx[:, None, 0] + rule.points[None, :, 0]) * s
        y = (lb.idx[:, None, 1] + rule.points[None, :, 1]) * s
        fq = np.asarray(f(x, y), dtype=float) * np.ones_like(x)
        w = rule.weights * s * s
        h4 = (SQRT2 * s) ** 4
        if coeffs is not None:
            bilap = lb.field(coeffs, rule.points, ("bilap",))["bilap"]
            res[sel] = h4 * np.sum(w * (fq - bilap) ** 2, axis=1)
        osc[sel] = h4 * np.sum(w * (fq - fq @ S0.T) ** 2, axis=1)
    return res, osc


def _edge_jumps(space, coeffs, order):
    """Per interior edge: h^3 ||[d lap U/dn]||^2 + h ||[lap U]||^2."""
    interior = space.mesh.edges()[0]
    if not interior:
        return interior, np.zeros(0)
    t = edge_rule(order).points[:, 0]
    w = edge_rule(order).weights
    pts = np.stack([e.points(t) for e in interior])  # (E, q, 2)
    normals = np.array([e.normal for e in interior], dtype=float)
    names = ("lap", "lap_dx", "lap_dy")
    sides = []
    for k in (0, 1):
        cells = [e.cells[k] for e in interior]
        lev = np.array([c.level for c in cells])
        ij = np.array([(c.i, c.j) for c in cells])
        ref = pts * (2.0 ** lev)[:, None, None] - ij[:, None, :]
        sides.append(sample_cells(space, coeffs, cells, ref, names))
    minus, plus = sides
    j_lap = minus["lap"] - plus["lap"]
    j_dn = (normals[:, :1] * (minus["lap_dx"] - plus["lap_dx"])
            + normals[:, 1:] * (minus["lap_dy"] - plus["lap_dy"]))
    h = np.array([e.h for e in interior])
    return interior, h ** 3 * h * np.sum(w * j_dn ** 2, axis=1) + h * h * np.sum(w * j_lap ** 2, axis=1)


def estimate(space: HBSplineSpace, coeffs, f, order: int = None) -> IndicatorField:
    """Residual indicators of the discrete solution `coeffs` for source f(x, y)."""
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape != (space.n_dofs,):
        raise ValueError(f"solution has {coeffs.shape} coefficients, space has {space.n_dofs} dofs")
    order = _order(space, order)
    res, osc = _cell_residuals(space, coeffs, f, order)
    cells = space.mesh.cells
    pos = {c: k for k, c in enumerate(cells)}
    jump = np.zeros(len(cells))
    interior, contrib = _edge_jumps(space, coeffs, order)
    for e, v in zip(interior, contrib):
        for c in e.cells:
            jump[pos[c]] += v
    return IndicatorField(tuple(cells), res, jump, osc)


def oscillation(space: HBSplineSpace, f, order: int = None):
    """Per-cell h_T^4 ||f - P f||^2 and its total."""
    _, osc = _cell_residuals(space, None, f, _order(space, order))
    return osc, math.fsum(osc)


def boundary_seminorms(space: HBSplineSpace, coeffs, order: int = None):
    """(||U||^2_{3/2}, ||dU/dn||^2_{1/2}) over the boundary edges."""
    bs = boundary_samples(space, np.asarray(coeffs, dtype=float), _order(space, order), projected=False)
    return _boundary_sums(bs)


@dataclass(frozen=True)
class TotalError:
    energy_error: float
    rho: float
    osc_sq: float


def total_error(space, coeffs, exact, gamma1=100.0, gamma2=100.0, order: int = None) -> TotalError:
    """Energy-norm error |||u - U||| and rho = sqrt(error^2 + osc^2)."""
    order = _order(space, order)
    err = mesh_norms(space, coeffs, gamma1, gamma2, order=order + 2, exact=exact).total
    _, osc = oscillation(space, exact.f, order)
    return TotalError(err, math.sqrt(err * err + osc), osc)


def energy_error_sq(space, coeffs, exact, gamma1, gamma2, order: int = None) -> float:
    """a_P(u - U, u - U), which need not be positive for small gamma."""
    return nitsche_energy(space, coeffs, gamma1, gamma2, exact=exact, order=_order(space, order) + 2)


INDICATOR_COLUMNS = ("level", "i", "j", "eta_sq", "osc_sq")


def write_indicators_csv(ind: IndicatorField, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(INDICATOR_COLUMNS)
        for c, e, o in zip(ind.cells, ind.eta_sq, ind.osc_sq):
            w.writerow([c.level, c.i, c.j, repr(float(e)), repr(float(o))])


def read_indicators_csv(path):
    with open(path, newline="") as fh:
        return [
            (int(r["level"]), int(r["i"]), int(r["j"]), float(r["eta_sq"]), float(r["osc_sq"]))
            for r in csv.DictReader(fh)
        ]
