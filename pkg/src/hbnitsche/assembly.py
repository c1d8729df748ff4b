"""Assembly of the projected Nitsche form for the clamped biharmonic problem.

    a(u, v) = (lap u, lap v)
              - int_G [ P(lap u) dv/dn + P(lap v) du/dn ]
              + int_G [ d P(lap u)/dn v + d P(lap v)/dn u ]
              + g1 int_G h^-3 u v + g2 int_G h^-1 du/dn dv/dn

where P is the cell-wise L2 projection onto Q_{r-2} and the boundary
integrals use, edge by edge, the projection on the adjacent cell.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from .hbspline import HBSplineSpace
from .hmesh import SIDES
from .projection import sample_operator
from .quadrature import cell_rule, edge_rule

log = logging.getLogger(__name__)

PARTS = ("volume", "consistency", "penalty_value", "penalty_normal")
NORMAL_SIDE = {v: k for k, v in SIDES.items()}


def side_ref(side: str, t):
    """Reference points on side W/E/S/N of [0,1]^2 at edge parameters t."""
    t = np.asarray(t, dtype=float).ravel()
    z, o = np.zeros_like(t), np.ones_like(t)
    return {
        "W": np.column_stack([z, t]),
        "E": np.column_stack([o, t]),
        "S": np.column_stack([t, z]),
        "N": np.column_stack([t, o]),
    }[side]


def boundary_groups(mesh):
    """Boundary edges grouped by (cell level, side): {(level, side): [edges]}."""
    groups = {}
    for e in mesh.edges()[1]:
        c = e.cells[0]
        groups.setdefault((c.level, NORMAL_SIDE[tuple(e.normal)]), []).append(e)
    return dict(sorted(groups.items()))


def _cell_points(lb, ref):
    s = 2.0 ** -lb.level
    x = (lb.idx[:, None, 0] + ref[None, :, 0]) * s
    y = (lb.idx[:, None, 1] + ref[None, :, 1]) * s
    return x, y


def _gram(a, w, b):
    loc = np.einsum("cqi,q,cqj->cij", a, w, b, optimize=True)
    return loc


def _scatter(trip, dofs, loc):
    K = dofs.shape[1]
    rows = np.broadcast_to(dofs[:, :, None], (len(dofs), K, K))
    cols = np.broadcast_to(dofs[:, None, :], (len(dofs), K, K))
    keep = (rows >= 0) & (cols >= 0)
    trip[0].append(rows[keep])
    trip[1].append(cols[keep])
    trip[2].append(loc[keep])


def _to_csr(trip, n):
    if trip[0]:
        r, c, v = (np.concatenate(t) for t in trip)
    else:
        r = c = np.zeros(0, dtype=int)
        v = np.zeros(0)
    A = sps.coo_matrix((v, (r, c)), shape=(n, n)).tocsr()
    A.sum_duplicates()
    return ((A + A.T) * 0.5).tocsr()


@dataclass
class NitscheSystem:
    space: HBSplineSpace
    parts: dict
    load: np.ndarray
    gamma1: float
    gamma2: float
    matrix: sps.csr_matrix = field(init=False, repr=False)

    def __post_init__(self):
        if self.gamma1 <= 0 or self.gamma2 <= 0:
            raise ValueError(f"stabilization parameters must be positive, got {self.gamma1}, {self.gamma2}")
        p = self.parts
        self.matrix = (p["volume"] + p["consistency"] + self.gamma1 * p["penalty_value"]
                       + self.gamma2 * p["penalty_normal"]).tocsr()

    def with_gamma(self, gamma1, gamma2) -> "NitscheSystem":
        return NitscheSystem(self.space, self.parts, self.load, gamma1, gamma2)

    def norm_gram(self, gamma1=None, gamma2=None):
        """Gram matrix of the mesh-dependent energy norm."""
        g1 = self.gamma1 if gamma1 is None else gamma1
        g2 = self.gamma2 if gamma2 is None else gamma2
        p = self.parts
        return (p["volume"] + g1 * p["penalty_value"] + g2 * p["penalty_normal"]).tocsr()

    def energy(self, v, w=None):
        v = np.asarray(v)
        w = v if w is None else np.asarray(w)
        return float(v @ (self.matrix @ w))


def assemble(space: HBSplineSpace, f=None, gamma1: float = 100.0, gamma2: float = 100.0, order: int = None) -> NitscheSystem:
    """Matrix and load of the projected Nitsche discretisation.

    f is a vectorised callable f(x, y) or None for a zero load.
    """
    if gamma1 <= 0 or gamma2 <= 0:
        raise ValueError(f"stabilization parameters must be positive, got {gamma1}, {gamma2}")
    r = space.degree
    order = r + 2 if order is None else order
    n = space.n_dofs
    rule, erule = cell_rule(order), edge_rule(order)
    trips = {p: ([], [], []) for p in PARTS}
    load = np.zeros(n)

    for _, lb in space.cell_batches():
        s = 2.0 ** -lb.level
        vals = lb.evaluate(rule.points, ("value", "lap"))
        w = rule.weights * s * s
        _scatter(trips["volume"], lb.dofs, _gram(vals["lap"], w, vals["lap"]))
        if f is not None:
            x, y = _cell_points(lb, rule.points)
            fl = np.einsum("cq,q,cqi->ci", f(x, y), w, vals["value"])
            keep = lb.dofs >= 0
            np.add.at(load, lb.dofs[keep], fl[keep])

    for (level, side), group in boundary_groups(space.mesh).items():
        idx = np.array([(e.cells[0].i, e.cells[0].j) for e in group])
        lb = space.local_basis(level, idx)
        s = 2.0 ** -level
        nx, ny = SIDES[side]
        eref = side_ref(side, erule.points)
        ev = lb.evaluate(eref, ("value", "dx", "dy"))
        B = ev["value"]
        Bn = nx * ev["dx"] + ny * ev["dy"]
        lapq = lb.evaluate(rule.points, ("lap",))["lap"]
        S = sample_operator(r - 2, order, eref)
        P = np.einsum("eq,cqk->cek", S[0], lapq)
        dP = np.einsum("eq,cqk->cek", nx * S[1] + ny * S[2], lapq) / s
        w = erule.weights * s
        C = _gram(dP, w, B) - _gram(P, w, Bn)
        _scatter(trips["consistency"], lb.dofs, C + C.transpose(0, 2, 1))
        _scatter(trips["penalty_value"], lb.dofs, _gram(B, w, B) * s ** -3)
        _scatter(trips["penalty_normal"], lb.dofs, _gram(Bn, w, Bn) / s)

    parts = {p: _to_csr(trips[p], n) for p in PARTS}
    log.debug("assembled %d dofs, nnz=%d", n, parts["volume"].nnz)
    return NitscheSystem(space, parts, load, float(gamma1), float(gamma2))


def mass_matrix(space: HBSplineSpace, order: int = None):
    order = space.degree + 2 if order is None else order
    rule = cell_rule(order)
    trip = ([], [], [])
    for _, lb in space.cell_batches():
        s = 2.0 ** -lb.level
        B = lb.evaluate(rule.points, ("value",))["value"]
        _scatter(trip, lb.dofs, _gram(B, rule.weights * s * s, B))
    return _to_csr(trip, space.n_dofs)


def l2_projection(space: HBSplineSpace, func, order: int = None):
    """Coefficients of the L2-best approximation of func(x, y) in the space."""
    order = space.degree + 2 if order is None else order
    rule = cell_rule(order)
    b = np.zeros(space.n_dofs)
    for _, lb in space.cell_batches():
        s = 2.0 ** -lb.level
        B = lb.evaluate(rule.points, ("value",))["value"]
        x, y = _cell_points(lb, rule.points)
        fl = np.einsum("cq,q,cqi->ci", np.asarray(func(x, y), dtype=float), rule.weights * s * s, B)
        keep = lb.dofs >= 0
        np.add.at(b, lb.dofs[keep], fl[keep])
    M = mass_matrix(space, order).tocsc()
    return spla.spsolve(M, b)


# ---------------------------------------------------------------------------
# field diagnostics


def volume_samples(space, coeffs, order, names, exact=None):
    """Yield (cells positions, weights (c,q), {name: (c,q)}) batch by batch.

    With `exact` the values are those of exact - U; supported names with
    exact are value, dx, dy, lap, lap_dx, lap_dy, bilap.
    """
    rule = cell_rule(order)
    for sel, lb in space.cell_batches():
        s = 2.0 ** -lb.level
        vals = lb.field(coeffs, rule.points, names)
        if exact is not None:
            x, y = _cell_points(lb, rule.points)
            vals = {nm: _exact(exact, nm, x, y) - v for nm, v in vals.items()}
        w = np.broadcast_to(rule.weights * s * s, (len(sel), len(rule.weights)))
        yield sel, w, vals


def _exact(exact, name, x, y):
    if name == "value":
        return exact.u(x, y)
    if name in ("dx", "dy"):
        return exact.grad(x, y)[name == "dy"]
    if name == "lap":
        return exact.lap(x, y)
    if name in ("lap_dx", "lap_dy"):
        return exact.lap_grad(x, y)[name == "lap_dy"]
    if name == "bilap":
        return exact.f(x, y)
    raise KeyError(name)


def boundary_samples(space, coeffs, order, exact=None, projected=True):
    """Traces on every boundary edge, concatenated over edges.

    Returns dict with h (E,), w (q,), value, dn and, when projected,
    plap = P(lap) and dn_plap = d P(lap)/dn, each (E, q), where the field is
    U or exact - U.
    """
    r = space.degree
    rule, erule = cell_rule(order), edge_rule(order)
    out = {k: [] for k in ("h", "value", "dn", "plap", "dn_plap", "x", "y")}
    for (level, side), group in boundary_groups(space.mesh).items():
        idx = np.array([(e.cells[0].i, e.cells[0].j) for e in group])
        lb = space.local_basis(level, idx)
        s = 2.0 ** -level
        nx, ny = SIDES[side]
        eref = side_ref(side, erule.points)
        ev = lb.field(coeffs, eref, ("value", "dx", "dy"))
        x, y = _cell_points(lb, eref)
        if exact is not None:
            ux, uy = exact.grad(x, y)
            ev = {"value": exact.u(x, y) - ev["value"], "dx": ux - ev["dx"], "dy": uy - ev["dy"]}
        out["value"].append(ev["value"])
        out["dn"].append(nx * ev["dx"] + ny * ev["dy"])
        out["h"].append(np.full(len(group), s))
        out["x"].append(x)
        out["y"].append(y)
        if projected:
            lapq = lb.field(coeffs, rule.points, ("lap",))["lap"]
            if exact is not None:
                cx, cy = _cell_points(lb, rule.points)
                lapq = exact.lap(cx, cy) - lapq
            S = sample_operator(r - 2, order, eref)
            out["plap"].append(lapq @ S[0].T)
            out["dn_plap"].append(lapq @ (nx * S[1] + ny * S[2]).T / s)
    res = {k: np.concatenate(v) for k, v in out.items() if v}
    res["w"] = np.asarray(erule.weights)
    return res


@dataclass(frozen=True)
class MeshNorms:
    lap_sq: float  # ||lap v||^2 over the domain
    value_sq: float  # ||v||^2_{3/2,P}
    normal_sq: float  # ||dv/dn||^2_{1/2,P}
    gamma1: float
    gamma2: float

    @property
    def total_sq(self) -> float:
        return self.lap_sq + self.gamma1 * self.value_sq + self.gamma2 * self.normal_sq

    @property
    def total(self) -> float:
        return float(np.sqrt(self.total_sq))


def mesh_norms(space, coeffs, gamma1=100.0, gamma2=100.0, order=None, exact=None) -> MeshNorms:
    """Mesh-dependent norms of U (or of exact - U when `exact` is given)."""
    order = space.degree + 2 if order is None else order
    lap_sq = 0.0
    for _, w, vals in volume_samples(space, coeffs, order, ("lap",), exact):
        lap_sq += float(np.sum(w * vals["lap"] ** 2))
    bs = boundary_samples(space, coeffs, order, exact, projected=False)
    value_sq, normal_sq = _boundary_sums(bs)
    return MeshNorms(lap_sq, value_sq, normal_sq, gamma1, gamma2)


def _boundary_sums(bs):
    h, w = bs["h"], bs["w"]
    edge_l2 = lambda a: h * np.sum(w * a ** 2, axis=1)
    return float(np.sum(h ** -3 * edge_l2(bs["value"]))), float(np.sum(h ** -1 * edge_l2(bs["dn"])))


def nitsche_energy(space, coeffs, gamma1, gamma2, exact=None, order=None) -> float:
    """a_P(v, v) for v = U, or v = exact - U when `exact` is given."""
    order = space.degree + 2 if order is None else order
    lap_sq = 0.0
    for _, w, vals in volume_samples(space, coeffs, order, ("lap",), exact):
        lap_sq += float(np.sum(w * vals["lap"] ** 2))
    bs = boundary_samples(space, coeffs, order, exact, projected=True)
    h, w = bs["h"], bs["w"]
    lam = np.sum(h[:, None] * w * (bs["dn_plap"] * bs["value"] - bs["plap"] * bs["dn"]))
    value_sq, normal_sq = _boundary_sums(bs)
    return lap_sq + 2.0 * float(lam) + gamma1 * value_sq + gamma2 * normal_sq


def inconsistency_pairing(space, exact, v, order=None) -> float:
    """<E_P, v> = int_G (dP(lap u)/dn - dlap u/dn) v - int_G (P(lap u) - lap u) dv/dn.

    `exact` provides lap and lap_grad; `v` is a coefficient vector in the
    space or a callable returning (value, dv/dx, dv/dy) at points.
    """
    order = space.degree + 2 if order is None else order
    r = space.degree
    rule, erule = cell_rule(order), edge_rule(order)
    total = 0.0
    for (level, side), group in boundary_groups(space.mesh).items():
        idx = np.array([(e.cells[0].i, e.cells[0].j) for e in group])
        lb = space.local_basis(level, idx)
        s = 2.0 ** -level
        nx, ny = SIDES[side]
        eref = side_ref(side, erule.points)
        x, y = _cell_points(lb, eref)
        cx, cy = _cell_points(lb, rule.points)
        lapq = exact.lap(cx, cy)
        S = sample_operator(r - 2, order, eref)
        plap = lapq @ S[0].T
        dn_plap = lapq @ (nx * S[1] + ny * S[2]).T / s
        lx, ly = exact.lap_grad(x, y)
        if callable(v):
            vv, vx, vy = v(x, y)
        else:
            ev = lb.field(v, eref, ("value", "dx", "dy"))
            vv, vx, vy = ev["value"], ev["dx"], ev["dy"]
        integrand = (dn_plap - (nx * lx + ny * ly)) * vv - (plap - exact.lap(x, y)) * (nx * vx + ny * vy)
        total += float(np.sum(s * erule.weights * integrand))
    return total
