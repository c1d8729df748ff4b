"""Hierarchical B-spline spaces (Kraft selection) on quadtree meshes.

Basis functions are tensor products of clamped dyadic B-splines of degree r
with maximal C^(r-1) smoothness. Degrees of freedom are numbered level-major,
then lexicographically by tensor index. No boundary conditions are built in.
"""
import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .bspline import basis_derivatives, n_functions, open_knots
from .hmesh import Cell, Edge, HierarchicalMesh, function_support, kraft_functions

# named field quantities as linear combinations of partial derivatives (dx, dy)
QUANTITIES = {
    "value": {(0, 0): 1.0},
    "dx": {(1, 0): 1.0},
    "dy": {(0, 1): 1.0},
    "dxx": {(2, 0): 1.0},
    "dxy": {(1, 1): 1.0},
    "dyy": {(0, 2): 1.0},
    "lap": {(2, 0): 1.0, (0, 2): 1.0},
    "lap_dx": {(3, 0): 1.0, (1, 2): 1.0},
    "lap_dy": {(2, 1): 1.0, (0, 3): 1.0},
    "bilap": {(4, 0): 1.0, (2, 2): 2.0, (0, 4): 1.0},
}


@dataclass(frozen=True)
class FieldSample:
    value: float
    gradient: tuple
    laplacian: float
    laplacian_gradient: tuple


class HBSplineSpace:
    def __init__(self, mesh: HierarchicalMesh, degree: int):
        self.mesh = mesh
        self.degree = degree
        self.functions = kraft_functions(mesh, degree)
        nlev = mesh.max_level + 1
        sizes = [n_functions(degree, l) ** 2 for l in range(nlev)]
        self._offset = np.concatenate([[0], np.cumsum(sizes)])
        self._keys = np.array([self._key(*f) for f in self.functions], dtype=np.int64)
        self._local = {}

    def __len__(self):
        return len(self.functions)

    @property
    def n_dofs(self) -> int:
        return len(self.functions)

    def _key(self, level, ix, iy):
        return self._offset[level] + ix * n_functions(self.degree, level) + iy

    def lookup(self, level, ix, iy):
        """Dof numbers of level-`level` functions (ix, iy); -1 where inactive."""
        key = self._offset[level] + np.asarray(ix) * n_functions(self.degree, level) + np.asarray(iy)
        if len(self._keys) == 0:
            return np.full(np.shape(key), -1)
        pos = np.clip(np.searchsorted(self._keys, key), 0, len(self._keys) - 1)
        return np.where(self._keys[pos] == key, pos, -1)

    def local_basis(self, level: int, idx) -> "LocalBasis":
        return LocalBasis(self, level, np.asarray(idx, dtype=int).reshape(-1, 2))

    def cell_batches(self, cells=None, chunk=4096):
        """Yield (cells, LocalBasis) over groups of same-level cells."""
        cells = self.mesh.cells if cells is None else cells
        groups = {}
        for pos, c in enumerate(cells):
            groups.setdefault(c.level, []).append(pos)
        for level in sorted(groups):
            pos = groups[level]
            for s in range(0, len(pos), chunk):
                sel = pos[s : s + chunk]
                idx = np.array([(cells[p].i, cells[p].j) for p in sel], dtype=int)
                yield sel, self.local_basis(level, idx)


class LocalBasis:
    """The active functions acting on a batch of same-level cells.

    ``dofs`` has shape (ncells, K) with -1 marking unused local slots; the
    local slots of one level are the (r+1)^2 tensor products of the B-splines
    nonzero on the cell's ancestor at that level.
    """

    def __init__(self, space: HBSplineSpace, level: int, idx: np.ndarray):
        self.space, self.level, self.idx = space, level, idx
        r = space.degree
        a, b = np.meshgrid(np.arange(r + 1), np.arange(r + 1), indexing="ij")
        a, b = a.ravel(), b.ravel()
        levels, dofs = [], []
        for l in range(level + 1):
            anc = idx >> (level - l)
            d = space.lookup(l, anc[:, :1] + a, anc[:, 1:] + b)
            if np.any(d >= 0):
                levels.append(l)
                dofs.append(d)
        self.levels = levels
        self.dofs = np.concatenate(dofs, axis=1) if dofs else np.zeros((len(idx), 0), dtype=int)

    @property
    def mask(self):
        return self.dofs >= 0

    def evaluate(self, ref, names: Sequence[str]):
        """Evaluate the local functions at reference points of each cell.

        ref has shape (q, 2) (shared by all cells) or (ncells, q, 2); points
        on the cell boundary give one-sided limits from the cell's piece.
        Returns {name: array (ncells, q, K)} with inactive slots zeroed.
        """
        ref = np.asarray(ref, dtype=float)
        if ref.ndim == 2:
            ref = np.broadcast_to(ref, (len(self.idx),) + ref.shape)
        r, L = self.space.degree, self.level
        pairs = {p for nm in names for p in QUANTITIES[nm]}
        ndx = max(p[0] for p in pairs)
        ndy = max(p[1] for p in pairs)
        X = (self.idx[:, None, 0] + ref[..., 0]) / 2.0 ** L
        Y = (self.idx[:, None, 1] + ref[..., 1]) / 2.0 ** L
        per_pair = {p: [] for p in pairs}
        for l in self.levels:
            anc = self.idx >> (L - l)
            knots = open_knots(r, l)
            Bx = basis_derivatives(knots, r, anc[:, None, 0] + r, X, ndx)
            By = basis_derivatives(knots, r, anc[:, None, 1] + r, Y, ndy)
            for (dx, dy) in pairs:
                t = Bx[..., dx, :, None] * By[..., dy, None, :]
                per_pair[(dx, dy)].append(t.reshape(t.shape[:2] + (-1,)))
        mask = self.mask[:, None, :]
        out = {}
        for nm in names:
            acc = None
            for p, w in QUANTITIES[nm].items():
                v = np.concatenate(per_pair[p], axis=2) if per_pair[p] else np.zeros(X.shape + (0,))
                acc = w * v if acc is None else acc + w * v
            out[nm] = np.where(mask, acc, 0.0)
        return out

    def field(self, coeffs, ref, names):
        """Values of the field with coefficients `coeffs`: {name: (ncells, q)}."""
        coeffs = np.asarray(coeffs, dtype=float)
        loc = np.where(self.mask, coeffs[np.maximum(self.dofs, 0)], 0.0)
        vals = self.evaluate(ref, names)
        return {nm: np.einsum("cqk,ck->cq", v, loc) for nm, v in vals.items()}


def build_space(mesh: HierarchicalMesh, degree: int = None, check: bool = False) -> HBSplineSpace:
    """Hierarchical B-spline space of the given degree (default: the mesh's)."""
    degree = mesh.degree if degree is None else degree
    if degree < 2:
        raise ValueError(f"degree {degree} unsupported: H^2 conformity needs degree >= 2")
    if check:
        from .hmesh import is_admissible

        if not is_admissible(mesh):
            raise ValueError("mesh is not admissible")
    return HBSplineSpace(mesh, degree)


def sample_cells(space: HBSplineSpace, coeffs, cells, ref, names):
    """Field quantities at per-cell reference points.

    cells: sequence of active Cells; ref: (q,2) or (len(cells), q, 2).
    Returns {name: (len(cells), q)}.
    """
    ref = np.asarray(ref, dtype=float)
    q = ref.shape[-2]
    out = {nm: np.zeros((len(cells), q)) for nm in names}
    for sel, lb in space.cell_batches(cells):
        r = ref if ref.ndim == 2 else ref[sel]
        vals = lb.field(coeffs, r, names)
        for nm in names:
            out[nm][sel] = vals[nm]
    return out


def evaluate_points(space: HBSplineSpace, coeffs, x, y, names=("value",)):
    """Field quantities at arbitrary points of the closed unit square."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    lev, ii, jj = space.mesh.locate(x, y)
    cells = [Cell(int(a), int(b), int(c)) for a, b, c in zip(lev, ii, jj)]
    s = 2.0 ** lev
    ref = np.stack([x * s - ii, y * s - jj], axis=-1)[:, None, :]
    vals = sample_cells(space, coeffs, cells, ref, names)
    return {nm: v[:, 0] for nm, v in vals.items()}


def eval(space: HBSplineSpace, coeffs, point) -> FieldSample:
    """Value, gradient, Laplacian and gradient of the Laplacian at a point."""
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape != (space.n_dofs,):
        raise ValueError(f"expected {space.n_dofs} coefficients, got {coeffs.shape}")
    x, y = point
    if not (0.0 <= x <= 1.0 and 0.0 <= y <= 1.0):
        raise ValueError(f"point {point} outside the unit square")
    v = evaluate_points(space, coeffs, [x], [y], ("value", "dx", "dy", "lap", "lap_dx", "lap_dy"))
    return FieldSample(
        float(v["value"][0]),
        (float(v["dx"][0]), float(v["dy"][0])),
        float(v["lap"][0]),
        (float(v["lap_dx"][0]), float(v["lap_dy"][0])),
    )


def _edge_ref(edge: Edge, cell: Cell, t):
    pts = edge.points(t)
    s = 2.0 ** cell.level
    return np.column_stack([pts[:, 0] * s - cell.i, pts[:, 1] * s - cell.j])


def edge_cell(edge: Edge, side: str) -> Cell:
    """Adjacent cell of an edge on the requested side.

    side is 'left'/'minus' (smaller x or y), 'right'/'plus', or 'interior'
    (boundary edges only).
    """
    if edge.kind == "boundary":
        cell = edge.cells[0]
        inner = "right" if sum(edge.normal) < 0 else "left"
        want = {"minus": "left", "plus": "right"}.get(side, side)
        if want not in ("interior", inner):
            raise ValueError(f"side {side!r} of boundary edge {edge} is outside the domain")
        return cell
    if side in ("left", "minus"):
        return edge.cells[0]
    if side in ("right", "plus"):
        return edge.cells[1]
    raise ValueError(f"unknown side {side!r}")


def edge_trace_arrays(space, coeffs, edge: Edge, side: str, t, names=("value", "dx", "dy", "lap", "lap_dx", "lap_dy")):
    cell = edge_cell(edge, side)
    ref = _edge_ref(edge, cell, np.atleast_1d(t))
    lb = space.local_basis(cell.level, [(cell.i, cell.j)])
    if not np.any(lb.mask) and space.n_dofs:
        raise ValueError(f"{cell} is not an active cell of the space")
    vals = lb.field(coeffs, ref, names)
    return {nm: v[0] for nm, v in vals.items()}


def edge_trace(space, coeffs, edge: Edge, side: str, quad_points):
    """One-sided traces along an edge at parameters quad_points in [0, 1]."""
    v = edge_trace_arrays(space, coeffs, edge, side, quad_points)
    return [
        FieldSample(v["value"][k], (v["dx"][k], v["dy"][k]), v["lap"][k], (v["lap_dx"][k], v["lap_dy"][k]))
        for k in range(len(v["value"]))
    ]


DOF_COLUMNS = ("level", "ix", "iy", "support_x0", "support_y0", "support_x1", "support_y1")


def write_dofs_csv(space: HBSplineSpace, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(DOF_COLUMNS)
        for f in space.functions:
            w.writerow(list(f) + [repr(v) for v in function_support(*f, space.degree)])


def read_dofs_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [
        (int(r["level"]), int(r["ix"]), int(r["iy"]),
         tuple(float(r[k]) for k in DOF_COLUMNS[3:]))
        for r in rows
    ]
