"""Hierarchical dyadic quadtree meshes of the unit square.

A mesh is an immutable set of active cells ``(level, i, j)`` covering
(0,1)^2. Meshes are built from a uniform base mesh by quadrisection and are
kept admissible of class ``m``:

    if an active cell ``c`` meets the support extension of an active cell
    ``c'`` taken at the level of ``c'`` (the box of ``2r+1`` level-``c'``
    cells centred on ``c'``), then ``level(c) - level(c') < m``.

This grading is exactly what makes every hierarchical B-spline acting on a
level-``L`` cell come from levels ``> L - m`` (see ``hbspline``).
"""
import csv
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple, Optional

import numpy as np


class Cell(NamedTuple):
    level: int
    i: int
    j: int

    @property
    def side(self) -> float:
        return 2.0 ** -self.level

    @property
    def x0(self) -> float:
        return self.i * self.side

    @property
    def y0(self) -> float:
        return self.j * self.side

    @property
    def h(self) -> float:
        """Diameter of the cell."""
        return self.side * math.sqrt(2.0)

    @property
    def area(self) -> float:
        return self.side ** 2

    @property
    def bounds(self):
        s = self.side
        return (self.i * s, self.j * s, (self.i + 1) * s, (self.j + 1) * s)

    def children(self):
        l, i, j = self.level + 1, 2 * self.i, 2 * self.j
        return (Cell(l, i, j), Cell(l, i, j + 1), Cell(l, i + 1, j), Cell(l, i + 1, j + 1))

    def parent(self) -> "Cell":
        if self.level == 0:
            raise ValueError("root cell has no parent")
        return Cell(self.level - 1, self.i // 2, self.j // 2)

    def ancestor(self, level: int) -> "Cell":
        if level > self.level:
            raise ValueError(f"ancestor level {level} finer than cell level {self.level}")
        s = self.level - level
        return Cell(level, self.i >> s, self.j >> s)

    def contains_cell(self, other: "Cell") -> bool:
        return other.level >= self.level and other.ancestor(self.level) == self


# outward normals of the four sides of a cell
SIDES = {"W": (-1, 0), "E": (1, 0), "S": (0, -1), "N": (0, 1)}


@dataclass(frozen=True, order=True)
class Edge:
    """A straight facet of the mesh.

    Interior edges follow the fine-side convention: the edge is a full side
    of its finer adjacent cell. ``cells`` is ``(minus, plus)`` for interior
    edges, where ``normal`` points from minus to plus (+x or +y), and
    ``(cell,)`` for boundary edges, where ``normal`` is the outward normal.
    """

    kind: str
    orientation: str
    x0: float
    y0: float
    x1: float
    y1: float
    cells: tuple = field(compare=False)
    normal: tuple = field(compare=False)

    @property
    def h(self) -> float:
        return abs(self.x1 - self.x0) + abs(self.y1 - self.y0)

    @property
    def midpoint(self):
        return (0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1))

    def points(self, t):
        """Physical points at edge parameters t in [0, 1]."""
        t = np.asarray(t, dtype=float)
        return np.stack([self.x0 + t * (self.x1 - self.x0), self.y0 + t * (self.y1 - self.y0)], axis=-1)

    def side_of(self, cell: Cell) -> str:
        """Which side of `cell` (W/E/S/N) this edge lies on."""
        x0, y0, x1, y1 = cell.bounds
        if self.orientation == "vertical":
            on = "W" if self.x0 == x0 else "E" if self.x0 == x1 else None
            inside = y0 <= min(self.y0, self.y1) and max(self.y0, self.y1) <= y1
        else:
            on = "S" if self.y0 == y0 else "N" if self.y0 == y1 else None
            inside = x0 <= min(self.x0, self.x1) and max(self.x0, self.x1) <= x1
        if on is None or not inside:
            raise ValueError(f"edge {self} is not on the boundary of {cell}")
        return on


@dataclass(frozen=True)
class HierarchicalMesh:
    cells: tuple
    m: int = 2
    degree: int = 2
    base_level: int = 0
    generation: int = 0
    _cache: dict = field(default_factory=dict, compare=False, hash=False, repr=False)

    def __post_init__(self):
        if self.m < 2:
            raise ValueError(f"admissibility class must be >= 2, got {self.m}")
        if self.degree < 1:
            raise ValueError(f"degree must be >= 1, got {self.degree}")

    def __len__(self):
        return len(self.cells)

    def __iter__(self):
        return iter(self.cells)

    def __contains__(self, cell):
        return cell in self.active

    @cached_property
    def active(self) -> frozenset:
        return frozenset(self.cells)

    @cached_property
    def internal(self) -> frozenset:
        """Refined (non-leaf) tree nodes."""
        out = set()
        for c in self.cells:
            while c.level > 0:
                c = c.parent()
                if c in out:
                    break
                out.add(c)
        return frozenset(out)

    @cached_property
    def nodes(self) -> frozenset:
        return self.active | self.internal

    @cached_property
    def max_level(self) -> int:
        return max(c.level for c in self.cells)

    @cached_property
    def by_level(self) -> dict:
        out = {}
        for c in self.cells:
            out.setdefault(c.level, []).append(c)
        return out

    @property
    def h_max(self) -> float:
        return max(c.h for c in self.cells)

    def active_ancestor(self, cell: Cell) -> Cell:
        """The active cell containing `cell` (which must not be refined in the mesh)."""
        c = cell
        while c not in self.active:
            if c.level == 0:
                raise ValueError(f"{cell} is not covered by the mesh")
            c = c.parent()
        return c

    def edges(self):
        if "edges" not in self._cache:
            self._cache["edges"] = _build_edges(self)
        return self._cache["edges"]

    def cells_in_box(self, x0, y0, x1, y1):
        """Active cells whose interior meets the open box (x0,x1) x (y0,y1)."""
        out = []
        roots = [Cell(0, 0, 0)]
        stack = roots
        while stack:
            c = stack.pop()
            cx0, cy0, cx1, cy1 = c.bounds
            if cx1 <= x0 or cx0 >= x1 or cy1 <= y0 or cy0 >= y1:
                continue
            if c in self.active:
                out.append(c)
            elif c in self.internal:
                stack.extend(c.children())
        return sorted(out)

    def locate(self, x, y):
        """Active cell containing each point; returns (levels, i, j) int arrays."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y, dtype=float))
        if np.any((x < 0) | (x > 1) | (y < 0) | (y > 1)):
            raise ValueError("point outside the unit square")
        lev = np.full(x.shape, -1)
        ii = np.zeros(x.shape, dtype=int)
        jj = np.zeros(x.shape, dtype=int)
        for level in sorted(self.by_level):
            n = 2 ** level
            keys = np.array(sorted(c.i * n + c.j for c in self.by_level[level]))
            i = np.clip(np.floor(x * n).astype(int), 0, n - 1)
            j = np.clip(np.floor(y * n).astype(int), 0, n - 1)
            k = i * n + j
            pos = np.clip(np.searchsorted(keys, k), 0, len(keys) - 1)
            hit = (keys[pos] == k) & (lev < 0)
            lev[hit], ii[hit], jj[hit] = level, i[hit], j[hit]
        return lev, ii, jj


def _make(cells, like: HierarchicalMesh, generation=None) -> HierarchicalMesh:
    return HierarchicalMesh(
        tuple(sorted(cells)),
        m=like.m,
        degree=like.degree,
        base_level=like.base_level,
        generation=like.generation + 1 if generation is None else generation,
    )


def initial_mesh(levels: int, m: int = 2, degree: int = 2) -> HierarchicalMesh:
    """Uniform mesh with 4**levels cells, all at `levels`."""
    if levels < 0:
        raise ValueError(f"levels must be >= 0, got {levels}")
    n = 2 ** levels
    cells = tuple(Cell(levels, i, j) for i in range(n) for j in range(n))
    return HierarchicalMesh(cells, m=m, degree=degree, base_level=levels, generation=0)


def _box(cell: Cell, level: int, r: int):
    """Level-`level` index ranges of the support extension of `cell` taken at `level`."""
    a = cell.ancestor(level)
    n = 2 ** level
    return range(max(0, a.i - r), min(n - 1, a.i + r) + 1), range(max(0, a.j - r), min(n - 1, a.j + r) + 1)


def coarse_neighbours(active, cell: Cell, level: int, r: int):
    """Active cells of exactly `level` meeting the level-`level` support extension of `cell`."""
    xs, ys = _box(cell, level, r)
    return [Cell(level, a, b) for a in xs for b in ys if (level, a, b) in active]


def refine(mesh: HierarchicalMesh, marked) -> HierarchicalMesh:
    """Quadrisect the marked cells and close the result under admissibility."""
    marked = set(marked)
    missing = [c for c in marked if c not in mesh.active]
    if missing:
        raise ValueError(f"marked cells are not active: {sorted(missing)[:5]}")
    active = set(mesh.cells)
    r, m = mesh.degree, mesh.m

    def split(c):
        if c not in active:
            return
        k = c.level + 1 - m
        if k >= 0:
            for nb in coarse_neighbours(active, c, k, r):
                split(nb)
        active.remove(c)
        active.update(c.children())

    for c in sorted(marked):
        split(c)
    return _make(active, mesh)


def uniform_refine(mesh: HierarchicalMesh) -> HierarchicalMesh:
    return refine(mesh, mesh.cells)


def admissibility_violations(mesh: HierarchicalMesh):
    """Pairs (fine, coarse) of active cells breaking the class-m grading."""
    r, m = mesh.degree, mesh.m
    out = []
    for c in mesh.cells:
        for k in range(0, c.level - m + 1):
            xs, ys = _box(c, k, r)
            for a in xs:
                for b in ys:
                    q = Cell(k, a, b)
                    if q not in mesh.internal:
                        out.append((c, mesh.active_ancestor(q)))
    return out


def is_admissible(mesh: HierarchicalMesh) -> bool:
    return not admissibility_violations(mesh)


def overlay(p1: HierarchicalMesh, p2: HierarchicalMesh) -> HierarchicalMesh:
    """Coarsest common refinement of two meshes grown from the same base mesh."""
    if p1.base_level != p2.base_level:
        raise ValueError(f"meshes have different base meshes ({p1.base_level} vs {p2.base_level})")
    if (p1.m, p1.degree) != (p2.m, p2.degree):
        raise ValueError("meshes use different admissibility settings")
    nodes = p1.nodes | p2.nodes
    leaves = [c for c in nodes if c.children()[0] not in nodes]
    return _make(leaves, p1, generation=max(p1.generation, p2.generation) + 1)


def _build_edges(mesh: HierarchicalMesh):
    interior, boundary = [], []
    active, internal = mesh.active, mesh.internal
    for c in mesh.cells:
        n = 2 ** c.level
        x0, y0, x1, y1 = c.bounds
        for side, (dx, dy) in SIDES.items():
            if side in ("W", "E"):
                seg = (x0 if side == "W" else x1, y0, x0 if side == "W" else x1, y1)
                orient = "vertical"
            else:
                seg = (x0, y0 if side == "S" else y1, x1, y0 if side == "S" else y1)
                orient = "horizontal"
            ni, nj = c.i + dx, c.j + dy
            if not (0 <= ni < n and 0 <= nj < n):
                boundary.append(Edge("boundary", orient, *seg, cells=(c,), normal=(dx, dy)))
                continue
            nb = Cell(c.level, ni, nj)
            if nb in internal:
                continue  # the finer cells across own this facet
            if nb in active:
                if side in ("W", "S"):
                    continue  # generated once from the other side
                other = nb
            else:
                other = mesh.active_ancestor(nb)
            pair = (c, other) if side in ("E", "N") else (other, c)
            normal = (1, 0) if orient == "vertical" else (0, 1)
            interior.append(Edge("interior", orient, *seg, cells=pair, normal=normal))
    return tuple(sorted(interior)), tuple(sorted(boundary))


def edges(mesh: HierarchicalMesh):
    """(interior edges, boundary edges) under the fine-side convention."""
    return mesh.edges()


def function_support(level: int, ix: int, iy: int, degree: int):
    """Bounding box of the support of the level-`level` tensor B-spline (ix, iy)."""
    n = 2 ** level
    return (max(ix - degree, 0) / n, max(iy - degree, 0) / n, min(ix + 1, n) / n, min(iy + 1, n) / n)


def kraft_functions(mesh: HierarchicalMesh, degree: Optional[int] = None):
    """Active hierarchical B-splines as sorted (level, ix, iy) triples.

    A level-l function is active when its support meets an active level-l
    cell and lies inside the closure of the level->=l region.
    """
    r = mesh.degree if degree is None else degree
    key = ("kraft", r)
    if key in mesh._cache:
        return mesh._cache[key]
    nodes = mesh.nodes
    out = []
    for level in sorted(mesh.by_level):
        n = 2 ** level
        cand = set()
        for c in mesh.by_level[level]:
            for a in range(r + 1):
                for b in range(r + 1):
                    cand.add((c.i + a, c.j + b))
        for ix, iy in sorted(cand):
            xs = range(max(0, ix - r), min(n - 1, ix) + 1)
            ys = range(max(0, iy - r), min(n - 1, iy) + 1)
            if all((level, a, b) in nodes for a in xs for b in ys):
                out.append((level, ix, iy))
    out = tuple(out)
    mesh._cache[key] = out
    return out


def functions_on_cell(mesh: HierarchicalMesh, cell: Cell, degree: Optional[int] = None):
    """Active functions whose support meets the interior of an active cell."""
    r = mesh.degree if degree is None else degree
    active = set(kraft_functions(mesh, r))
    out = []
    for level in range(cell.level + 1):
        a = cell.ancestor(level)
        for dx in range(r + 1):
            for dy in range(r + 1):
                f = (level, a.i + dx, a.j + dy)
                if f in active:
                    out.append(f)
    return out


@dataclass(frozen=True)
class SupportExtension:
    seed: object
    cells: tuple

    def __len__(self):
        return len(self.cells)

    def __contains__(self, cell):
        return cell in self.cells

    @property
    def diameter(self) -> float:
        x0 = min(c.x0 for c in self.cells)
        y0 = min(c.y0 for c in self.cells)
        x1 = max(c.x0 + c.side for c in self.cells)
        y1 = max(c.y0 + c.side for c in self.cells)
        return math.hypot(x1 - x0, y1 - y0)


def support_extension(mesh: HierarchicalMesh, seed, degree: Optional[int] = None) -> SupportExtension:
    """Active cells met by supports of the active functions that meet `seed`.

    `seed` is an active Cell or an Edge of the mesh. A function meets an edge
    when it meets one of the edge's adjacent cells.
    """
    r = mesh.degree if degree is None else degree
    if isinstance(seed, Edge):
        owners = seed.cells
    else:
        if seed not in mesh.active:
            raise ValueError(f"{seed} is not an active cell")
        owners = (seed,)
    funcs = set()
    for c in owners:
        funcs.update(functions_on_cell(mesh, c, r))
    out = set(owners)
    for f in funcs:
        out.update(mesh.cells_in_box(*function_support(*f, r)))
    return SupportExtension(seed, tuple(sorted(out)))


MESH_COLUMNS = ("level", "i", "j", "x0", "y0", "side")
EDGE_COLUMNS = ("kind", "orientation", "x0", "y0", "x1", "y1", "h")


def write_mesh_csv(mesh: HierarchicalMesh, path):
    with open(path, "w", newline="") as fh:
        fh.write(f"# m={mesh.m} degree={mesh.degree} base_level={mesh.base_level} generation={mesh.generation}\n")
        w = csv.writer(fh)
        w.writerow(MESH_COLUMNS)
        for c in mesh.cells:
            w.writerow([c.level, c.i, c.j, repr(c.x0), repr(c.y0), repr(c.side)])


def read_mesh_csv(path) -> HierarchicalMesh:
    meta = {"m": 2, "degree": 2, "base_level": 0, "generation": 0}
    cells = []
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    if lines and lines[0].startswith("#"):
        for tok in lines[0][1:].split():
            k, v = tok.split("=")
            meta[k] = int(v)
        lines = lines[1:]
    for row in csv.DictReader(lines):
        cells.append(Cell(int(row["level"]), int(row["i"]), int(row["j"])))
    return HierarchicalMesh(tuple(sorted(cells)), **meta)


def write_edges_csv(mesh: HierarchicalMesh, path):
    interior, boundary = mesh.edges()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(EDGE_COLUMNS)
        for e in interior + boundary:
            w.writerow([e.kind, e.orientation, repr(e.x0), repr(e.y0), repr(e.x1), repr(e.y1), repr(e.h)])


def read_edges_csv(path):
    with open(path, newline="") as fh:
        return [
            {k: (v if k in ("kind", "orientation") else float(v)) for k, v in row.items()}
            for row in csv.DictReader(fh)
        ]
