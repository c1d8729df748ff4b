"""Cell-wise L2-orthogonal projection onto tensor polynomials of degree <= d.

On a cell of side s the basis phi_ab(x, y) = L_a(xi) L_b(eta) / s, with L_a
the orthonormal shifted Legendre polynomials on [0, 1], is L2-orthonormal, so
projecting is a set of inner products and never needs a linear solve.
"""
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre as npleg

from .hmesh import Cell, Edge
from .quadrature import cell_rule, edge_rule


def legendre01(degree: int, t, nder: int = 1):
    """Orthonormal Legendre polynomials on [0,1] and derivatives.

    Returns an array (nder+1, len(t), degree+1).
    """
    t = np.asarray(t, dtype=float)
    out = np.zeros((nder + 1,) + t.shape + (degree + 1,))
    s = 2.0 * t - 1.0
    for a in range(degree + 1):
        c = np.zeros(a + 1)
        c[a] = np.sqrt(2 * a + 1)
        for k in range(nder + 1):
            out[k, ..., a] = npleg.legval(s, npleg.legder(c, k) if k else c) * 2.0 ** k
    return out


def _tensor(degree, ref):
    """Tensor basis values and reference gradients at ref (n,2): (3, n, (d+1)^2)."""
    Lx = legendre01(degree, ref[:, 0], 1)
    Ly = legendre01(degree, ref[:, 1], 1)
    v = (Lx[0][:, :, None] * Ly[0][:, None, :]).reshape(len(ref), -1)
    gx = (Lx[1][:, :, None] * Ly[0][:, None, :]).reshape(len(ref), -1)
    gy = (Lx[0][:, :, None] * Ly[1][:, None, :]).reshape(len(ref), -1)
    return np.stack([v, gx, gy])


@lru_cache(maxsize=None)
def _cell_samples(degree, order):
    rule = cell_rule(order)
    return rule, _tensor(degree, np.asarray(rule.points))[0]


def sample_operator(degree: int, order: int, ref):
    """Linear maps from values at the order-`order` cell Gauss points to
    (value, d/dxi, d/deta) of the projection at reference points `ref`.

    Physical gradients are the reference ones divided by the cell side.
    """
    rule, Lq = _cell_samples(degree, order)
    T = _tensor(degree, np.asarray(ref, dtype=float).reshape(-1, 2))
    wL = Lq * rule.weights[:, None]
    return np.einsum("snb,qb->snq", T, wL)


@dataclass(frozen=True)
class LocalProjection:
    cell: Cell
    degree: int
    coeffs: np.ndarray  # (d+1, d+1) coefficients in the orthonormal basis

    def _ref(self, x, y):
        s = self.cell.side
        return np.column_stack([np.ravel(x) / s - self.cell.i, np.ravel(y) / s - self.cell.j])

    def __call__(self, x, y):
        T = _tensor(self.degree, self._ref(x, y))[0]
        return T @ self.coeffs.ravel() / self.cell.side

    def gradient(self, x, y):
        T = _tensor(self.degree, self._ref(x, y))
        c = self.coeffs.ravel() / self.cell.side ** 2
        return T[1] @ c, T[2] @ c

    def norm(self) -> float:
        """L2 norm over the cell."""
        return float(np.sqrt(np.sum(self.coeffs ** 2)))


def project(cell: Cell, f, degree: int, order: int = None) -> LocalProjection:
    """L2 projection of the callable f(x, y) onto Q_degree(cell).

    The inner products use the tensor Gauss rule with `order` points per
    direction (default degree + 4).
    """
    if degree < 0:
        raise ValueError(f"projection degree must be >= 0, got {degree}")
    order = degree + 4 if order is None else order
    rule, Lq = _cell_samples(degree, order)
    s = cell.side
    pts = np.asarray(rule.points)
    x = cell.x0 + s * pts[:, 0]
    y = cell.y0 + s * pts[:, 1]
    fq = np.asarray(f(x, y), dtype=float) * np.ones_like(x)
    c = s * (Lq * rule.weights[:, None]).T @ fq
    return LocalProjection(cell, degree, c.reshape(degree + 1, degree + 1))


def trace_on_edge(proj: LocalProjection, edge: Edge, quad_points):
    """Values and normal derivatives (along edge.normal) of a projection on an edge."""
    edge.side_of(proj.cell)  # raises when the edge is not on the cell
    pts = edge.points(np.atleast_1d(quad_points))
    vals = proj(pts[:, 0], pts[:, 1])
    gx, gy = proj.gradient(pts[:, 0], pts[:, 1])
    nx, ny = edge.normal
    return vals, nx * gx + ny * gy


def l2_norm_on_edge(values, edge: Edge, order: int):
    """Helper: L2(edge) norm from values at the order-`order` Gauss points."""
    w = edge_rule(order).weights
    return float(np.sqrt(edge.h * np.sum(w * np.asarray(values) ** 2)))
