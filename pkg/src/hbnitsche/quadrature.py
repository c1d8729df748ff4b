"""Gauss-Legendre rules on the reference cell [0,1]^2 and reference edge [0,1]."""
from dataclasses import dataclass
from functools import lru_cache

import numpy as np


@dataclass(frozen=True)
class QuadRule:
    points: np.ndarray  # (n, dim) on the reference element
    weights: np.ndarray  # (n,), positive, summing to the reference measure

    def __len__(self):
        return len(self.weights)


@lru_cache(maxsize=None)
def _gauss01(order):
    if order < 1:
        raise ValueError(f"quadrature order must be >= 1, got {order}")
    x, w = np.polynomial.legendre.leggauss(order)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


@lru_cache(maxsize=None)
def edge_rule(order: int) -> QuadRule:
    """Gauss rule with `order` points on [0,1]; exact up to degree 2*order-1."""
    x, w = _gauss01(order)
    pts = x[:, None].copy()
    pts.setflags(write=False)
    return QuadRule(pts, w)


@lru_cache(maxsize=None)
def cell_rule(order: int) -> QuadRule:
    """Tensor Gauss rule with order**2 points on [0,1]^2.

    Points are ordered with the x-coordinate running slowest.
    """
    x, w = _gauss01(order)
    X, Y = np.meshgrid(x, x, indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel()])
    wts = np.outer(w, w).ravel()
    pts.setflags(write=False)
    wts.setflags(write=False)
    return QuadRule(pts, wts)
