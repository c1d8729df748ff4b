"""Univariate B-splines on dyadic open knot vectors over [0, 1].

Evaluation uses the Cox-de Boor triangle with the derivative recurrence
(Piegl & Tiller, algorithm A2.3), vectorised over arbitrary arrays of
parameter values. Every evaluation takes an explicit knot span so that
one-sided limits at knots come out of the polynomial piece of that span.
"""
from functools import lru_cache

import numpy as np


@lru_cache(maxsize=None)
def open_knots(degree: int, level: int) -> np.ndarray:
    """Clamped uniform knot vector with 2**level intervals on [0, 1]."""
    n = 2 ** level
    inner = np.arange(n + 1, dtype=float) / n
    knots = np.concatenate([np.zeros(degree), inner, np.ones(degree)])
    knots.setflags(write=False)
    return knots


def n_functions(degree: int, level: int) -> int:
    return 2 ** level + degree


def basis_derivatives(knots, degree, span, x, nder):
    """Nonzero basis functions of `span` and their derivatives at x.

    Parameters
    ----------
    knots : 1-d array
    degree : int
    span : int array broadcastable with x
        Knot index with knots[span] <= x <= knots[span+1] (not checked, so
        evaluating the piece of `span` outside its interval is allowed).
    x : float array
    nder : int
        Highest derivative order wanted. Orders above `degree` are zero.

    Returns
    -------
    ders : array of shape x.shape + (nder+1, degree+1)
        ders[..., k, a] is the k-th derivative of N_{span-degree+a}.
    """
    p = degree
    x = np.asarray(x, dtype=float)
    span = np.broadcast_to(np.asarray(span), x.shape)
    shp = x.shape
    ndu = np.zeros(shp + (p + 1, p + 1))
    left = np.zeros(shp + (p + 1,))
    right = np.zeros(shp + (p + 1,))
    ndu[..., 0, 0] = 1.0
    for j in range(1, p + 1):
        left[..., j] = x - knots[span + 1 - j]
        right[..., j] = knots[span + j] - x
        saved = np.zeros(shp)
        for r in range(j):
            ndu[..., j, r] = right[..., r + 1] + left[..., j - r]
            temp = ndu[..., r, j - 1] / ndu[..., j, r]
            ndu[..., r, j] = saved + right[..., r + 1] * temp
            saved = left[..., j - r] * temp
        ndu[..., j, j] = saved

    ders = np.zeros(shp + (nder + 1, p + 1))
    ders[..., 0, :] = ndu[..., :, p]
    kmax = min(nder, p)
    for r in range(p + 1):
        a = np.zeros(shp + (2, p + 1))
        a[..., 0, 0] = 1.0
        s1, s2 = 0, 1
        for k in range(1, kmax + 1):
            d = np.zeros(shp)
            rk, pk = r - k, p - k
            if r >= k:
                a[..., s2, 0] = a[..., s1, 0] / ndu[..., pk + 1, rk]
                d = a[..., s2, 0] * ndu[..., rk, pk]
            j1 = 1 if rk >= -1 else -rk
            j2 = k - 1 if r - 1 <= pk else p - r
            for j in range(j1, j2 + 1):
                a[..., s2, j] = (a[..., s1, j] - a[..., s1, j - 1]) / ndu[..., pk + 1, rk + j]
                d = d + a[..., s2, j] * ndu[..., rk + j, pk]
            if r <= pk:
                a[..., s2, k] = -a[..., s1, k - 1] / ndu[..., pk + 1, r]
                d = d + a[..., s2, k] * ndu[..., r, pk]
            ders[..., k, r] = d
            s1, s2 = s2, s1
    fac = p
    for k in range(1, kmax + 1):
        ders[..., k, :] *= fac
        fac *= p - k
    return ders


def find_span(degree, level, x):
    """Knot span index of x in the level knot vector (x = 1 maps to the last span)."""
    n = 2 ** level
    k = np.floor(np.asarray(x, dtype=float) * n).astype(int)
    return np.clip(k, 0, n - 1) + degree
