import math

import numpy as np
import pytest

from hbnitsche.hmesh import Cell, initial_mesh
from hbnitsche.projection import LocalProjection, l2_norm_on_edge, legendre01, project, sample_operator, trace_on_edge
from hbnitsche.quadrature import cell_rule, edge_rule

ROOT = Cell(0, 0, 0)


def _l2(cell, f, order=10):
    q = cell_rule(order)
    x = cell.x0 + cell.side * q.points[:, 0]
    y = cell.y0 + cell.side * q.points[:, 1]
    return math.sqrt(cell.area * np.sum(q.weights * f(x, y) ** 2))


def test_legendre_orthonormal():
    q = cell_rule(8)
    t = q.points[:8 * 8:8, 0]  # the 1-d nodes
    w = np.array([q.weights[k * 8: k * 8 + 8].sum() for k in range(8)])
    L = legendre01(5, t, 0)[0]
    assert np.allclose(L.T @ (w[:, None] * L), np.eye(6), atol=1e-13)


def test_constant_and_mean():
    p = project(ROOT, lambda x, y: 3.0 + 0 * x, 0)
    assert p(np.array([0.2]), np.array([0.9]))[0] == pytest.approx(3.0, abs=1e-14)
    p = project(ROOT, lambda x, y: x, 0)
    assert p(np.array([0.1]), np.array([0.7]))[0] == pytest.approx(0.5, abs=1e-14)


def test_dense_normal_equation_oracle():
    cell = Cell(1, 0, 0)
    f = lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y)
    p = project(cell, f, 1, order=10)
    # monomial basis 1, x, y, xy on the cell; Gram and load with order-10 rule
    q = cell_rule(10)
    x = cell.x0 + cell.side * q.points[:, 0]
    y = cell.y0 + cell.side * q.points[:, 1]
    B = np.stack([np.ones_like(x), x, y, x * y], axis=1)
    w = q.weights * cell.area
    coef = np.linalg.solve(B.T @ (w[:, None] * B), B.T @ (w * f(x, y)))
    t = np.random.default_rng(0).random((20, 2)) * 0.5
    assert np.allclose(p(t[:, 0], t[:, 1]), np.stack([np.ones(20), t[:, 0], t[:, 1], t[:, 0] * t[:, 1]], 1) @ coef, atol=1e-10)


@pytest.mark.parametrize("d", [0, 1, 2])
def test_reproduction_and_idempotence(d, rng):
    for _ in range(10):
        lev = int(rng.integers(0, 5))
        cell = Cell(lev, int(rng.integers(0, 2 ** lev)), int(rng.integers(0, 2 ** lev)))
        c = rng.standard_normal((d + 1, d + 1))
        f = lambda x, y: np.polynomial.polynomial.polyval2d(x, y, c)
        p = project(cell, f, d)
        t = rng.random((10, 2))
        xs, ys = cell.x0 + cell.side * t[:, 0], cell.y0 + cell.side * t[:, 1]
        assert np.max(np.abs(p(xs, ys) - f(xs, ys))) < 1e-12
        g = lambda x, y: np.sin(3 * x) * np.exp(y)
        pg = project(cell, g, d)
        ppg = project(cell, pg, d)
        assert np.allclose(ppg.coeffs, pg.coeffs, atol=1e-13)


@pytest.mark.parametrize("d", [0, 1, 2])
def test_orthogonality(d):
    cell = Cell(2, 1, 3)
    f = lambda x, y: np.cos(5 * x * y) + x ** 5
    p = project(cell, f, d, order=d + 6)
    q = cell_rule(d + 6)
    x = cell.x0 + cell.side * q.points[:, 0]
    y = cell.y0 + cell.side * q.points[:, 1]
    Lx = legendre01(d, q.points[:, 0], 0)[0]
    Ly = legendre01(d, q.points[:, 1], 0)[0]
    for a in range(d + 1):
        for b in range(d + 1):
            test_fn = Lx[:, a] * Ly[:, b]
            assert abs(cell.area * np.sum(q.weights * (f(x, y) - p(x, y)) * test_fn)) < 1e-12


def test_stability_on_random_fields(rng):
    for k in range(100):
        d = k % 3
        a, b, c, e = rng.standard_normal(4) * 3
        f = lambda x, y: np.sin(a * x + b * y) + c * np.cos(e * x * y)
        lev = int(rng.integers(0, 4))
        cell = Cell(lev, int(rng.integers(0, 2 ** lev)), int(rng.integers(0, 2 ** lev)))
        p = project(cell, f, d, order=d + 8)
        assert p.norm() <= _l2(cell, f, d + 8) * (1 + 1e-12)


@pytest.mark.parametrize("r", [2, 3, 4])
def test_approximation_rate(r):
    f = lambda x, y: np.sin(np.pi * x) * np.cos(2 * y) + np.exp(x * y)
    errs, hs = [], []
    for L in (2, 3, 4, 5):
        tot = 0.0
        for c in initial_mesh(L).cells:
            p = project(c, f, r - 2, order=r + 4)
            tot += _l2(c, lambda x, y: f(x, y) - p(x, y), r + 4) ** 2
        errs.append(math.sqrt(tot))
        hs.append(2.0 ** -L)
    slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
    assert abs(slope - (r - 1)) <= 0.2


def test_sample_operator_matches_project():
    cell = Cell(3, 2, 5)
    f = lambda x, y: np.exp(x) * np.sin(4 * y)
    order = 6
    q = cell_rule(order)
    ref = np.array([[0.0, 0.3], [1.0, 0.5], [0.2, 1.0]])
    S = sample_operator(1, order, ref)
    fq = f(cell.x0 + cell.side * q.points[:, 0], cell.y0 + cell.side * q.points[:, 1])
    p = project(cell, f, 1, order)
    xs, ys = cell.x0 + cell.side * ref[:, 0], cell.y0 + cell.side * ref[:, 1]
    assert np.allclose(S[0] @ fq, p(xs, ys), atol=1e-13)
    gx, gy = p.gradient(xs, ys)
    assert np.allclose(S[1] @ fq / cell.side, gx, atol=1e-11)
    assert np.allclose(S[2] @ fq / cell.side, gy, atol=1e-11)


def test_trace_examples():
    mesh = initial_mesh(0)
    right = next(e for e in mesh.edges()[1] if e.normal == (1, 0))
    p = project(ROOT, lambda x, y: 2.0 + 0 * x, 1)
    v, dn = trace_on_edge(p, right, [0.1, 0.5])
    assert np.allclose(v, 2.0) and np.allclose(dn, 0.0, atol=1e-13)
    p = project(ROOT, lambda x, y: x, 1)
    v, dn = trace_on_edge(p, right, [0.1, 0.5])
    assert np.allclose(v, 1.0) and np.allclose(dn, 1.0)
    far = next(e for e in initial_mesh(1).edges()[1] if Cell(1, 1, 1) not in e.cells)
    with pytest.raises(ValueError):
        trace_on_edge(project(Cell(1, 1, 1), lambda x, y: x, 0), far, [0.5])


# sharp constant is d + 1: the squared endpoint values of the orthonormal
# Legendre polynomials of degree <= d sum to (d + 1)^2
INVERSE_C = {d: d + 1 + 1e-9 for d in range(3)}


@pytest.mark.parametrize("d", [0, 1, 2])
def test_inverse_estimate(d, rng):
    worst = 0.0
    mesh = initial_mesh(2)
    edges = mesh.edges()[0] + mesh.edges()[1]
    for _ in range(100):
        e = edges[int(rng.integers(len(edges)))]
        cell = e.cells[0]
        c = rng.standard_normal((d + 1, d + 1))
        p = LocalProjection(cell, d, c)
        t = edge_rule(d + 2).points[:, 0]
        v, _ = trace_on_edge(p, e, t)
        ratio = l2_norm_on_edge(v, e, d + 2) / (e.h ** -0.5 * p.norm())
        worst = max(worst, ratio)
    assert worst <= INVERSE_C[d]
