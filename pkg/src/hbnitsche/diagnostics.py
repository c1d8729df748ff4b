"""Self-checks: coercivity eigenvalues, matrix symmetry, projection reproduction."""
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .assembly import assemble
from .hbspline import build_space
from .hmesh import Cell, initial_mesh
from .projection import project

GAMMA_SWEEP = (0.01, 1.0, 100.0, 10000.0)


def min_generalized_eigenvalue(system, gamma1, gamma2, gram_gamma=None):
    """Smallest eigenvalue of A(gamma) v = lambda M v, with M the energy-norm
    Gram matrix at fixed gram_gamma (default: the system's own gammas)."""
    g = (system.gamma1, system.gamma2) if gram_gamma is None else gram_gamma
    M = system.norm_gram(*g).toarray()
    A = system.with_gamma(gamma1, gamma2).matrix.toarray()
    return float(sla.eigh(A, M, eigvals_only=True, subset_by_index=(0, 0))[0])


def coercivity_sweep(level, degree=2, gammas=GAMMA_SWEEP, gram_gamma=100.0):
    system = assemble(build_space(initial_mesh(level, degree=degree)), None, gram_gamma, gram_gamma)
    return [min_generalized_eigenvalue(system, g, g, (gram_gamma, gram_gamma)) for g in gammas]


def symmetry_defect(system) -> float:
    A = system.matrix
    d = abs(A - A.T)
    return float(d.max()) if d.nnz else 0.0


def projection_reproduction(degree, trials=20, seed=0) -> float:
    """Max error of projecting random tensor polynomials of the projection's
    degree on random cells; should be at round-off level."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        level = int(rng.integers(0, 6))
        cell = Cell(level, int(rng.integers(0, 2 ** level)), int(rng.integers(0, 2 ** level)))
        c = rng.standard_normal((degree + 1, degree + 1))

        def poly(x, y, c=c):
            return sum(c[a, b] * x ** a * y ** b for a in range(degree + 1) for b in range(degree + 1))

        p = project(cell, poly, degree)
        t = rng.random((10, 2))
        x, y = cell.x0 + cell.side * t[:, 0], cell.y0 + cell.side * t[:, 1]
        worst = max(worst, float(np.max(np.abs(p(x, y) - poly(x, y)))))
    return worst


@dataclass
class CheckReport:
    lines: list
    ok: bool


def run_checks(degree=2, gamma=100.0) -> CheckReport:
    lines, ok = [], True
    for level in (1, 2):
        sweep = coercivity_sweep(level, degree, gram_gamma=gamma)
        at = sweep[GAMMA_SWEEP.index(100.0)] if gamma == 100.0 else coercivity_sweep(level, degree, (gamma,), gamma)[0]
        mono = all(b >= a - 1e-10 * max(1.0, abs(a)) for a, b in zip(sweep, sweep[1:]))
        good = at > 0 and mono
        ok &= good
        lines.append(f"coercivity {2**level}x{2**level}: min eig {at:.4g} at gamma={gamma:g}; "
                     f"sweep {', '.join(f'{v:.4g}' for v in sweep)} {'ok' if good else 'FAIL'}")
    system = assemble(build_space(initial_mesh(3, degree=degree)), None, gamma, gamma)
    sym = symmetry_defect(system)
    ok &= sym == 0.0
    lines.append(f"symmetry: max|A - A^T| = {sym:g} {'ok' if sym == 0.0 else 'FAIL'}")
    rep = projection_reproduction(degree - 2)
    ok &= rep < 1e-12
    lines.append(f"projection reproduction: max error {rep:.2e} {'ok' if rep < 1e-12 else 'FAIL'}")
    return CheckReport(lines, ok)
