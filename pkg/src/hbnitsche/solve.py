"""Linear solve for the symmetric Nitsche system.

Small and medium systems use a sparse LU with symmetric pivoting, whose
diagonal also serves as a positive-definiteness check. Large systems fall
back to Jacobi-preconditioned conjugate gradients.
"""
import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)

DIRECT_LIMIT = 50_000
# fourth-order systems have condition numbers ~ h^-4, so residuals below
# about 1e-10 are not always attainable in double precision; a requested
# tolerance tighter than this floor is pursued but not enforced
RESIDUAL_FLOOR = 1e-8


class SolverError(RuntimeError):
    """The system could not be solved as a symmetric positive definite one."""


@dataclass(frozen=True)
class SolveInfo:
    method: str
    residual: float  # relative residual ||b - A x|| / ||b||
    iterations: int


def _not_spd(detail):
    return SolverError(
        f"system matrix is not positive definite ({detail}); "
        "the stabilization parameters gamma1/gamma2 are probably too small for coercivity"
    )


def _direct(A, b, rtol, refine_steps):
    try:
        lu = spla.splu(
            A.tocsc(),
            permc_spec="MMD_AT_PLUS_A",
            diag_pivot_thresh=0.0,
            options=dict(SymmetricMode=True),
        )
    except RuntimeError as exc:  # exactly singular
        raise _not_spd(str(exc)) from exc
    if not np.array_equal(lu.perm_r, lu.perm_c):
        raise _not_spd("symmetric pivoting broke down")
    d = lu.U.diagonal()
    if np.any(d <= 0):
        raise _not_spd(f"{int(np.sum(d <= 0))} nonpositive pivots")
    x = lu.solve(b)
    nb = np.linalg.norm(b)
    res = np.linalg.norm(b - A @ x) / nb
    steps = 0
    while res > rtol and steps < refine_steps:
        x = x + lu.solve(b - A @ x)
        res = np.linalg.norm(b - A @ x) / nb
        steps += 1
    return x, SolveInfo("lu", float(res), steps)


def _iterative(A, b, rtol, maxiter, restarts=5):
    d = A.diagonal()
    if np.any(d <= 0):
        raise _not_spd("nonpositive diagonal entry")
    M = sps.diags(1.0 / d)
    count = [0]

    def cb(_):
        count[0] += 1

    nb = np.linalg.norm(b)
    x = np.zeros_like(b)
    res, info = 1.0, 0
    # restarts correct the drift between the recursive and the true residual
    for _ in range(restarts + 1):
        x, info = spla.cg(A, b, x0=x, rtol=rtol, maxiter=maxiter, M=M, callback=cb)
        res = np.linalg.norm(b - A @ x) / nb
        if res <= rtol:
            break
    if info < 0 or res > max(rtol, RESIDUAL_FLOOR):
        raise SolverError(f"conjugate gradients did not converge (info={info}, residual {res:.2e})")
    return x, SolveInfo("cg", float(res), count[0])


def solve(A, b, rtol: float = 1e-10, direct_limit: int = DIRECT_LIMIT, maxiter: int = None,
          refine_steps: int = 3, return_info: bool = False):
    """Solve A x = b for symmetric positive definite A.

    Raises SolverError when A is detected to be indefinite or the residual
    target is not met.
    """
    A = sps.csr_matrix(A)
    b = np.asarray(b, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n) or b.shape != (n,):
        raise ValueError(f"shape mismatch: A {A.shape}, b {b.shape}")
    if n == 0 or not np.any(b):
        x, info = np.zeros(n), SolveInfo("trivial", 0.0, 0)
    elif n <= direct_limit:
        x, info = _direct(A, b, rtol, refine_steps)
        if info.residual > max(rtol, RESIDUAL_FLOOR):
            raise SolverError(f"residual {info.residual:.2e} above tolerance after refinement")
    else:
        x, info = _iterative(A, b, rtol, maxiter or 10 * n)
    log.debug("solve n=%d method=%s residual=%.2e", n, info.method, info.residual)
    return (x, info) if return_info else x


def solve_system(system, **kw):
    """Solve an assembled NitscheSystem."""
    return solve(system.matrix, system.load, **kw)
