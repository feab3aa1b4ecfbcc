"""Preconditioned Krylov solve of assembled sparse systems."""

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class NonConvergenceError(RuntimeError):
    def __init__(self, iterations: int, residual: float, tol: float):
        self.iterations = iterations
        self.residual = residual
        self.tol = tol
        super().__init__(
            f"Krylov solver did not reach rel. residual {tol:.1e} in "
            f"{iterations} iterations (final residual {residual:.3e})"
        )


def solve_krylov(system, guess=None, tol=1e-8, max_iters=500, restart=100,
                 precondition: str = "lu", ilu_drop_tol=1e-5, ilu_fill_factor=20.0,
                 M=None):
    """Restarted GMRES on the constrained system, factorization-preconditioned.

    precondition: "lu" (complete sparse factorization, robust across the badly
    scaled RIIS saddle-point systems), "ilu" (incomplete, drop-tolerance
    based), or "none". A ready preconditioner can be passed as M (e.g. a
    reused factorization of a nearby matrix). The contract is only the
    relative residual tolerance; returns (solution, iterations,
    relative_residual) and raises NonConvergenceError when max_iters is
    exhausted above tolerance.
    """
    system.apply_constraints()
    A = system.matrix.tocsr()
    b = system.rhs
    n = A.shape[0]
    x0 = np.zeros(n) if guess is None else np.asarray(guess, dtype=float)

    b_norm = np.linalg.norm(b)
    if b_norm == 0.0:
        return np.zeros(n), 0, 0.0

    if M is None and precondition != "none":
        try:
            if precondition == "lu":
                fac = spla.splu(A.tocsc())
            else:
                fac = spla.spilu(A.tocsc(), drop_tol=ilu_drop_tol,
                                 fill_factor=ilu_fill_factor)
            M = spla.LinearOperator((n, n), fac.solve)
        except RuntimeError:
            # singular or structurally deficient factorization: run unpreconditioned
            M = None

    iters = 0

    def count(_):
        nonlocal iters
        iters += 1

    x, info = spla.gmres(
        A, b, x0=x0, rtol=tol, atol=0.0, restart=restart,
        maxiter=max(1, max_iters // restart + 1), M=M, callback=count,
        callback_type="pr_norm",
    )
    res = float(np.linalg.norm(b - A @ x) / b_norm)
    if info != 0 and res > tol:
        raise NonConvergenceError(iters, res, tol)
    return x, max(iters, 1), res
