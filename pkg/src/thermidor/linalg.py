"""Sparse linear solves for the nonsymmetric time-step systems."""

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import InvalidArgumentError, SolverError

DENSE_LIMIT = 2000


@dataclass
class SolveInfo:
    iterations: int
    residual: float
    method: str


def bicgstab(A, b, x0=None, tol=1e-10, maxiter=None, diag=None):
    """Jacobi-preconditioned BiCGStab.

    Returns ``(x, info)`` where ``info.residual`` is the true relative
    residual ``|b - A x| / |b|``. Never raises; the caller decides what a
    failure means.
    """
    n = b.shape[0]
    maxiter = maxiter or max(100, 2 * n)
    if diag is None:
        diag = A.diagonal()
    inv_d = np.where(diag != 0, 1.0 / np.where(diag != 0, diag, 1.0), 1.0)
    normb = np.linalg.norm(b)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - A @ x
    if normb == 0.0:
        return np.zeros(n), SolveInfo(0, 0.0, "bicgstab")
    if np.linalg.norm(r) <= tol * normb:
        return x, SolveInfo(0, np.linalg.norm(r) / normb, "bicgstab")

    r_hat = r.copy()
    rho = alpha = omega = 1.0
    v = np.zeros(n)
    p = np.zeros(n)
    it = 0
    for it in range(1, maxiter + 1):
        rho_new = r_hat @ r
        if rho_new == 0.0 or omega == 0.0:
            break
        beta = (rho_new / rho) * (alpha / omega)
        rho = rho_new
        p = r + beta * (p - omega * v)
        p_hat = inv_d * p
        v = A @ p_hat
        denom = r_hat @ v
        if denom == 0.0:
            break
        alpha = rho / denom
        s = r - alpha * v
        if np.linalg.norm(s) <= tol * normb:
            x += alpha * p_hat
            r = s
            break
        s_hat = inv_d * s
        t = A @ s_hat
        tt = t @ t
        if tt == 0.0:
            break
        omega = (t @ s) / tt
        x += alpha * p_hat + omega * s_hat
        r = s - omega * t
        if np.linalg.norm(r) <= tol * normb:
            break
    res = np.linalg.norm(b - A @ x) / normb
    return x, SolveInfo(it, float(res), "bicgstab")


def solve_linear(A, rhs, tol=1e-10, x0=None, maxiter=None, tag=""):
    """Solve ``A x = rhs`` to relative residual ``tol``.

    BiCGStab with diagonal preconditioning is tried first. If it stalls, a
    direct factorization is used (dense LU up to ``DENSE_LIMIT`` unknowns,
    sparse LU above).

    Returns
    -------
    x : ndarray
    info : SolveInfo

    Raises
    ------
    SolverError
        If the final relative residual exceeds ``tol``.
    """
    rhs = np.asarray(rhs, dtype=float)
    if A.shape[0] != A.shape[1] or A.shape[0] != rhs.shape[0]:
        raise InvalidArgumentError(
            f"incompatible system: A {A.shape}, rhs {rhs.shape}")
    x, info = bicgstab(A, rhs, x0=x0, tol=tol, maxiter=maxiter)
    if info.residual <= tol and np.all(np.isfinite(x)):
        return x, info

    normb = np.linalg.norm(rhs)
    n = A.shape[0]
    with np.errstate(all="ignore"):
        try:
            if n <= DENSE_LIMIT:
                dense = A.toarray() if sp.issparse(A) else np.asarray(A)
                lu = scipy.linalg.lu_factor(dense, check_finite=False)
                x = scipy.linalg.lu_solve(lu, rhs, check_finite=False)
                method = "dense-lu"
            else:
                x = spla.splu(sp.csc_matrix(A)).solve(rhs)
                method = "sparse-lu"
            res = np.linalg.norm(rhs - A @ x) / normb
        except (RuntimeError, ValueError, np.linalg.LinAlgError):
            res, method = float("inf"), "direct"
    if not np.isfinite(res) or res > tol:
        raise SolverError(
            f"linear solve{' for ' + tag if tag else ''} failed: relative "
            f"residual {res:.3e} > {tol:.1e} (bicgstab reached "
            f"{info.residual:.3e} after {info.iterations} iterations)",
            residual=float(res), tag=tag)
    return x, SolveInfo(info.iterations, float(res), method)


class FactorizedSolver:
    """Sparse LU of a fixed matrix, reused across many right-hand sides."""

    def __init__(self, A):
        self.A = sp.csc_matrix(A)
        self._lu = spla.splu(self.A)

    def solve(self, rhs):
        return self._lu.solve(np.asarray(rhs, dtype=float))
