"""Operator p-norm estimation with certified two-sided bounds.

p = 1 and p = inf are exact (column / row sums).  p = 2 uses a dense Hermitian
eigen-solve with a backward-error slack when the operator is small enough, and
power iteration on b*b otherwise.  Other p get a Boyd-type power iteration for
the lower bound and Riesz-Thorin interpolation for the upper bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from coarse_op.lp_op.operator import LpOperator, conjugate

EPS = np.finfo(float).eps
DENSE_LIMIT = 4096


@dataclass(frozen=True, eq=False)
class NormEstimate:
    lower: float
    upper: float
    witness: np.ndarray
    method: str
    converged: bool = True

    @property
    def gap(self) -> float:
        return self.upper - self.lower


def vector_norm(v, p: float) -> float:
    a = np.abs(np.asarray(v))
    if a.size == 0:
        return 0.0
    if math.isinf(p):
        return float(a.max())
    if p == 1:
        return float(a.sum())
    if p == 2:
        return float(np.sqrt(np.dot(a, a)))
    top = a.max()
    if top == 0:
        return 0.0
    return float(top * np.sum((a / top) ** p) ** (1.0 / p))


def _as_sparse(M) -> sp.csr_matrix:
    return M if sp.issparse(M) else sp.csr_matrix(np.asarray(M, dtype=complex))


def norm_1(M) -> float:
    M = _as_sparse(M)
    if M.nnz == 0:
        return 0.0
    return float(np.asarray(abs(M).sum(axis=0)).max())


def norm_inf(M) -> float:
    M = _as_sparse(M)
    if M.nnz == 0:
        return 0.0
    return float(np.asarray(abs(M).sum(axis=1)).max())


def interpolation_bound(M, p: float) -> float:
    """Riesz-Thorin: ||M||_p <= ||M||_1^(1/p) ||M||_inf^(1/q)."""
    n1, ninf = norm_1(M), norm_inf(M)
    if n1 == 0 or ninf == 0:
        return 0.0
    if p == 1:
        return n1
    if math.isinf(p):
        return ninf
    return float(n1 ** (1.0 / p) * ninf ** (1.0 - 1.0 / p))


def _unit(n: int, j: int) -> np.ndarray:
    e = np.zeros(n, dtype=complex)
    e[j] = 1.0
    return e


def _phase(z: np.ndarray) -> np.ndarray:
    a = np.abs(z)
    out = np.ones_like(z, dtype=complex)
    nz = a > 0
    out[nz] = z[nz] / a[nz]
    return out


def _norm_one(M: sp.csr_matrix) -> NormEstimate:
    col = np.asarray(abs(M).sum(axis=0)).ravel()
    j = int(np.argmax(col))
    w = _unit(M.shape[1], j)
    lower = vector_norm(M @ w, 1)
    return NormEstimate(lower, max(float(col[j]), lower), w, "exact-columns")


def _norm_inf(M: sp.csr_matrix) -> NormEstimate:
    row = np.asarray(abs(M).sum(axis=1)).ravel()
    i = int(np.argmax(row))
    w = np.conj(_phase(M.getrow(i).toarray().ravel()))
    lower = vector_norm(M @ w, math.inf)
    return NormEstimate(lower, max(float(row[i]), lower), w, "exact-rows")


def _norm_two_dense(M: sp.csr_matrix) -> NormEstimate:
    A = M.toarray()
    gram = A.conj().T @ A
    n = gram.shape[0]
    lam, vec = sla.eigh(gram, subset_by_index=[n - 1, n - 1])
    w = vec[:, 0].astype(complex)
    w /= np.linalg.norm(w)
    lower = vector_norm(A @ w, 2)
    # forming and diagonalising the Gram matrix perturbs it by at most this much
    slack = 4.0 * (sum(A.shape) + 8) * EPS * norm_1(M) * norm_inf(M)
    upper = math.sqrt(max(float(lam[0]), 0.0) + slack)
    return NormEstimate(lower, max(upper, lower), w, "dense-gram")


def _norm_two_power(M: sp.csr_matrix, tol: float, maxiter: int, rng) -> NormEstimate:
    n = M.shape[1]
    x = np.ones(n, dtype=complex) + 0.1 * rng.standard_normal(n)
    x /= np.linalg.norm(x)
    MH = M.conj().T.tocsr()
    best, best_x = 0.0, x
    for _ in range(maxiter):
        y = MH @ (M @ x)
        ny = np.linalg.norm(y)
        if ny == 0:
            break
        x = y / ny
        val = vector_norm(M @ x, 2)
        if val > best:
            improved = val - best
            best, best_x = val, x
            if improved <= tol * max(best, 1.0) * 1e-3:
                break
        else:
            break
    upper = interpolation_bound(M, 2)
    return NormEstimate(best, max(upper, best), best_x, "power-gram", upper - best <= tol)


def _dual(y: np.ndarray, r: float) -> np.ndarray:
    """Unit vector in l^{r'} norming y in l^r."""
    a = np.abs(y)
    nrm = vector_norm(y, r)
    if nrm == 0:
        return np.zeros_like(y, dtype=complex)
    return _phase(y) * (a / nrm) ** (r - 1)


def _boyd_run(M, MH, p: float, q: float, x: np.ndarray, maxiter: int, tol: float):
    x = x / vector_norm(x, p)
    best, best_x = vector_norm(M @ x, p), x
    for _ in range(maxiter):
        y = M @ x
        z = MH @ _dual(y, p)
        zq = vector_norm(z, q)
        if zq == 0 or zq <= np.real(np.vdot(z, x)) * (1 + tol):
            break
        x = _dual(z, q)
        val = vector_norm(M @ x, p)
        if val > best:
            best, best_x = val, x
    return best, best_x


def _norm_general(M: sp.csr_matrix, p: float, tol: float, maxiter: int, restarts: int,
                  rng) -> NormEstimate:
    q = conjugate(p)
    n = M.shape[1]
    MH = M.conj().T.tocsr()
    starts = [np.ones(n, dtype=complex), _norm_one(M).witness, _norm_inf(M).witness]
    for _ in range(restarts):
        starts.append(rng.standard_normal(n) + 1j * rng.standard_normal(n))
    best, best_x = -1.0, starts[0]
    for x0 in starts:
        if vector_norm(x0, p) == 0:
            continue
        val, x = _boyd_run(M, MH, p, q, x0, maxiter, tol)
        if val > best:
            best, best_x = val, x
    best_x = best_x / vector_norm(best_x, p)
    lower = vector_norm(M @ best_x, p)
    upper = interpolation_bound(M, p)
    return NormEstimate(lower, max(upper, lower), best_x, "boyd+interpolation",
                        upper - lower <= tol)


def matrix_norm(M, p: float, tol: float = 1e-10, seed: int = 0, maxiter: int = 200,
                restarts: int = 3, dense_limit: int = DENSE_LIMIT) -> NormEstimate:
    """Two-sided estimate of the p->p norm of a (possibly rectangular) matrix."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    M = _as_sparse(M).astype(complex)
    n = M.shape[1]
    if n == 0 or M.shape[0] == 0:
        return NormEstimate(0.0, 0.0, np.zeros(n, dtype=complex), "empty")
    if M.nnz == 0:
        return NormEstimate(0.0, 0.0, _unit(n, 0), "zero")
    if p == 1:
        return _norm_one(M)
    if math.isinf(p):
        return _norm_inf(M)
    rng = np.random.default_rng(seed)
    if p == 2:
        if max(M.shape) <= dense_limit:
            return _norm_two_dense(M)
        return _norm_two_power(M, tol, maxiter * 10, rng)
    return _norm_general(M, p, tol, maxiter, restarts, rng)


def opnorm(b: LpOperator, tol: float = 1e-10, **kwargs) -> NormEstimate:
    return matrix_norm(b.matrix, b.p, tol=tol, **kwargs)
