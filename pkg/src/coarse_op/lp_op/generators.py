"""Test operators: random band operators, shifts, multiplication operators, Neumann series."""

from __future__ import annotations

import math

import numpy as np
import scipy.sparse as sp

from coarse_op.lp_op.norms import opnorm
from coarse_op.lp_op.operator import LpOperator, scale
from coarse_op.space import MetricSpace


class ContractionError(ValueError):
    """lambda * ||a|| >= 1: the Neumann series does not converge."""


def random_band(space: MetricSpace, r: float, density: float = 1.0, magnitude: float = 1.0,
                seed: int = 0, p=2, k: int = 1, real: bool = False) -> LpOperator:
    """Blocks only where d(x,y) <= r, each admissible pair kept with probability ``density``.

    Entries are complex with modulus <= ``magnitude`` (uniform modulus, uniform phase).
    """
    if r < 0:
        raise ValueError("r must be non-negative")
    if not 0 < density <= 1:
        raise ValueError("density must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    xs, ys = np.nonzero(space.dist <= r)
    keep = rng.random(xs.size) < density
    modulus = magnitude * (1.0 - rng.random((xs.size, k, k)))  # in (0, magnitude]
    if real:
        phase = np.where(rng.random((xs.size, k, k)) < 0.5, -1.0, 1.0)
    else:
        phase = np.exp(2j * np.pi * rng.random((xs.size, k, k)))
    blocks = modulus * phase
    entries = ((int(x), int(y), blocks[i]) for i, (x, y) in enumerate(zip(xs, ys)) if keep[i])
    return LpOperator.from_blocks(space, p, k, entries)


def multiplication_operator(space: MetricSpace, values, p=2) -> LpOperator:
    """(A xi)(x) = f(x) xi(x); ``values`` has shape (n,) or (n, k, k)."""
    vals = np.asarray(values, dtype=complex)
    k = 1 if vals.ndim == 1 else vals.shape[1]
    blocks = vals.reshape(space.n, k, k)
    return LpOperator.from_blocks(space, p, k, ((x, x, blocks[x]) for x in range(space.n)))


def partial_translation_operator(space: MetricSpace, pairs, p=2, k: int = 1) -> LpOperator:
    """(V xi)(t(d)) = xi(d) for each pair (d, t(d))."""
    eye = np.eye(k)
    return LpOperator.from_blocks(space, p, k, ((int(t), int(d), eye) for d, t in pairs))


def shift_operator(space: MetricSpace, p=2, k: int = 1) -> LpOperator:
    """Unilateral shift pattern: point x is sent to x+1 (index order), the last point is dropped."""
    return partial_translation_operator(space, [(x, x + 1) for x in range(space.n - 1)], p, k)


def tridiagonal(space: MetricSpace, diag=0.0, lower=1.0, upper=1.0, p=2) -> LpOperator:
    """Constant tridiagonal operator in index order (band-1 on a path)."""
    n = space.n
    m = sp.diags([np.full(n - 1, lower), np.full(n, diag), np.full(n - 1, upper)],
                 [-1, 0, 1], shape=(n, n), dtype=complex)
    return LpOperator(space, p, 1, m.tocsr())


def normalized(b: LpOperator) -> LpOperator:
    """b divided by its certified upper norm, so ||b|| <= 1 with equality up to the estimate gap."""
    est = opnorm(b)
    if est.upper == 0:
        return b
    return scale(b, 1.0 / est.upper)


def neumann_terms(lam_norm: float, tail_tol: float) -> int:
    """Minimal J with (lam ||a||)^(J+1) / (1 - lam ||a||) <= tail_tol."""
    if lam_norm == 0:
        return 0
    J = 0
    while lam_norm ** (J + 1) / (1 - lam_norm) > tail_tol:
        J += 1
    return J


def neumann_quasilocal(space: MetricSpace, a: LpOperator, lam: float,
                       tail_tol: float = 1e-12) -> LpOperator:
    """Truncated Neumann series sum_{j<=J} (lam a)^j approximating (Id - lam a)^{-1}."""
    if a.space is not space and a.space.n != space.n:
        raise ValueError("operator does not live on the given space")
    a_norm = opnorm(a).upper
    rate = abs(lam) * a_norm
    if rate >= 1:
        raise ContractionError(
            f"contraction precondition violated: |lambda| * ||a|| = {abs(lam)} * {a_norm} "
            f"= {rate} >= 1")
    J = neumann_terms(rate, tail_tol)
    step = lam * a.matrix
    term = sp.identity(a.dim, dtype=complex, format="csr")
    total = term.copy()
    for _ in range(J):
        term = (step @ term).tocsr()
        total = total + term
    return a.with_matrix(total)


def residual_norm(a: LpOperator, lam: float, b: LpOperator) -> float:
    """Certified upper bound for ||(Id - lam a) b - Id||."""
    eye = sp.identity(a.dim, dtype=complex, format="csr")
    r = (eye - lam * a.matrix) @ b.matrix - eye
    return opnorm(a.with_matrix(r)).upper


def geometric_envelope(rate: float, R: float, prop: float) -> float:
    """(rate)^ceil(R / prop) / (1 - rate): the Neumann prediction for nu(R)."""
    if prop == 0:
        return 0.0 if R >= 0 else 1.0 / (1 - rate)
    return rate ** math.ceil(R / prop) / (1 - rate)
