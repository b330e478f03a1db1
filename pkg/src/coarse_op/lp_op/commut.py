"""Commutators with Lipschitz functions and two-sided bounds for Commut(L, eps).

Sign convention: ``commutator(b, f)`` returns [f, b] = f b - b f, whose (x, y)
block is (f(x) - f(y)) b_xy.  [b, f] = -[f, b] has the same norm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from coarse_op.lp_op.norms import matrix_norm
from coarse_op.lp_op.operator import LpOperator, ScalarFunction
from coarse_op.space import greedy_net


@dataclass(frozen=True, eq=False)
class CommutBound:
    L: float
    upper: float | None = None
    lower: float | None = None
    witness_f: ScalarFunction | None = None


def commutator(b: LpOperator, f) -> LpOperator:
    vals = f.values if isinstance(f, ScalarFunction) else np.asarray(f, dtype=float)
    return b.reweight(lambda x, y: vals[x] - vals[y])


def commutator_norm(b: LpOperator, f, tol: float = 1e-10) -> float:
    """Measured ||[f, b]|| (exact for p in {1, 2, inf}, a certified lower bound otherwise)."""
    return matrix_norm(commutator(b, f).matrix, b.p, tol=tol).lower


def commut_bound_band(b: LpOperator, L: float) -> CommutBound:
    """Certified sup of ||[f, b]|| over L-Lipschitz contractions f.

    Writes b = sum_k f_k V_k with partial translations V_k; each term contributes
    at most ||f_k|| * L * (displacement of V_k), since [f, V_k] is a weighted
    partial translation with weights bounded by L times the displacement.
    """
    from coarse_op.approx.decompose import band_decompose

    if L < 0:
        raise ValueError("L must be non-negative")
    dec = band_decompose(b)
    total = 0.0
    for part in dec.parts:
        total += part.multiplier_norm(b.p) * part.translation.displacement(b.space)
    return CommutBound(L=L, upper=L * total)


def lipschitz_for_commut(b: LpOperator, eps: float, margin: float = 1e-9) -> float:
    """Largest L (up to ``margin``) for which the band certificate gives ||[b, f]|| < eps."""
    unit = commut_bound_band(b, 1.0).upper
    if unit == 0:
        return math.inf
    return eps / unit * (1 - margin)


def tent(space, S, L: float) -> np.ndarray:
    """clamp_[0,1](1 - L d(x, S))."""
    S = np.atleast_1d(np.asarray(S, dtype=np.int64))
    d = space.dist[:, S].min(axis=1)
    return np.clip(1.0 - L * d, 0.0, 1.0)


def _feasible_interval(space, f: np.ndarray, x: int, L: float) -> tuple[float, float]:
    d = space.dist[x].copy()
    d[x] = np.inf
    lo = max(-1.0, float(np.max(f - L * d)))
    hi = min(1.0, float(np.min(f + L * d)))
    return lo, hi


def commut_search(b: LpOperator, L: float, budget: int = 200, seed: int = 0,
                  extra_sets=None) -> CommutBound:
    """Adversarial lower bound for sup_f ||[f, b]|| over L-Lipschitz contractions.

    Tents around structured centre sets are tried first, then the best tent is
    refined by coordinate ascent that keeps f L-Lipschitz with values in [-1, 1].
    """
    space = b.space
    if budget < 1:
        raise ValueError("budget must be >= 1")
    zero = ScalarFunction(np.zeros(space.n))
    if L == 0 or b.matrix.nnz == 0 or space.n < 2:
        return CommutBound(L=L, lower=0.0, witness_f=zero)
    rng = np.random.default_rng(seed)
    xs, ys, mags = b.block_magnitudes()
    off = xs != ys
    xs, ys, mags = xs[off], ys[off], mags[off]
    if xs.size == 0:
        return CommutBound(L=L, lower=0.0, witness_f=zero)

    score = space.dist[xs, ys] * mags
    order = np.argsort(-score, kind="stable")[:20]
    centre_sets = []
    for i in order:
        centre_sets.append([int(ys[i])])
        centre_sets.append([int(xs[i])])
    if math.isfinite(1.0 / L):
        centre_sets.extend([int(z)] for z in greedy_net(space, max(1.0 / L, 1.0))[:20])
    for S in extra_sets or []:
        centre_sets.append(list(S))

    evals = 0
    best_val, best_f = 0.0, zero.values
    seen = set()
    for S in centre_sets:
        key = tuple(sorted(S))
        if key in seen or evals >= budget:
            continue
        seen.add(key)
        f = tent(space, S, L)
        val = commutator_norm(b, f)
        evals += 1
        if val > best_val:
            best_val, best_f = val, f

    active = np.unique(np.concatenate([xs, ys]))
    f = best_f.copy()
    while evals < budget:
        improved = False
        for x in rng.permutation(active):
            if evals >= budget:
                break
            lo, hi = _feasible_interval(space, f, int(x), L)
            for target in (lo, hi):
                if abs(target - f[x]) < 1e-14:
                    continue
                trial = f.copy()
                trial[x] = target
                val = commutator_norm(b, trial)
                evals += 1
                if val > best_val + 1e-14:
                    best_val, f = val, trial
                    improved = True
                    break
        if not improved:
            break
    return CommutBound(L=L, lower=best_val, witness_f=ScalarFunction(f))
