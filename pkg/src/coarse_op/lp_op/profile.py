"""epsilon-propagation: nu(R) = sup{ ||chi_A b chi_B|| : d(A,B) > R }."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from coarse_op.lp_op.norms import interpolation_bound, matrix_norm
from coarse_op.lp_op.operator import LpOperator, lift_points, off_band, propagation

EXACT_SMALL_LIMIT = 20


class CornerBound(NamedTuple):
    lower: float
    upper: float
    rows: np.ndarray  # witness A
    cols: np.ndarray  # witness B


def _far_from(dist: np.ndarray, B: np.ndarray, R: float) -> np.ndarray:
    if B.size == 0:
        return np.arange(dist.shape[0])
    return np.flatnonzero(dist[:, B].min(axis=1) > R)


def _corner_norm(b: LpOperator, A: np.ndarray, B: np.ndarray, tol: float) -> tuple[float, float]:
    if A.size == 0 or B.size == 0:
        return 0.0, 0.0
    M = b.matrix[lift_points(A, b.k)][:, lift_points(B, b.k)]
    if M.nnz == 0:
        return 0.0, 0.0
    est = matrix_norm(M, b.p, tol=tol)
    return est.lower, est.upper


def _exact_small(b: LpOperator, R: float, tol: float) -> CornerBound:
    n = b.n
    if n > EXACT_SMALL_LIMIT:
        raise ValueError(f"exact_small enumerates 2^n column sets and is capped at "
                         f"n <= {EXACT_SMALL_LIMIT}; got n = {n}, use mode='bounds'")
    dist = b.space.dist
    near = [sum(1 << y for y in np.flatnonzero(dist[x] <= R)) for x in range(n)]
    full = (1 << n) - 1
    best = CornerBound(0.0, 0.0, np.zeros(0, np.int64), np.zeros(0, np.int64))
    best_upper = 0.0
    for mask in range(1, full + 1):
        amask = 0
        for x in range(n):
            if not near[x] & mask:
                amask |= 1 << x
        if amask == 0:
            continue
        # skip B that is not maximal for its A: the maximal one dominates it
        closure = 0
        for y in range(n):
            if not near[y] & amask:
                closure |= 1 << y
        if closure != mask:
            continue
        A = np.array([x for x in range(n) if amask >> x & 1], dtype=np.int64)
        B = np.array([y for y in range(n) if mask >> y & 1], dtype=np.int64)
        lo, hi = _corner_norm(b, A, B, tol)
        best_upper = max(best_upper, hi)
        if lo > best.lower:
            best = CornerBound(lo, best_upper, A, B)
    return best._replace(upper=max(best_upper, best.lower))


def _column_masses(M, k: int, n: int, p: float) -> np.ndarray:
    """Per-point l^p mass of the columns of M (used to rank toggle candidates)."""
    col = np.asarray(abs(M).power(min(p, 50.0)).sum(axis=0)).ravel()
    return col.reshape(n, k).sum(axis=1)


def _bounds(b: LpOperator, R: float, tol: float, budget: int, candidates: int) -> CornerBound:
    dist = b.space.dist
    masked = off_band(b, R)
    M = masked.matrix
    empty = np.zeros(0, np.int64)
    if M.nnz == 0:
        return CornerBound(0.0, 0.0, empty, empty)
    k, n = b.k, b.n
    col = np.asarray(abs(M).sum(axis=0)).ravel()
    row = np.asarray(abs(M).sum(axis=1)).ravel()
    y_star = int(np.argmax(col)) // k
    x_star = int(np.argmax(row)) // k
    if b.p == 1:
        B = np.array([y_star])
        return CornerBound(float(col.max()), float(col.max()), _far_from(dist, B, R), B)
    if math.isinf(b.p):
        A = np.array([x_star])
        return CornerBound(float(row.max()), float(row.max()), A, _far_from(dist, A, R))

    upper = interpolation_bound(M, b.p)
    seeds = [np.array([y_star]), _far_from(dist, np.array([x_star]), R)]
    best = (-1.0, empty, empty)
    evals = 0
    seen: set[bytes] = set()

    def evaluate(B: np.ndarray):
        nonlocal evals
        key = np.sort(B).tobytes()
        if key in seen:
            return None
        seen.add(key)
        evals += 1
        A = _far_from(dist, B, R)
        return _corner_norm(b, A, B, tol)[0], A, B

    for B in seeds:
        res = evaluate(B)
        if res and res[0] > best[0]:
            best = res
    mass = _column_masses(M, k, n, b.p)
    pool = [int(y) for y in np.argsort(-mass, kind="stable")[:candidates] if mass[y] > 0]
    improved = True
    while improved and evals < budget:
        improved = False
        current = set(best[2].tolist())
        for y in pool + sorted(current):
            if evals >= budget:
                break
            trial = current ^ {y}
            if not trial:
                continue
            res = evaluate(np.array(sorted(trial), dtype=np.int64))
            if res and res[0] > best[0] + 1e-15:
                best = res
                improved = True
                break
    lower = max(best[0], 0.0)
    return CornerBound(lower, max(upper, lower), best[1], best[2])


def eps_propagation(b: LpOperator, R: float, mode: str = "bounds", tol: float = 1e-10,
                    budget: int = 200, candidates: int = 40) -> CornerBound:
    """Bounds on nu(R) with a witness pair (A, B), d(A, B) > R.

    ``mode="exact_small"`` enumerates every column set (n <= 20), taking A maximal.
    ``mode="bounds"`` is exact for p in {1, inf}; otherwise it combines a
    greedy set search (lower) with interpolation on the off-band part (upper).
    """
    if R < 0:
        raise ValueError("R must be non-negative")
    if R >= propagation(b):
        empty = np.zeros(0, np.int64)
        return CornerBound(0.0, 0.0, empty, empty)
    if mode == "exact_small":
        return _exact_small(b, R, tol)
    if mode == "bounds":
        return _bounds(b, R, tol, budget, candidates)
    raise ValueError(f"unknown mode {mode!r}; expected 'exact_small' or 'bounds'")


@dataclass(frozen=True)
class ProfileEntry:
    R: float
    value: float
    tag: str  # exact | lower | upper


@dataclass
class QuasiLocalityProfile:
    entries: list[ProfileEntry] = field(default_factory=list)

    def values(self, tag: str) -> list[tuple[float, float]]:
        return [(e.R, e.value) for e in self.entries if e.tag == tag]

    def upper_at(self, R: float) -> float:
        """Certified upper value at R (exact entries count as upper)."""
        for e in self.entries:
            if e.R == R and e.tag in ("exact", "upper"):
                return e.value
        raise KeyError(R)

    def lower_at(self, R: float) -> float:
        for e in self.entries:
            if e.R == R and e.tag in ("exact", "lower"):
                return e.value
        raise KeyError(R)

    def rows(self) -> list[tuple[float, float, float, str]]:
        """(R, lower, upper, tag) rows for CSV export."""
        out = []
        for R in sorted({e.R for e in self.entries}):
            lo, hi = self.lower_at(R), self.upper_at(R)
            out.append((R, lo, hi, "exact" if lo == hi else "bounds"))
        return out

    def decay_rate(self) -> float:
        """exp(slope) of a least-squares fit of log(upper) against R over positive entries."""
        pts = [(R, v) for R, v in self.values("exact") + self.values("upper") if v > 0]
        if len(pts) < 2:
            return 0.0
        R, v = np.array(pts).T
        slope = np.polyfit(R, np.log(v), 1)[0]
        return float(np.exp(slope))


def ql_profile(b: LpOperator, R_grid: Sequence[float], mode: str = "bounds",
               tol: float = 1e-10, **kwargs) -> QuasiLocalityProfile:
    R_arr = [float(R) for R in R_grid]
    if any(b2 < a for a, b2 in zip(R_arr, R_arr[1:])):
        raise ValueError("R_grid must be sorted")
    prop = propagation(b)
    entries: list[ProfileEntry] = []
    exact_norms = b.p in (1, math.inf) or (mode == "exact_small" and b.p == 2)
    for R in R_arr:
        if R >= prop:
            entries.append(ProfileEntry(R, 0.0, "exact"))
            continue
        cb = eps_propagation(b, R, mode=mode, tol=tol, **kwargs)
        if exact_norms:
            entries.append(ProfileEntry(R, cb.upper, "exact"))
        else:
            entries.append(ProfileEntry(R, cb.lower, "lower"))
            entries.append(ProfileEntry(R, cb.upper, "upper"))
    for tag in ("exact", "upper"):
        seq = [e for e in entries if e.tag in (tag, "exact")] if tag == "upper" else \
              [e for e in entries if e.tag == tag]
        for e0, e1 in zip(seq, seq[1:]):
            assert e1.value <= e0.value + 1e-12 * max(1.0, e0.value), (
                f"profile not non-increasing: nu({e1.R}) = {e1.value} > nu({e0.R}) = {e0.value}")
    return QuasiLocalityProfile(entries)
