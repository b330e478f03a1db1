"""Metric sparsification, norm localisation on bounded windows, and the inverse-closedness experiment."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from coarse_op.lp_op.commut import commut_bound_band
from coarse_op.lp_op.generators import ContractionError, geometric_envelope, normalized, random_band
from coarse_op.lp_op.norms import matrix_norm, opnorm, vector_norm
from coarse_op.lp_op.operator import LpOperator, lift_points, propagation
from coarse_op.lp_op.profile import QuasiLocalityProfile, ql_profile
from coarse_op.space import MetricSpace, ball, diameter, set_distance

# -- sparsification -----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SparsificationResult:
    components: list[np.ndarray]
    separation: int
    diameter_bound: float
    fraction: float
    total_mass: float
    c: float
    strategy: str
    box_side: int | None = None
    shift: tuple[int, ...] | None = None
    guarantee: float | None = None

    @property
    def success(self) -> bool:
        return self.fraction >= self.c

    @property
    def union(self) -> np.ndarray:
        if not self.components:
            return np.zeros(0, dtype=np.int64)
        return np.sort(np.concatenate(self.components))

    def verify(self, space: MetricSpace) -> None:
        """Diameter bound and separation strictly greater than m, checked exactly."""
        for i, U in enumerate(self.components):
            if diameter(space, U) > self.diameter_bound:
                raise AssertionError(f"component {i} has diameter {diameter(space, U)} "
                                     f"> {self.diameter_bound}")
        for i, j in itertools.combinations(range(len(self.components)), 2):
            d = set_distance(space, self.components[i], self.components[j])
            if d <= self.separation:
                raise AssertionError(f"components {i} and {j} are at distance {d} "
                                     f"<= {self.separation}")


def grid_box_side(N: int, m: int, c: float, side: int | None = None) -> int:
    """Minimal f with (f / (f + m))^N >= c, capped at ``side`` (one box then covers the grid)."""
    if not 0 < c <= 1:
        raise ValueError("c must lie in (0, 1]")
    if m < 1:
        raise ValueError("m must be >= 1")
    if c == 1:
        if side is None:
            raise ValueError("c = 1 is unreachable without a side cap")
        return side
    # (f/(f+m))^N >= c  <=>  f >= m r / (1 - r) with r = c^(1/N)
    r = c ** (1.0 / N)
    f = max(1, math.ceil(m * r / (1 - r) - 1e-9))
    while f > 1 and ((f - 1) / (f - 1 + m)) ** N >= c:
        f -= 1
    while (f / (f + m)) ** N < c:
        f += 1
    return f if side is None else min(f, side)


def _check_weights(space: MetricSpace, weights) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    if w.shape != (space.n,):
        raise ValueError(f"weights must have shape ({space.n},)")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite and non-negative")
    if w.sum() <= 0:
        raise ValueError("weights must have positive total mass")
    return w


def _grid_shift(space: MetricSpace, w: np.ndarray, m: int, c: float) -> SparsificationResult:
    N, side = space.grid_shape
    f = grid_box_side(N, m, c, side)
    period = f + m
    coords = space.coords
    shifts = np.arange(period)
    # inside[a][t, x]: coordinate a of x lands in a box under shift t
    inside = [((coords[None, :, a] + shifts[:, None]) % period) < f for a in range(N)]
    if N == 1:
        mass = inside[0].astype(float) @ w
    elif N == 2:
        mass = (inside[0] * w[None, :]).astype(float) @ inside[1].T.astype(float)
    else:
        mass = np.zeros((period,) * N)
        for t in itertools.product(range(period), repeat=N):
            sel = np.logical_and.reduce([inside[a][t[a]] for a in range(N)])
            mass[t] = w[sel].sum()
    best = np.unravel_index(int(np.argmax(mass)), mass.shape)  # first maximum: lowest shift
    t = tuple(int(s) for s in best)
    sel = np.logical_and.reduce([inside[a][t[a]] for a in range(N)]) & (w > 0)
    box = (coords + np.array(t)) // period
    keys = np.unique(box[sel], axis=0)
    comps = []
    for key in keys:
        comps.append(np.flatnonzero(sel & np.all(box == key, axis=1)))
    total = float(w.sum())
    fraction = float(w[sel].sum() / total)
    return SparsificationResult(comps, m, float(N * (f - 1)), fraction, total, c,
                                "grid_shift", box_side=f, shift=t,
                                guarantee=(f / (f + m)) ** N if f < side else 1.0)


def _greedy_once(space: MetricSpace, w: np.ndarray, m: int, radius: float):
    order = np.lexsort((np.arange(space.n), -w))
    free = w > 0
    blocked = np.zeros(space.n, dtype=bool)
    comps = []
    for x in order:
        if w[x] <= 0:
            break
        if not free[x] or blocked[x]:
            continue
        comp = np.flatnonzero((space.dist[x] <= radius) & free & ~blocked)
        comps.append(comp)
        free[comp] = False
        blocked |= space.dist[:, comp].min(axis=1) <= m
    mass = sum(float(w[U].sum()) for U in comps)
    return comps, mass


def _greedy(space: MetricSpace, w: np.ndarray, m: int, c: float,
            diameter_cap: float | None) -> SparsificationResult:
    total = float(w.sum())
    radii = ([diameter_cap / 2.0] if diameter_cap is not None
             else sorted({0.0, *np.unique(space.dist).tolist()}))
    best = None
    for radius in radii:
        comps, mass = _greedy_once(space, w, m, radius)
        frac = mass / total
        if best is None or frac > best[1]:
            best = (comps, frac, radius)
        if frac >= c:
            break
    comps, frac, radius = best
    return SparsificationResult(comps, m, 2.0 * radius, frac, total, c, "greedy")


def sparsify(space: MetricSpace, weights, m: int, c: float, strategy: str = "auto",
             diameter_cap: float | None = None) -> SparsificationResult:
    """m-separated, bounded components capturing a c-fraction of the mass (or a flagged failure).

    Components are separated by more than m; only points of positive weight are kept.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    if not 0 < c <= 1:
        raise ValueError("c must lie in (0, 1]")
    w = _check_weights(space, weights)
    if strategy == "auto":
        strategy = "grid_shift" if space.is_grid else "greedy"
    if strategy == "grid_shift":
        return _grid_shift(space, w, int(m), c)
    if strategy == "greedy":
        return _greedy(space, w, int(m), c, diameter_cap)
    raise ValueError(f"unknown strategy {strategy!r}; expected auto, grid_shift or greedy")


# -- localisation ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LocalisationResult:
    v: np.ndarray
    support_diameter: float
    value: float
    reference: float
    meta: dict = field(default_factory=dict)

    @property
    def ratio(self) -> float:
        return self.value / self.reference if self.reference > 0 else 1.0

    def support(self, k: int) -> np.ndarray:
        return np.unique(np.flatnonzero(self.v) // k)


def _localised(b: LpOperator, v: np.ndarray, reference: float, meta: dict) -> LocalisationResult:
    v = v / vector_norm(v, b.p)
    pts = np.unique(np.flatnonzero(v) // b.k)
    value = vector_norm(b.matrix @ v, b.p)
    return LocalisationResult(v, diameter(b.space, pts), value, reference, meta)


def onl_search(b: LpOperator, S: float, tol: float = 1e-10) -> LocalisationResult:
    """Best vector supported in a ball window B(x, S/2), exhaustive over centres."""
    if S < 0:
        raise ValueError("S must be non-negative")
    reference = opnorm(b, tol=tol).lower
    best = None
    seen = set()
    for x in range(b.n):
        W = ball(b.space, x, S / 2.0)
        key = W.tobytes()
        if key in seen:
            continue
        seen.add(key)
        cols = lift_points(W, b.k)
        est = matrix_norm(b.matrix[:, cols], b.p, tol=tol)
        if best is None or est.lower > best[0]:
            best = (est.lower, x, cols, est.witness)
    _, x, cols, wit = best
    v = np.zeros(b.dim, dtype=complex)
    v[cols] = wit
    if not np.any(v):
        v[cols[0]] = 1.0
    return _localised(b, v, reference, {"centre": int(x), "S": S, "windows": len(seen)})


def ql_parameters(L: float, eps: float, M: float, p: float) -> tuple[int, float]:
    """(m, c): separation m > 4/L and c with M (1 - c)^(1/p) < eps, clipped to [0.5, 1)."""
    m = int(math.floor(4.0 / L)) + 1
    if M <= 0:
        return m, 0.5
    c = 1.0 - 0.999 * (eps / M) ** p
    return m, float(min(max(c, 0.5), 1.0))


def ql_localise(b: LpOperator, L: float, eps: float, w: np.ndarray | None = None,
                strategy: str = "auto", M: float | None = None) -> LocalisationResult:
    """Localise a near-maximising vector onto one sparsification component.

    When sparsification succeeds and the band certificate places b in
    Commut(L, eps), the result satisfies ||bv|| >= lower(||b||) - 6 eps; a
    violation raises AssertionError.
    """
    if math.isinf(b.p):
        raise ValueError("ql_localise needs p < inf (the measure uses ||w(x)||^p)")
    if L <= 0 or eps <= 0:
        raise ValueError("L and eps must be positive")
    est = opnorm(b)
    reference = est.lower
    w = est.witness if w is None else np.asarray(w, dtype=complex)
    M = est.upper if M is None else M
    mass = (np.abs(w.reshape(b.n, b.k)) ** b.p).sum(axis=1)
    m, c = ql_parameters(L, eps, M, b.p)
    spars = sparsify(b.space, mass, m, c, strategy)
    best = None
    for i, U in enumerate(spars.components):
        vi = np.zeros(b.dim, dtype=complex)
        cols = lift_points(U, b.k)
        vi[cols] = w[cols]
        nv = vector_norm(vi, b.p)
        if nv == 0:
            continue
        ratio = vector_norm(b.matrix @ vi, b.p) / nv
        if best is None or ratio > best[0]:
            best = (ratio, i, vi)
    certified = commut_bound_band(b, L).upper <= eps
    meta = {"m": m, "c": c, "L": L, "eps": eps, "M": M, "sparsify_success": spars.success,
            "fraction": spars.fraction, "components": len(spars.components),
            "f_bound": spars.diameter_bound, "certified": certified}
    if best is None:
        return LocalisationResult(np.zeros(b.dim, dtype=complex), 0.0, 0.0, reference,
                                  {**meta, "component": None, "conclusion": None})
    result = _localised(b, best[2], reference, {**meta, "component": best[1]})
    holds = result.value >= reference - 6 * eps - 1e-10
    result.meta["conclusion"] = holds
    if spars.success and certified and not holds:
        raise AssertionError(f"localisation conclusion violated: ||bv|| = {result.value} "
                             f"< {reference} - 6*{eps}")
    return result


# -- inverse closedness ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class InverseReport:
    b: LpOperator
    residual: float
    profile: QuasiLocalityProfile
    envelope: list[float]
    curve: list
    rate_measured: float
    rate_predicted: float

    def rows(self) -> list[dict]:
        out = []
        for (R, lo, up, tag), env in zip(self.profile.rows(), self.envelope):
            out.append({"R": R, "nu_lower": lo, "nu_upper": up, "tag": tag, "envelope": env,
                        "below_envelope": up <= env * (1 + 1e-12) + 1e-15})
        return out


def inverse_experiment(a: LpOperator, delta: float, eps_grid, R_grid=range(1, 21),
                       residual_tol: float = 1e-10) -> InverseReport:
    """b = (Id - delta a)^-1 by a dense solve, with its quasi-locality profile and Roe curve."""
    from coarse_op.approx.curve import roe_curve

    a_norm = opnorm(a).upper
    rate = abs(delta) * a_norm
    if rate >= 1:
        raise ContractionError(f"contraction precondition violated: |delta| * ||a|| = {rate} >= 1")
    eye = np.eye(a.dim)
    b = a.with_matrix(np.linalg.solve(eye - delta * a.toarray(), eye))
    r = (eye - delta * a.toarray()) @ b.toarray() - eye
    residual = matrix_norm(r, a.p).upper
    if residual > residual_tol:
        raise AssertionError(f"inverse residual {residual} exceeds {residual_tol}")
    R_grid = sorted(float(R) for R in R_grid)
    profile = ql_profile(b, R_grid)
    prop = propagation(a)
    envelope = [geometric_envelope(rate, R, prop) for R in R_grid]
    curve = roe_curve(b, eps_grid, ["truncate"])
    measured = profile.decay_rate()
    predicted = rate ** (1.0 / prop) if prop > 0 else 0.0
    return InverseReport(b, residual, profile, envelope, curve, measured, predicted)


# -- descriptive sweep --------------------------------------------------------------


def property_a_report(space: MetricSpace, r_grid, S_grid, p=2, seed: int = 0,
                      operators: int = 3, eps: float = 0.05) -> list[dict]:
    """Variation, norm-localisation, sparsification and localisation measurements per cell.

    Norm localisation uses band-r operators and windows of diameter S, one row per (r, S).
    """
    from coarse_op.lp_op.operator import parse_p
    from coarse_op.pou import disjoint_cover, grid_folner_pou, pou_from_cover, variation

    p = parse_p(p)
    rows = []
    r_grid = sorted(float(r) for r in r_grid)
    for S in S_grid:
        if space.is_grid:
            pou = grid_folner_pou(space, int(S), p)
        else:
            pou = pou_from_cover(disjoint_cover(space, float(S)), p, width=max(1.0, float(S)))
        for r in r_grid:
            rows.append({"quantity": "variation", "S": S, "r": r, "value": variation(pou, r),
                         "extra": pou.diameter_bound})
    for r in r_grid:
        ops = [normalized(random_band(space, r, seed=seed + j, p=p)) for j in range(operators)]
        for S in S_grid:
            ratios = [onl_search(b, float(S)).ratio for b in ops]
            rows.append({"quantity": "onl_ratio_min", "S": S, "r": r, "value": min(ratios),
                         "extra": len(ops)})
        m = max(1, int(r))
        rng = np.random.default_rng(seed)
        for name, wts in (("uniform", np.ones(space.n)), ("random", rng.random(space.n))):
            res = sparsify(space, wts, m, 0.5)
            rows.append({"quantity": f"sparsify_{name}", "S": None, "r": r, "value": res.fraction,
                         "extra": res.diameter_bound})
    ops = [normalized(random_band(space, 1, seed=seed + j, p=p)) for j in range(operators)]
    if not math.isinf(p):
        successes = 0
        for b in ops:
            unit = commut_bound_band(b, 1.0).upper
            L = eps / unit * (1 - 1e-9) if unit > 0 else 1.0
            res = ql_localise(b, L, eps)
            successes += bool(res.meta.get("conclusion"))
        rows.append({"quantity": "qlocalise_success", "S": None, "r": None,
                     "value": successes / len(ops), "extra": eps})
    return rows
