"""Approximation curves: for each eps, the smallest propagation R reaching defect <= eps."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from coarse_op.approx.approximants import approximant_end, approximant_mid
from coarse_op.lp_op.norms import opnorm
from coarse_op.lp_op.operator import LpOperator, add, off_band, propagation
from coarse_op.pou import (
    disjoint_cover,
    dual_family,
    grid_folner_pou,
    pou_from_cover,
)

METHODS = ("truncate", "pou_end", "pou_mid")
DEFAULT_L_LADDER = (1.0, 0.5, 0.25, 0.1, 0.05)


@dataclass(frozen=True)
class CurveRow:
    eps: float
    R: float
    defect: float
    method: str

    @property
    def reached(self) -> bool:
        return math.isfinite(self.R)


@dataclass(frozen=True)
class Candidate:
    R: float
    defect: float
    params: dict


@dataclass(frozen=True, eq=False)
class ApproximationCurve:
    rows: list[CurveRow]
    candidates: dict[str, list[Candidate]]

    def method(self, name: str) -> list[CurveRow]:
        return [r for r in self.rows if r.method == name]

    def R_at(self, eps: float, method: str = "truncate") -> float:
        for r in self.method(method):
            if r.eps == eps:
                return r.R
        raise KeyError(eps)

    def __iter__(self):
        return iter(self.rows)

    def __len__(self) -> int:
        return len(self.rows)


def _defect(b: LpOperator, approx: LpOperator) -> float:
    return opnorm(add(b, approx, 1.0, -1.0)).upper


def truncation_candidates(b: LpOperator) -> list[Candidate]:
    """band_truncate(b, R) at every distinct block distance, plus the zero operator at R = 0."""
    xs, ys = b.block_pattern()
    radii = np.unique(b.space.dist[xs, ys]) if xs.size else np.zeros(0)
    out = [Candidate(0.0, opnorm(b).upper, {"zero": True})]
    for R in sorted({0.0, *radii.tolist()}):
        out.append(Candidate(float(R), opnorm(off_band(b, R)).upper, {"R": float(R)}))
    return out


def pou_end_candidates(b: LpOperator, radii: Sequence[float],
                       L_ladder: Sequence[float] = DEFAULT_L_LADDER) -> list[Candidate]:
    out = []
    for r in radii:
        pou = pou_from_cover(disjoint_cover(b.space, r), b.p)
        for L in L_ladder:
            approx = approximant_end(b, pou, dual_family(pou, L))
            out.append(Candidate(propagation(approx), _defect(b, approx), {"r": r, "L": L}))
    return out


def pou_mid_candidates(b: LpOperator, ladder: Sequence[float]) -> list[Candidate]:
    """Folner boxes of side S on grids, distance bumps of width S on Voronoi cells elsewhere."""
    out = []
    for S in ladder:
        if b.space.is_grid:
            pou = grid_folner_pou(b.space, int(S), b.p)
        else:
            pou = pou_from_cover(disjoint_cover(b.space, S), b.p, width=max(1.0, S))
        approx = approximant_mid(b, pou)
        out.append(Candidate(propagation(approx), _defect(b, approx), {"S": S}))
    return out


def _default_ladder(b: LpOperator) -> list[float]:
    diam = b.space.diameter()
    ladder, r = [], 1.0
    while r < diam:
        ladder.append(r)
        r *= 2
    return ladder + [max(diam, 1.0)]


def roe_curve(b: LpOperator, eps_grid: Iterable[float], methods: Sequence[str] = ("truncate",),
              ladder: Sequence[float] | None = None) -> ApproximationCurve:
    """One row per (eps, method); R = inf when no candidate in the ladder reaches eps."""
    eps_grid = [float(e) for e in eps_grid]
    if any(a < b_ for a, b_ in zip(eps_grid, eps_grid[1:])):
        raise ValueError("eps_grid must be sorted in descending order")
    ladder = list(ladder) if ladder is not None else _default_ladder(b)
    candidates: dict[str, list[Candidate]] = {}
    for method in methods:
        if method == "truncate":
            candidates[method] = truncation_candidates(b)
        elif method == "pou_end":
            candidates[method] = pou_end_candidates(b, ladder)
        elif method == "pou_mid":
            candidates[method] = pou_mid_candidates(b, ladder)
        else:
            raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    rows = []
    for eps in eps_grid:
        for method in methods:
            ok = [c for c in candidates[method] if c.defect <= eps]
            if ok:
                best = min(ok, key=lambda c: (c.R, c.defect))
                rows.append(CurveRow(eps, best.R, best.defect, method))
            else:
                closest = min(candidates[method], key=lambda c: c.defect)
                rows.append(CurveRow(eps, math.inf, closest.defect, method))
    return ApproximationCurve(rows, candidates)
