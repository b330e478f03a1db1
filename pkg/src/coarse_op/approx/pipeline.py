"""The finite-propagation approximant b' = sum_i phi_i^(p/q) b phi_i with parameters set by the Commut route.

Schedule, for a target eps and M = ||b||:
  * eps_c = eps / max(4M, 24) and L the largest Lipschitz constant whose band
    certificate puts b in Commut(L, eps_c);
  * s = diameter of a sparsification component for separation > 4/L and a
    mass fraction c with 2M (1 - c)^(1/p) < eps / 12 (grid corridor schedule);
  * K = sup_x #B(x, s + 1/L);
  * a Folner box partition with variation <= eps / (4MK) at distance s + 2/L.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

from coarse_op.approx.approximants import approximant_mid
from coarse_op.lp_op.commut import lipschitz_for_commut
from coarse_op.lp_op.norms import opnorm
from coarse_op.lp_op.operator import LpOperator, add, propagation
from coarse_op.pou import grid_folner_pou, variation
from coarse_op.space import MetricError, geometry_profile


@dataclass(frozen=True, eq=False)
class PipelineReport:
    eps: float
    M: float
    eps_commut: float
    L: float
    m: int
    c: float
    box_side: int
    s: float
    K: int
    variation_radius: float
    variation_target: float
    S: int
    variation: float
    defect: float
    approx_norm: float
    propagation: float
    approximant: LpOperator = field(repr=False)
    tried: list = field(default_factory=list, repr=False)

    def as_dict(self) -> dict:
        keys = ["eps", "M", "eps_commut", "L", "m", "c", "box_side", "s", "K",
                "variation_radius", "variation_target", "S", "variation", "defect",
                "approx_norm", "propagation"]
        return {k: getattr(self, k) for k in keys}


def _ladder(side: int) -> list[int]:
    out, S = [], 2
    while S < side:
        out.append(S)
        S *= 2
    return out + [side]


def schedule_approximant(b: LpOperator, eps: float, S_ladder: Sequence[int] | None = None) -> PipelineReport:
    from coarse_op.locality import grid_box_side, ql_parameters

    if not b.space.is_grid:
        raise MetricError("the Folner schedule needs a grid space")
    if not 1 < b.p < math.inf:
        raise ValueError("the schedule uses the p in (1, inf) approximant")
    if eps <= 0:
        raise ValueError("eps must be positive")
    N, side = b.space.grid_shape
    M = opnorm(b).upper
    eps_c = eps / max(4 * M, 24)
    L = lipschitz_for_commut(b, eps_c)
    if math.isinf(L):
        L_eff = 1.0  # b is diagonal: every L works, any partition is exact
    else:
        L_eff = L
    # localisation applied to (eps/12, L, 2M)
    m, c = ql_parameters(L_eff, eps / 12, 2 * M, b.p)
    f = grid_box_side(N, m, c, side)
    s = float(N * (f - 1))
    K = geometry_profile(b.space, [s + 1 / L_eff])[0]
    radius = s + 2 / L_eff
    target = eps / (4 * M * K) if M > 0 else math.inf
    ladder = sorted(set(int(S) for S in (S_ladder or _ladder(side))) | {side})
    tried = []
    chosen = None
    for S in ladder:
        pou = grid_folner_pou(b.space, S, b.p)
        near = variation(pou, 1)
        if near > target:
            tried.append((S, near, "variation(1) already above target"))
            continue
        var = variation(pou, radius)
        tried.append((S, var, "measured"))
        if var <= target:
            chosen = (S, pou, var)
            break
    S, pou, var = chosen  # the single box always qualifies
    approx = approximant_mid(b, pou)
    defect = opnorm(add(b, approx, 1.0, -1.0)).upper
    return PipelineReport(eps, M, eps_c, L, m, c, f, s, K, radius, target, S, var, defect,
                          opnorm(approx).upper, propagation(approx), approx, tried)
