"""Block cutdowns and partition-of-unity approximants with their defect certificates.

Every approximant here is a Schur product of b with a point kernel W(x, y),
so it is assembled on the support of b only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from coarse_op.lp_op.commut import commut_bound_band, commutator
from coarse_op.lp_op.norms import NormEstimate, opnorm
from coarse_op.lp_op.operator import LpOperator, add, conjugate
from coarse_op.pou import DualFamily, PartitionOfUnity, kernel_weights
from coarse_op.space import set_distance

NORM_TOL = 1e-8


def _family_matrix(n: int, family) -> sp.csr_matrix:
    cols = [np.asarray(e, dtype=float).reshape(n, 1) for e in family]
    if not cols:
        return sp.csr_matrix((n, 0))
    return sp.csr_matrix(np.hstack(cols))


def _check_contractions(E: sp.csr_matrix) -> None:
    if E.nnz and (E.data.min() < 0 or E.data.max() > 1):
        raise ValueError("family members must take values in [0, 1]")


def _supports(E: sp.csr_matrix) -> list[np.ndarray]:
    Ec = E.tocsc()
    return [np.sort(Ec[:, j].indices[Ec[:, j].data != 0]) for j in range(Ec.shape[1])]


def _kernel_product(b: LpOperator, A, B) -> LpOperator:
    """b reweighted by W(x, y) = sum_i A[x, i] B[y, i]."""
    return b.reweight(lambda x, y: kernel_weights(A, B, x, y))


def _norm(b: LpOperator, tol: float = 1e-10) -> NormEstimate:
    return opnorm(b, tol=tol)


def block_cutdown(b: LpOperator, family) -> LpOperator:
    """sum_j e_j b e_j for disjointly supported positive contractions e_j."""
    E = _family_matrix(b.n, family)
    _check_contractions(E)
    counts = np.diff(E.indptr)
    if np.any(counts > 1):
        x = int(np.flatnonzero(counts > 1)[0])
        i, j = E[x].indices[:2]
        raise ValueError(f"family members {min(i, j)} and {max(i, j)} overlap at point {x}")
    return _kernel_product(b, E, E)


def _check_end(pou: PartitionOfUnity, dual: DualFamily, p: float) -> None:
    if not (p == 1 or math.isinf(p)):
        raise ValueError(f"approximant_end covers p in {{1, inf}}; use approximant_mid for p={p}")
    if dual.pou.size != pou.size:
        raise ValueError("dual family is not aligned with the partition")


def approximant_end(b: LpOperator, pou: PartitionOfUnity, dual: DualFamily) -> LpOperator:
    """sum_i phi_i b psi_i for p = inf, sum_i psi_i b phi_i for p = 1."""
    _check_end(pou, dual, b.p)
    Phi, Psi = pou.values.tocsr(), dual.values.tocsr()
    if math.isinf(b.p):
        return _kernel_product(b, Phi, Psi)
    return _kernel_product(b, Psi, Phi)


@dataclass(frozen=True)
class EndCertificate:
    defect: float
    bound: float
    holds: bool


def defect_certificate_end(b: LpOperator, pou: PartitionOfUnity, dual: DualFamily,
                           tol: float = NORM_TOL) -> EndCertificate:
    """Measured ||b - b_eps|| against max_i ||[psi_i, b]||; both exact for p in {1, inf}."""
    _check_end(pou, dual, b.p)
    defect = _norm(add(b, approximant_end(b, pou, dual), 1.0, -1.0)).upper
    bound = 0.0
    for i in range(pou.size):
        bound = max(bound, _norm(commutator(b, dual.psi(i))).upper)
    holds = defect <= bound + tol
    if not holds:
        raise AssertionError(f"end-point defect {defect} exceeds certificate {bound}")
    return EndCertificate(defect, bound, holds)


def approximant_mid(b: LpOperator, pou: PartitionOfUnity) -> LpOperator:
    """sum_i phi_i^(p/q) b phi_i = sum_i phi_i^(p-1) b phi_i."""
    if pou.exponent != b.p:
        raise ValueError(f"partition exponent {pou.exponent} does not match operator p={b.p}")
    if not 1 < b.p < math.inf:
        raise ValueError("approximant_mid needs p in (1, inf)")
    Phi = pou.values.tocsr()
    return _kernel_product(b, Phi.power(b.p / conjugate(b.p)), Phi)


@dataclass(frozen=True)
class HaloCheck:
    lhs: float
    rhs: float
    holds: bool


def halo_estimate_check(b: LpOperator, family, L: float) -> HaloCheck:
    """||e b e - sum_i e_i b e_i|| against the band Commut(L) certificate of b.

    For p outside {1, 2, inf} only a lower estimate of the left side is
    available, and the comparison is made with it.
    """
    E = _family_matrix(b.n, family)
    _check_contractions(E)
    supports = _supports(E)
    for i in range(len(supports)):
        for j in range(i + 1, len(supports)):
            if supports[i].size and supports[j].size:
                d = set_distance(b.space, supports[i], supports[j])
                if d <= 2.0 / L:
                    raise ValueError(f"members {i} and {j} are at distance {d} <= 2/L = {2.0 / L}")
    e = np.asarray(E.sum(axis=1)).ravel()
    off = b.reweight(lambda x, y: e[x] * e[y] - kernel_weights(E, E, x, y))
    est = _norm(off)
    exact = b.p in (1.0, 2.0, math.inf)
    lhs = est.upper if exact else est.lower
    if off.matrix.nnz == 0:
        lhs = 0.0
    # every operator on a finite space is band, so the certificate always exists
    rhs = commut_bound_band(b, L).upper
    holds = lhs <= rhs + NORM_TOL
    if not holds:
        raise AssertionError(f"halo estimate violated: {lhs} > {rhs}")
    return HaloCheck(lhs, rhs, holds)


def cutdown_norms(b: LpOperator, family) -> tuple[float, float]:
    """(||sum_j e_j b e_j||, max_j ||e_j b e_j||) as upper estimates."""
    whole = _norm(block_cutdown(b, family)).upper
    parts = 0.0
    for e in family:
        e = np.asarray(e, dtype=float)
        parts = max(parts, _norm(b.reweight(lambda x, y: e[x] * e[y])).upper)
    return whole, parts
