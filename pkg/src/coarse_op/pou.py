"""Covers, metric p-partitions of unity, dual families and disjoint colourings of families."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from coarse_op.space import MetricSpace, MetricError, as_subset, diameter, distance_to_set, greedy_net

SUM_TOL = 1e-10


def partition_exponent(p: float) -> float:
    """Exponent e with sum phi^e = 1: p for p in (1, inf), else 1."""
    return 1.0 if p == 1 or math.isinf(p) else float(p)


@dataclass(frozen=True, eq=False)
class Cover:
    space: MetricSpace
    sets: list[np.ndarray]

    @property
    def diameter_bound(self) -> float:
        return max((diameter(self.space, U) for U in self.sets), default=0.0)

    @property
    def multiplicity(self) -> int:
        count = np.zeros(self.space.n, dtype=np.int64)
        for U in self.sets:
            count[U] += 1
        return int(count.max())

    def check(self) -> None:
        covered = np.zeros(self.space.n, dtype=bool)
        for U in self.sets:
            covered[U] = True
        if not covered.all():
            raise ValueError(f"point {int(np.flatnonzero(~covered)[0])} is not covered")


@dataclass(frozen=True, eq=False)
class PartitionOfUnity:
    """Functions phi_i : X -> [0, 1], stored as the columns of a sparse n x I matrix."""

    space: MetricSpace
    p: float
    values: sp.csc_matrix
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "values", sp.csc_matrix(self.values, dtype=float))

    @property
    def size(self) -> int:
        return self.values.shape[1]

    @property
    def exponent(self) -> float:
        return partition_exponent(self.p)

    def phi(self, i: int) -> np.ndarray:
        return self.values[:, i].toarray().ravel()

    def support(self, i: int) -> np.ndarray:
        col = self.values[:, i]
        return np.sort(col.indices[col.data != 0])

    def supports(self) -> list[np.ndarray]:
        return [self.support(i) for i in range(self.size)]

    @property
    def diameter_bound(self) -> float:
        return max((diameter(self.space, S) for S in self.supports()), default=0.0)

    @property
    def multiplicity(self) -> int:
        nz = (self.values != 0).astype(np.int64)
        return int(np.asarray(nz.sum(axis=1)).max()) if self.size else 0

    def sum_defect(self) -> float:
        """max_x |sum_i phi_i(x)^e - 1|."""
        s = np.asarray(self.values.power(self.exponent).sum(axis=1)).ravel()
        return float(np.abs(s - 1).max())

    def check(self, tol: float = SUM_TOL) -> None:
        if self.values.nnz and (self.values.data.min() < 0 or self.values.data.max() > 1 + tol):
            raise ValueError("partition functions must take values in [0, 1]")
        defect = self.sum_defect()
        if defect > tol:
            raise ValueError(f"partition sums deviate from 1 by {defect:.3e}")

    def pair_weights(self, xs, ys, a: float, b: float) -> np.ndarray:
        """sum_i phi_i(x)^a phi_i(y)^b for each pair (x, y)."""
        rows = self.values.tocsr()
        return kernel_weights(rows.power(a), rows.power(b), xs, ys)


def kernel_weights(A, B, xs, ys, chunk: int = 4096) -> np.ndarray:
    """sum_i A[x, i] B[y, i] for each pair (x, y); A and B are n x I sparse matrices."""
    xs, ys = np.asarray(xs, dtype=np.int64), np.asarray(ys, dtype=np.int64)
    A, B = sp.csr_matrix(A), sp.csr_matrix(B)
    out = np.empty(xs.size)
    for s in range(0, xs.size, chunk):
        sl = slice(s, s + chunk)
        out[sl] = np.asarray(A[xs[sl]].multiply(B[ys[sl]]).sum(axis=1)).ravel()
    return out


@dataclass(frozen=True, eq=False)
class DualFamily:
    pou: PartitionOfUnity
    values: sp.csc_matrix
    L: float

    @property
    def halo(self) -> float:
        return 1.0 / self.L

    def psi(self, i: int) -> np.ndarray:
        return self.values[:, i].toarray().ravel()

    def check(self, tol: float = 1e-12) -> None:
        """psi_i = 1 on supp(phi_i), supp(psi_i) within the halo, psi_i L-Lipschitz."""
        space = self.pou.space
        for i in range(self.pou.size):
            S = self.pou.support(i)
            psi = self.psi(i)
            if np.any(np.abs(psi[S] - 1) > tol):
                raise ValueError(f"psi_{i} is not identically 1 on supp(phi_{i})")
            supp = np.flatnonzero(psi != 0)
            if supp.size and distance_to_set(space, S)[supp].max() > self.halo + tol:
                raise ValueError(f"supp(psi_{i}) leaves the {self.halo}-neighbourhood")
            if supp.size:
                gap = np.abs(psi[supp][:, None] - psi[None, :])
                if np.any(gap > self.L * space.dist[supp] + tol):
                    raise ValueError(f"psi_{i} is not {self.L}-Lipschitz")


@dataclass(frozen=True)
class Coloring:
    n_colors: int
    colors: np.ndarray

    def classes(self) -> list[np.ndarray]:
        return [np.flatnonzero(self.colors == c) for c in range(self.n_colors)]


# -- constructions ------------------------------------------------------------


def disjoint_cover(space: MetricSpace, r: float) -> Cover:
    """Voronoi cells of the greedy r-net; ties go to the lowest net index."""
    net = greedy_net(space, r)
    owner = np.argmin(space.dist[:, net], axis=1)
    return Cover(space, [np.flatnonzero(owner == j) for j in range(len(net))])


def ball_cover(space: MetricSpace, r: float) -> Cover:
    """Closed r-balls around the greedy r-net (overlapping, covers X by density)."""
    net = greedy_net(space, r)
    return Cover(space, [np.flatnonzero(space.dist[z] <= r) for z in net])


def _normalise(raw: sp.csc_matrix, e: float) -> sp.csc_matrix:
    totals = np.asarray(raw.power(e).sum(axis=1)).ravel() ** (1.0 / e)
    if np.any(totals == 0):
        raise AssertionError(f"point {int(np.flatnonzero(totals == 0)[0])} is not covered")
    return sp.csc_matrix(sp.diags(1.0 / totals) @ raw)


def pou_from_cover(cover: Cover, p, width: float = 1.0) -> PartitionOfUnity:
    """Normalised distance bumps g_i(x) = max(0, 1 - d(x, U_i) / width)."""
    from coarse_op.lp_op.operator import parse_p

    p = parse_p(p)
    space = cover.space
    cols = []
    for U in cover.sets:
        g = np.maximum(0.0, 1.0 - distance_to_set(space, U) / width)
        cols.append(sp.csc_matrix(g[:, None]))
    raw = sp.hstack(cols, format="csc") if cols else sp.csc_matrix((space.n, 0))
    vals = _normalise(raw, partition_exponent(p))
    return PartitionOfUnity(space, p, vals, {"method": "bump", "width": width})


def indicator_pou(space: MetricSpace, sets, p) -> PartitionOfUnity:
    """Characteristic functions of a disjoint cover."""
    from coarse_op.lp_op.operator import parse_p

    rows = np.concatenate([np.asarray(U, dtype=np.int64) for U in sets])
    cols = np.concatenate([np.full(len(U), i) for i, U in enumerate(sets)])
    vals = sp.csc_matrix((np.ones(rows.size), (rows, cols)), shape=(space.n, len(sets)))
    return PartitionOfUnity(space, parse_p(p), vals, {"method": "disjoint"})


def grid_folner_pou(space: MetricSpace, S: int, p) -> PartitionOfUnity:
    """Translate-averaged box partition of a grid.

    Index set: every translate z + [0, S)^N meeting the grid, clipped.  Each
    point lies in exactly S^N translates, so phi_z = S^(-N/e) 1_{F_z} sums to one
    in the e-th power everywhere; the final renormalisation is a safeguard.
    """
    from coarse_op.lp_op.operator import parse_p

    if not space.is_grid:
        raise MetricError("grid_folner_pou needs a grid space")
    p = parse_p(p)
    S = int(S)
    if S < 1:
        raise ValueError("box side S must be >= 1")
    N, side = space.grid_shape
    e = partition_exponent(p)
    if S >= side:
        vals = sp.csc_matrix(np.ones((space.n, 1)))
        return PartitionOfUnity(space, p, vals, {"method": "folner", "S": S, "boxes": 1})
    coords = space.coords
    span = side + S - 1  # translates per axis: z_a in [-(S-1), side-1]
    offsets = np.array(list(itertools.product(range(S), repeat=N)), dtype=np.int64)
    # point x lies in box z iff z = x - o for an offset o in [0, S)^N
    z = coords[:, None, :] - offsets[None, :, :] + (S - 1)
    box_index = np.zeros(z.shape[:2], dtype=np.int64)
    for a in range(N):
        box_index = box_index * span + z[:, :, a]
    rows = np.repeat(np.arange(space.n), len(offsets))
    used, cols = np.unique(box_index.ravel(), return_inverse=True)
    raw = sp.csc_matrix((np.full(rows.size, float(S) ** (-N / e)), (rows, cols)),
                        shape=(space.n, used.size))
    vals = _normalise(raw, e)
    return PartitionOfUnity(space, p, vals, {"method": "folner", "S": S, "boxes": int(used.size)})


def _pairs_within(space: MetricSpace, r: float, points=None):
    """All pairs x < y with d(x, y) <= r (x restricted to ``points`` if given)."""
    xs_all = np.arange(space.n) if points is None else as_subset(points, space.n)
    for x in xs_all:
        ys = np.flatnonzero(space.dist[x] <= r)
        ys = ys[ys != x] if points is not None else ys[ys > x]
        if ys.size:
            yield int(x), ys


def variation(pou: PartitionOfUnity, r: float, points=None, chunk: int = 8192) -> float:
    """max over d(x,y) <= r of (sum_i |phi_i(x) - phi_i(y)|^e)^(1/e).

    ``points`` restricts the first point of each pair (bulk / boundary reports).
    """
    if r < 1 or pou.size == 0:
        return 0.0
    e = pou.exponent
    rows = pou.values.tocsr()
    dense = pou.space.n * pou.size <= 4_000_000
    table = rows.toarray() if dense else rows
    best = 0.0
    buf_x, buf_y = [], []

    def flush():
        nonlocal best
        if not buf_x:
            return
        xs = np.concatenate(buf_x)
        ys = np.concatenate(buf_y)
        if dense:
            diff = np.abs(table[xs] - table[ys]) ** e
            val = diff.sum(axis=1).max()
        else:
            diff = abs(table[xs] - table[ys]).power(e)
            val = np.asarray(diff.sum(axis=1)).max()
        best = max(best, float(val) ** (1.0 / e))
        buf_x.clear()
        buf_y.clear()

    pending = 0
    for x, ys in _pairs_within(pou.space, r, points):
        buf_x.append(np.full(ys.size, x))
        buf_y.append(ys)
        pending += ys.size
        if pending >= chunk:
            flush()
            pending = 0
    flush()
    return best


def grid_bulk(space: MetricSpace, margin: int) -> np.ndarray:
    """Grid points at coordinate distance >= margin from every face."""
    N, side = space.grid_shape
    c = space.coords
    ok = np.all((c >= margin) & (c <= side - 1 - margin), axis=1)
    return np.flatnonzero(ok)


def dual_family(pou: PartitionOfUnity, L: float) -> DualFamily:
    """psi_i = clamp_[0,1](1 - L d(x, supp phi_i)): L-Lipschitz with halo 1/L."""
    if L <= 0:
        raise ValueError("L must be positive")
    cols = []
    for i in range(pou.size):
        psi = np.clip(1.0 - L * distance_to_set(pou.space, pou.support(i)), 0.0, 1.0)
        cols.append(sp.csc_matrix(psi[:, None]))
    vals = sp.hstack(cols, format="csc") if cols else sp.csc_matrix((pou.space.n, 0))
    return DualFamily(pou, vals, float(L))


def color_family(sets) -> Coloring:
    """Greedy colouring of the intersection graph in descending-degree order.

    Uses at most (max degree + 1) colours; members sharing a colour are disjoint.
    """
    sets = [np.asarray(U, dtype=np.int64) for U in sets]
    m = len(sets)
    if m == 0:
        return Coloring(0, np.zeros(0, dtype=np.int64))
    n = max((int(U.max()) + 1 for U in sets if U.size), default=1)
    rows = np.concatenate([U for U in sets])
    cols = np.concatenate([np.full(U.size, i) for i, U in enumerate(sets)])
    inc = sp.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(n, m))
    adj = (inc.T @ inc).tolil()
    adj.setdiag(0)
    adj = adj.tocsr()
    adj.eliminate_zeros()
    degree = np.diff(adj.indptr)
    order = sorted(range(m), key=lambda i: (-degree[i], i))
    colors = np.full(m, -1, dtype=np.int64)
    for i in order:
        taken = set(colors[adj.indices[adj.indptr[i]:adj.indptr[i + 1]]].tolist())
        c = 0
        while c in taken:
            c += 1
        colors[i] = c
    return Coloring(int(colors.max()) + 1, colors)
