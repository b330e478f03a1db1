"""Band decomposition b = sum_k f_k V_k into multiplication operators and partial translations.

The support of b is read as a bipartite multigraph (rows vs columns, one edge
per nonzero block).  A proper edge colouring with Delta colours (Koenig) splits
it into matchings; each matching is a partial injection, i.e. a partial
translation, and the block values along it form the multiplier.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from coarse_op.lp_op.norms import matrix_norm
from coarse_op.lp_op.operator import LpOperator
from coarse_op.space import MetricSpace


@dataclass(frozen=True, eq=False)
class PartialTranslation:
    """Pairs (d, t(d)); V sends the value at d to t(d)."""

    pairs: np.ndarray  # shape (m, 2): source, target

    def __post_init__(self):
        pairs = np.asarray(self.pairs, dtype=np.int64).reshape(-1, 2)
        object.__setattr__(self, "pairs", pairs)
        if len(np.unique(pairs[:, 0])) != len(pairs):
            raise ValueError("partial translation domain entries are not distinct")
        if len(np.unique(pairs[:, 1])) != len(pairs):
            raise ValueError("partial translation range entries are not distinct")

    @property
    def domain(self) -> np.ndarray:
        return self.pairs[:, 0]

    @property
    def range(self) -> np.ndarray:
        return self.pairs[:, 1]

    def displacement(self, space: MetricSpace) -> float:
        if len(self.pairs) == 0:
            return 0.0
        return float(space.dist[self.pairs[:, 0], self.pairs[:, 1]].max())

    def inverse_map(self) -> dict[int, int]:
        return {int(t): int(d) for d, t in self.pairs}


@dataclass(frozen=True, eq=False)
class BandPart:
    translation: PartialTranslation
    multiplier: np.ndarray  # (m, k, k): block at target point t(d), aligned with pairs

    def multiplier_norm(self, p: float) -> float:
        """sup_x ||f_k(x)|| as a p->p norm on C^k (certified upper)."""
        if len(self.multiplier) == 0:
            return 0.0
        if self.multiplier.shape[1] == 1:
            return float(np.abs(self.multiplier[:, 0, 0]).max())
        return max(matrix_norm(blk, p).upper for blk in self.multiplier)


@dataclass(frozen=True, eq=False)
class BandDecomposition:
    parts: list[BandPart]
    space: MetricSpace
    p: float
    k: int

    @property
    def count(self) -> int:
        return len(self.parts)

    def rebuild(self) -> LpOperator:
        """sum_k f_k V_k as an operator."""
        k, n = self.k, self.space.n
        rows, cols, vals = [], [], []
        for part in self.parts:
            src, tgt = part.translation.pairs.T
            r = np.arange(k)
            rows.append((tgt[:, None, None] * k + r[None, :, None]).repeat(k, axis=2).ravel())
            cols.append((src[:, None, None] * k + r[None, None, :]).repeat(k, axis=1).ravel())
            vals.append(part.multiplier.ravel())
        dim = n * k
        if not rows:
            return LpOperator.zero(self.space, self.p, k)
        m = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(dim, dim))
        return LpOperator(self.space, self.p, k, m.tocsr())

    def to_json(self) -> list[dict]:
        out = []
        for part in self.parts:
            out.append({
                "pairs": part.translation.pairs.tolist(),
                "multiplier": [[[[z.real, z.imag] for z in row] for row in blk]
                               for blk in part.multiplier],
            })
        return out


def bipartite_edge_coloring(edges: np.ndarray, n_left: int, n_right: int) -> np.ndarray:
    """Proper edge colouring of a bipartite multigraph with max-degree many colours.

    Each edge (u, v) gets a colour free at u; if that colour is taken at v, the
    alternating path from v in colours (a, b) is flipped first, which frees it
    at v without touching u.
    """
    m = len(edges)
    colors = np.full(m, -1, dtype=np.int64)
    if m == 0:
        return colors
    deg = max(np.bincount(edges[:, 0], minlength=n_left).max(),
              np.bincount(edges[:, 1], minlength=n_right).max())
    # at[side][node][color] -> edge index
    at = ([dict() for _ in range(n_left)], [dict() for _ in range(n_right)])

    def free(side: int, node: int) -> int:
        used = at[side][node]
        for c in range(deg):
            if c not in used:
                return c
        raise RuntimeError("no free colour; degree bookkeeping is inconsistent")

    for e in range(m):
        u, v = int(edges[e, 0]), int(edges[e, 1])
        a = free(0, u)
        if a in at[1][v]:
            b = free(1, v)
            path = []
            side, node, c = 1, v, a
            while c in at[side][node]:
                f = at[side][node][c]
                path.append(f)
                side = 1 - side
                node = int(edges[f, side])
                c = b if c == a else a
            for f in path:
                del at[0][int(edges[f, 0])][int(colors[f])]
                del at[1][int(edges[f, 1])][int(colors[f])]
            for f in path:
                colors[f] = b if colors[f] == a else a
                at[0][int(edges[f, 0])][int(colors[f])] = f
                at[1][int(edges[f, 1])][int(colors[f])] = f
        colors[e] = a
        at[0][u][a] = e
        at[1][v][a] = e
    return colors


def band_decompose(b: LpOperator) -> BandDecomposition:
    """Split b into K = max row/column block degree partial translations with multipliers."""
    xs, ys = b.block_pattern()
    k = b.k
    edges = np.column_stack([xs, ys]).astype(np.int64)  # row point, column point
    colors = bipartite_edge_coloring(edges, b.n, b.n)
    dense_blocks = {}
    if xs.size:
        coo = b.matrix.tocoo()
        key = (coo.row // k).astype(np.int64) * b.n + coo.col // k
        order = {int(kk): i for i, kk in enumerate(xs * b.n + ys)}
        blocks = np.zeros((xs.size, k, k), dtype=complex)
        idx = np.array([order[int(kk)] for kk in key], dtype=np.int64)
        blocks[idx, coo.row % k, coo.col % k] = coo.data
        dense_blocks = blocks
    parts = []
    ncolors = int(colors.max()) + 1 if colors.size else 0
    for c in range(ncolors):
        sel = np.flatnonzero(colors == c)
        pairs = np.column_stack([ys[sel], xs[sel]])  # source column -> target row
        parts.append(BandPart(PartialTranslation(pairs), dense_blocks[sel]))
    return BandDecomposition(parts, b.space, b.p, k)
