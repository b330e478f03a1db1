"""Block-sparse operators on l^p(X; C^k) and the scalar functions acting on them.

An operator is stored as a scalar CSR matrix on X x {0..k-1}; lifted index
``x*k + i`` is fibre coordinate ``i`` over point ``x``.  The metric on the
lifted set is d((x,i),(y,j)) = d(x,y), so block statements reduce to scalar ones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np
import scipy.sparse as sp

from coarse_op.space import MetricSpace, as_subset


class OperatorMismatch(ValueError):
    """Operands live on different spaces, exponents or fibres."""


def parse_p(p) -> float:
    """Exponent in [1, inf]; the tokens "0", "inf", "infinity" mean inf (c_0 = l^inf on finite X)."""
    if isinstance(p, str):
        token = p.strip().lower()
        if token in {"0", "inf", "infinity", "oo"}:
            return math.inf
        p = float(token)
    p = float(p)
    if p == 0:
        return math.inf
    if not p >= 1:
        raise ValueError(f"exponent p must lie in {{0}} U [1, inf], got {p}")
    return p


def conjugate(p: float) -> float:
    if p == 1:
        return math.inf
    if math.isinf(p):
        return 1.0
    return p / (p - 1)


def format_p(p: float) -> str:
    return "inf" if math.isinf(p) else f"{p:g}"


def lift_points(points, k: int) -> np.ndarray:
    pts = np.asarray(points, dtype=np.int64)
    return (pts[:, None] * k + np.arange(k)[None, :]).ravel()


@dataclass(frozen=True, eq=False)
class ScalarFunction:
    """A bounded real function on X acting by pointwise multiplication."""

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.values != 0)

    def lipschitz_constant(self, space: MetricSpace) -> float:
        if space.n < 2:
            return 0.0
        diff = np.abs(self.values[:, None] - self.values[None, :])
        off = ~np.eye(space.n, dtype=bool)
        return float((diff[off] / space.dist[off]).max())

    def is_contraction(self, positive: bool = False, tol: float = 1e-12) -> bool:
        lo = 0.0 if positive else -1.0
        return bool(np.all(self.values >= lo - tol) and np.all(self.values <= 1 + tol))


@dataclass(frozen=True, eq=False)
class LpOperator:
    space: MetricSpace
    p: float
    k: int
    matrix: sp.csr_matrix

    def __post_init__(self):
        object.__setattr__(self, "p", parse_p(self.p))
        dim = self.space.n * self.k
        m = sp.csr_matrix(self.matrix, dtype=complex)
        if m.shape != (dim, dim):
            raise OperatorMismatch(f"matrix shape {m.shape} does not match n*k = {dim}")
        m.eliminate_zeros()
        m.sum_duplicates()
        m.sort_indices()
        object.__setattr__(self, "matrix", m)

    # -- construction ---------------------------------------------------------

    @classmethod
    def from_dense(cls, space: MetricSpace, p, dense, k: int = 1) -> "LpOperator":
        return cls(space, p, k, sp.csr_matrix(np.asarray(dense, dtype=complex)))

    @classmethod
    def from_blocks(cls, space: MetricSpace, p, k: int, entries) -> "LpOperator":
        """Build from an iterable of ``(x, y, block)`` with ``block`` k x k (or scalar if k == 1)."""
        rows, cols, vals = [], [], []
        for x, y, block in entries:
            blk = np.asarray(block, dtype=complex).reshape(k, k)
            r, c = np.nonzero(blk)
            rows.append(x * k + r)
            cols.append(y * k + c)
            vals.append(blk[r, c])
        dim = space.n * k
        if rows:
            m = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                              shape=(dim, dim))
        else:
            m = sp.coo_matrix((dim, dim), dtype=complex)
        return cls(space, p, k, m.tocsr())

    @classmethod
    def zero(cls, space: MetricSpace, p, k: int = 1) -> "LpOperator":
        dim = space.n * k
        return cls(space, p, k, sp.csr_matrix((dim, dim), dtype=complex))

    @classmethod
    def identity(cls, space: MetricSpace, p, k: int = 1) -> "LpOperator":
        return cls(space, p, k, sp.identity(space.n * k, dtype=complex, format="csr"))

    def with_matrix(self, matrix) -> "LpOperator":
        return LpOperator(self.space, self.p, self.k, matrix)

    # -- structure -----------------------------------------------------------

    @property
    def q(self) -> float:
        return conjugate(self.p)

    @property
    def n(self) -> int:
        return self.space.n

    @property
    def dim(self) -> int:
        return self.space.n * self.k

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def block_pattern(self) -> tuple[np.ndarray, np.ndarray]:
        """Point pairs (x, y) carrying a nonzero block, lexicographically sorted."""
        coo = self.matrix.tocoo()
        if coo.nnz == 0:
            empty = np.zeros(0, dtype=np.int64)
            return empty, empty
        keys = np.unique((coo.row // self.k).astype(np.int64) * self.n + coo.col // self.k)
        return keys // self.n, keys % self.n

    def block_magnitudes(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Block pattern together with the largest entry modulus in each block."""
        coo = self.matrix.tocoo()
        keys = (coo.row // self.k).astype(np.int64) * self.n + coo.col // self.k
        uniq, inv = np.unique(keys, return_inverse=True)
        mags = np.zeros(uniq.size)
        np.maximum.at(mags, inv, np.abs(coo.data))
        return uniq // self.n, uniq % self.n, mags

    def block(self, x: int, y: int) -> np.ndarray:
        rows = lift_points([x], self.k)
        cols = lift_points([y], self.k)
        return self.matrix[rows][:, cols].toarray()

    def blocks(self) -> Iterator[tuple[int, int, np.ndarray]]:
        xs, ys = self.block_pattern()
        for x, y in zip(xs.tolist(), ys.tolist()):
            yield x, y, self.block(x, y)

    def block_count(self) -> int:
        return len(self.block_pattern()[0])

    def reweight(self, weight: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> "LpOperator":
        """Schur product with a point kernel: entry (x,y) is multiplied by ``weight(x, y)``."""
        coo = self.matrix.tocoo()
        px = (coo.row // self.k).astype(np.int64)
        py = (coo.col // self.k).astype(np.int64)
        w = np.asarray(weight(px, py), dtype=float) if coo.nnz else np.zeros(0)
        m = sp.csr_matrix((coo.data * w, (coo.row, coo.col)), shape=coo.shape)
        return self.with_matrix(m)

    def restrict(self, rows=None, cols=None) -> sp.csr_matrix:
        """The block ``chi_rows b chi_cols`` as a rectangular matrix on the lifted subsets."""
        m = self.matrix
        if rows is not None:
            m = m[lift_points(as_subset(rows), self.k)]
        if cols is not None:
            m = m[:, lift_points(as_subset(cols), self.k)]
        return sp.csr_matrix(m)

    def __repr__(self) -> str:
        return f"LpOperator(n={self.n}, p={format_p(self.p)}, k={self.k}, blocks={self.block_count()})"


# -- algebra ------------------------------------------------------------------


def _check_compatible(a: LpOperator, b: LpOperator) -> None:
    if a.space is not b.space and not (a.space.n == b.space.n
                                       and np.array_equal(a.space.dist, b.space.dist)):
        raise OperatorMismatch("operators act on different spaces")
    if a.p != b.p:
        raise OperatorMismatch(f"exponent mismatch: p={a.p} vs p={b.p}")
    if a.k != b.k:
        raise OperatorMismatch(f"fibre mismatch: k={a.k} vs k={b.k}")


def apply(b: LpOperator, v) -> np.ndarray:
    v = np.asarray(v)
    if v.shape[0] != b.dim:
        raise OperatorMismatch(f"vector length {v.shape[0]} does not match n*k = {b.dim}")
    return b.matrix @ v


def compose(a: LpOperator, b: LpOperator) -> LpOperator:
    """The product ``a b`` (apply b first)."""
    _check_compatible(a, b)
    return a.with_matrix(a.matrix @ b.matrix)


def add(a: LpOperator, b: LpOperator, alpha: complex = 1.0, beta: complex = 1.0) -> LpOperator:
    """``alpha a + beta b``."""
    _check_compatible(a, b)
    return a.with_matrix(alpha * a.matrix + beta * b.matrix)


def scale(b: LpOperator, alpha: complex) -> LpOperator:
    return b.with_matrix(alpha * b.matrix)


def propagation(b: LpOperator) -> float:
    """max d(x,y) over nonzero blocks; 0 for the zero operator."""
    xs, ys = b.block_pattern()
    if xs.size == 0:
        return 0.0
    return float(b.space.dist[xs, ys].max())


def band_truncate(b: LpOperator, R: float) -> LpOperator:
    """Keep exactly the blocks with d(x,y) <= R."""
    dist = b.space.dist
    return b.reweight(lambda x, y: (dist[x, y] <= R).astype(float))


def off_band(b: LpOperator, R: float) -> LpOperator:
    """Keep exactly the blocks with d(x,y) > R (the part ``band_truncate`` removes)."""
    dist = b.space.dist
    return b.reweight(lambda x, y: (dist[x, y] > R).astype(float))


def _lift_values(values, k: int) -> np.ndarray:
    return np.repeat(np.asarray(values, dtype=float), k)


def multiply_left(f, b: LpOperator) -> LpOperator:
    """``f b`` for a function f on X."""
    vals = f.values if isinstance(f, ScalarFunction) else f
    return b.with_matrix(sp.diags(_lift_values(vals, b.k)) @ b.matrix)


def multiply_right(b: LpOperator, f) -> LpOperator:
    """``b f`` for a function f on X."""
    vals = f.values if isinstance(f, ScalarFunction) else f
    return b.with_matrix(b.matrix @ sp.diags(_lift_values(vals, b.k)))
