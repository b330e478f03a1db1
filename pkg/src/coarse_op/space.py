"""Finite uniformly discrete metric spaces and their coarse-geometric helpers."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import shortest_path


class MetricError(ValueError):
    """Raised when a distance matrix or generator spec does not define a valid space."""


@dataclass(frozen=True, eq=False)
class MetricSpace:
    dist: np.ndarray
    provenance: dict = field(default_factory=dict)
    coords: np.ndarray | None = None  # integer coordinates, grids only

    @property
    def n(self) -> int:
        return self.dist.shape[0]

    @property
    def is_grid(self) -> bool:
        return self.provenance.get("type") == "grid"

    @property
    def grid_shape(self) -> tuple[int, int]:
        """(dimension, side) for grid spaces."""
        if not self.is_grid:
            raise MetricError("not a grid space")
        params = self.provenance["params"]
        return int(params["N"]), int(params["side"])

    def diameter(self) -> float:
        return float(self.dist.max()) if self.n else 0.0

    def __repr__(self) -> str:
        return f"MetricSpace(n={self.n}, provenance={self.provenance})"


def as_subset(points: Sequence[int] | np.ndarray, n: int | None = None) -> np.ndarray:
    """Sorted, duplicate-free integer index array."""
    arr = np.unique(np.asarray(points, dtype=np.int64))
    if n is not None and arr.size and (arr[0] < 0 or arr[-1] >= n):
        raise IndexError(f"subset indices must lie in [0, {n})")
    return arr


# -- validation ---------------------------------------------------------------


def check_metric(dist: np.ndarray, exhaustive_limit: int = 200, samples: int = 10**6,
                 seed: int = 0) -> None:
    """Raise MetricError naming the first violated axiom.

    Triangle inequality is checked over all triples up to ``exhaustive_limit``
    points and on ``samples`` random triples above that.
    """
    d = np.asarray(dist, dtype=float)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise MetricError(f"distance matrix must be square, got shape {d.shape}")
    n = d.shape[0]
    if n == 0:
        raise MetricError("empty space")
    if not np.all(np.isfinite(d)):
        i, j = np.argwhere(~np.isfinite(d))[0]
        raise MetricError(f"infinite distance between {i} and {j}: space is disconnected")
    if np.any(np.diag(d) != 0):
        i = int(np.flatnonzero(np.diag(d) != 0)[0])
        raise MetricError(f"dist({i},{i}) = {d[i, i]} is not zero")
    asym = np.argwhere(d != d.T)
    if asym.size:
        i, j = asym[0]
        raise MetricError(f"asymmetric: dist({i},{j}) = {d[i, j]} != dist({j},{i}) = {d[j, i]}")
    off = ~np.eye(n, dtype=bool)
    if np.any(d[off] < 1):
        i, j = np.argwhere(off & (d < 1))[0]
        raise MetricError(f"dist({i},{j}) = {d[i, j]} < 1 violates uniform discreteness")
    if n <= exhaustive_limit:
        for z in range(n):
            bad = d > d[:, z][:, None] + d[z, :][None, :]
            if bad.any():
                x, y = np.argwhere(bad)[0]
                raise MetricError(
                    f"triangle inequality fails for triple ({x},{y},{z}): "
                    f"{d[x, y]} > {d[x, z]} + {d[z, y]}")
    else:
        rng = np.random.default_rng(seed)
        x, y, z = rng.integers(0, n, size=(3, samples))
        bad = d[x, y] > d[x, z] + d[z, y]
        if bad.any():
            k = int(np.flatnonzero(bad)[0])
            raise MetricError(f"triangle inequality fails for triple ({x[k]},{y[k]},{z[k]})")


# -- generators ---------------------------------------------------------------


def _graph_metric(n: int, edges: Sequence[Sequence[float]]) -> np.ndarray:
    if not edges:
        if n == 1:
            return np.zeros((1, 1))
        raise MetricError("graph has no edges: space is disconnected")
    e = np.array([(*edge, 1.0) if len(edge) == 2 else tuple(edge) for edge in edges], dtype=float)
    rows, cols, w = e[:, 0].astype(int), e[:, 1].astype(int), e[:, 2]
    if np.any(w < 1):
        raise MetricError("edge weights must be >= 1")
    if rows.min() < 0 or max(rows.max(), cols.max()) >= n:
        raise MetricError("edge endpoint out of range")
    adj = coo_matrix((w, (rows, cols)), shape=(n, n)).tocsr()
    d = shortest_path(adj, method="D", directed=False)
    if not np.all(np.isfinite(d)):
        i, j = np.argwhere(~np.isfinite(d))[0]
        raise MetricError(f"graph is disconnected: no path between {i} and {j}")
    return d


def path_space(n: int) -> MetricSpace:
    idx = np.arange(n, dtype=float)
    return MetricSpace(np.abs(idx[:, None] - idx[None, :]),
                       {"type": "path", "params": {"n": n}})


def cycle_space(n: int) -> MetricSpace:
    idx = np.arange(n)
    diff = np.abs(idx[:, None] - idx[None, :])
    return MetricSpace(np.minimum(diff, n - diff).astype(float),
                       {"type": "cycle", "params": {"n": n}})


def grid_space(N: int, side: int) -> MetricSpace:
    """``side**N`` lattice points of Z^N with the l1 (word) metric, lexicographic order."""
    coords = np.array(list(itertools.product(range(side), repeat=N)), dtype=np.int64)
    d = np.zeros((len(coords), len(coords)))
    for a in range(N):
        c = coords[:, a].astype(float)
        d += np.abs(c[:, None] - c[None, :])
    return MetricSpace(d, {"type": "grid", "params": {"N": N, "side": side}}, coords=coords)


def random_geometric_space(n: int, radius: float, dim: int = 2, seed: int = 0) -> MetricSpace:
    """Hop-count metric of the random geometric graph on ``n`` uniform points of [0,1]^dim."""
    rng = np.random.default_rng(seed)
    pts = rng.random((n, dim))
    gap = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)
    i, j = np.nonzero(np.triu(gap <= radius, k=1))
    d = _graph_metric(n, list(zip(i, j)))
    return MetricSpace(d, {"type": "random_geometric",
                           "params": {"n": n, "radius": radius, "dim": dim, "seed": seed}})


def tree_space(branching: int, depth: int) -> MetricSpace:
    """Complete rooted tree, breadth-first numbering, root at 0."""
    edges = []
    level = [0]
    count = 1
    for _ in range(depth):
        nxt = []
        for parent in level:
            for _ in range(branching):
                edges.append((parent, count))
                nxt.append(count)
                count += 1
        level = nxt
    return MetricSpace(_graph_metric(count, edges),
                       {"type": "tree", "params": {"branching": branching, "depth": depth}})


def explicit_space(matrix) -> MetricSpace:
    d = np.array(matrix, dtype=float)
    check_metric(d)
    return MetricSpace(d, {"type": "explicit", "matrix": d.tolist()})


def graph_space(n: int, edges) -> MetricSpace:
    return MetricSpace(_graph_metric(n, edges),
                       {"type": "graph", "params": {"n": n, "edges": [list(e) for e in edges]}})


_GENERATORS = {
    "path": lambda p: path_space(int(p["n"])),
    "cycle": lambda p: cycle_space(int(p["n"])),
    "grid": lambda p: grid_space(int(p["N"]), int(p["side"])),
    "random_geometric": lambda p: random_geometric_space(
        int(p["n"]), float(p["radius"]), int(p.get("dim", 2)), int(p.get("seed", 0))),
    "tree": lambda p: tree_space(int(p["branching"]), int(p["depth"])),
    "graph": lambda p: graph_space(int(p["n"]), p["edges"]),
}

SPACE_TYPES = tuple(sorted([*_GENERATORS, "explicit"]))


def build_space(spec: dict[str, Any]) -> MetricSpace:
    """Instantiate a space from ``{"type": ..., "params": {...}}`` or an explicit matrix."""
    kind = spec.get("type")
    if kind == "explicit":
        return explicit_space(spec["matrix"])
    if kind not in _GENERATORS:
        raise MetricError(f"unknown space type {kind!r}; expected one of {SPACE_TYPES}")
    try:
        space = _GENERATORS[kind](spec.get("params", {}))
    except KeyError as exc:
        raise MetricError(f"space type {kind!r} is missing parameter {exc.args[0]!r}") from None
    return space


# -- geometry -----------------------------------------------------------------


def ball(space: MetricSpace, x: int, R: float) -> np.ndarray:
    return np.flatnonzero(space.dist[x] <= R)


def set_distance(space: MetricSpace, A, B) -> float:
    A, B = as_subset(A, space.n), as_subset(B, space.n)
    if A.size == 0 or B.size == 0:
        raise ValueError("set_distance needs non-empty sets")
    return float(space.dist[np.ix_(A, B)].min())


def distance_to_set(space: MetricSpace, A) -> np.ndarray:
    """d(x, A) for every point x; +inf when A is empty."""
    A = as_subset(A, space.n)
    if A.size == 0:
        return np.full(space.n, np.inf)
    return space.dist[:, A].min(axis=1)


def neighborhood(space: MetricSpace, A, K: float) -> np.ndarray:
    if K < 0:
        raise ValueError("K must be non-negative")
    return np.flatnonzero(distance_to_set(space, A) <= K)


def diameter(space: MetricSpace, A) -> float:
    A = as_subset(A, space.n)
    if A.size == 0:
        return 0.0
    return float(space.dist[np.ix_(A, A)].max())


def geometry_profile(space: MetricSpace, R_list: Sequence[float]) -> list[int]:
    """sup_x #B(x, R) for each R."""
    R_arr = np.asarray(R_list, dtype=float)
    if np.any(np.diff(R_arr) < 0):
        raise ValueError("R_list must be sorted")
    return [int((space.dist <= R).sum(axis=1).max()) for R in R_arr]


def greedy_net(space: MetricSpace, r: float) -> np.ndarray:
    """r-separated, r-dense subset chosen greedily in index order."""
    gap = np.full(space.n, np.inf)
    net = []
    for x in range(space.n):
        if gap[x] > r:
            net.append(x)
            gap = np.minimum(gap, space.dist[x])
    return np.array(net, dtype=np.int64)
