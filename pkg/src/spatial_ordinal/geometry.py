"""
Neighbour blocks, the symmetrised nearest-neighbour graph and its shells.

Blocks are stored as an ``(n, m)`` integer array: row ``s`` starts with ``s``
itself followed by its ``m - 1`` nearest locations, ordered by Euclidean
distance, then by polar angle in ``[0, 2*pi)`` measured from the positive
x-axis, then by vertex index. The search is exact; a kd-tree proposes
candidates and any row whose boundary cannot be certified falls back to a
brute-force scan.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import sparse
from scipy.spatial import cKDTree

from .errors import InvalidInputError

__all__ = [
    "UNREACHABLE",
    "DEFAULT_BETA_GRID",
    "PointCloud",
    "SpatialGraph",
    "ShellIndex",
    "build_blocks",
    "build_graph",
    "bfs_distances",
    "shell_matrices",
    "pair_counts",
    "shell_stat_delta",
    "shell_stat_Delta",
    "shell_stat_c",
    "duplicate_count",
]

#: Hop count marker for vertices that are unreachable or beyond ``h_max``.
UNREACHABLE = -1

DEFAULT_BETA_GRID = (1.1, 1.25, 1.5, 2.0, 3.0, 5.0)

_TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class PointCloud:
    """Planar locations with one scalar observation per location."""

    points: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        vals = np.asarray(self.values, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise InvalidInputError(f"points must have shape (n, 2), got {pts.shape}")
        if vals.ndim != 1 or len(vals) != len(pts):
            raise InvalidInputError(
                f"values must be a vector of length {len(pts)}, got shape {vals.shape}"
            )
        if not np.all(np.isfinite(pts)):
            raise InvalidInputError("coordinates must be finite")
        if not np.all(np.isfinite(vals)):
            raise InvalidInputError("observations must be finite")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "values", vals)

    @property
    def n(self) -> int:
        return len(self.points)

    def with_values(self, values) -> "PointCloud":
        return PointCloud(self.points, values)


def _as_points(points) -> np.ndarray:
    if isinstance(points, PointCloud):
        return points.points
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise InvalidInputError(f"points must have shape (n, 2), got {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise InvalidInputError("coordinates must be finite")
    return pts


def _order_keys(pts: np.ndarray, centers: np.ndarray, cand: np.ndarray):
    """Distance and polar angle of candidates relative to their centres."""
    diff = pts[cand] - pts[centers][:, None, :]
    dist = np.hypot(diff[..., 0], diff[..., 1])
    ang = np.mod(np.arctan2(diff[..., 1], diff[..., 0]), _TWO_PI)
    return dist, ang


def _sorted_neighbours(pts, centers, cand, k):
    """Order candidate rows by (distance, angle, index), self excluded; keep k."""
    dist, ang = _order_keys(pts, centers, cand)
    dist = np.where(cand == centers[:, None], np.inf, dist)
    rows = np.broadcast_to(np.arange(len(centers))[:, None], cand.shape)
    order = np.lexsort((cand.ravel(), ang.ravel(), dist.ravel(), rows.ravel()))
    order = order.reshape(cand.shape)
    width = cand.shape[1]
    local = order - (np.arange(len(centers)) * width)[:, None]
    picked = np.take_along_axis(cand, local[:, :k], axis=1)
    picked_dist = np.take_along_axis(dist, local[:, :k], axis=1)
    return picked, picked_dist


def build_blocks(points, m: int, *, extra: int = 4) -> np.ndarray:
    """Return the ``(n, m)`` neighbour-block array for a planar point set.

    ``points`` may be a :class:`PointCloud` or an ``(n, 2)`` array. ``extra``
    controls how many spare kd-tree candidates are fetched to resolve
    distance ties at the block boundary.
    """
    pts = _as_points(points)
    n = len(pts)
    if m < 2:
        raise InvalidInputError(f"embedding dimension must be >= 2, got {m}")
    if n < m:
        raise InvalidInputError(f"need at least m={m} locations, got {n}")

    k_query = min(n, m + extra)
    centers = np.arange(n)
    if k_query == n:
        cand = np.broadcast_to(centers, (n, n))
        tree_edge = np.full(n, np.inf)
    else:
        tree_dist, cand = cKDTree(pts).query(pts, k=k_query)
        tree_edge = tree_dist[:, -1]
    picked, picked_dist = _sorted_neighbours(pts, centers, cand, m - 1)

    # Every location outside the candidate set lies at tree distance >= tree_edge;
    # rows where that cannot be separated from the chosen radius are redone exactly.
    radius = picked_dist[:, -1]
    unsafe = ~(tree_edge > radius * (1.0 + 1e-9) + 1e-300)
    if np.any(unsafe):
        rows = np.flatnonzero(unsafe)
        full = np.broadcast_to(centers, (len(rows), n))
        picked[rows], _ = _sorted_neighbours(pts, rows, full, m - 1)

    return np.column_stack([centers, picked]).astype(np.intp)


@dataclass(frozen=True)
class SpatialGraph:
    """Undirected simple graph in CSR form with sorted neighbour lists."""

    n: int
    indptr: np.ndarray
    indices: np.ndarray

    def neighbors(self, v: int) -> np.ndarray:
        return self.indices[self.indptr[v]:self.indptr[v + 1]]

    @property
    def adjacency(self) -> list[list[int]]:
        return [self.neighbors(v).tolist() for v in range(self.n)]

    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def to_sparse(self) -> sparse.csr_matrix:
        data = np.ones(len(self.indices))
        return sparse.csr_matrix(
            (data, self.indices, self.indptr), shape=(self.n, self.n)
        )

    def edges(self) -> list[tuple[int, int]]:
        """Undirected edges as ascending ``(u, v)`` pairs with ``u < v``."""
        out = []
        for u in range(self.n):
            for v in self.neighbors(u):
                if u < v:
                    out.append((u, int(v)))
        return out

    def edge_list_text(self) -> str:
        return "".join(f"{u} {v}\n" for u, v in self.edges())

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int]]) -> "SpatialGraph":
        pairs = np.asarray(list(edges), dtype=np.intp).reshape(-1, 2)
        if pairs.size and (pairs.min() < 0 or pairs.max() >= n):
            raise InvalidInputError("edge endpoint out of range")
        pairs = pairs[pairs[:, 0] != pairs[:, 1]]
        return _graph_from_pairs(n, pairs[:, 0], pairs[:, 1])


def _graph_from_pairs(n, rows, cols) -> SpatialGraph:
    r = np.concatenate([rows, cols])
    c = np.concatenate([cols, rows])
    adj = sparse.csr_matrix((np.ones(len(r)), (r, c)), shape=(n, n))
    adj.sum_duplicates()
    adj.sort_indices()
    return SpatialGraph(n, adj.indptr.astype(np.intp), adj.indices.astype(np.intp))


def build_graph(blocks: np.ndarray, n: int | None = None) -> SpatialGraph:
    """Union of block memberships in both directions."""
    blocks = np.asarray(blocks, dtype=np.intp)
    if blocks.ndim != 2 or blocks.shape[1] < 2:
        raise InvalidInputError("blocks must have shape (n, m) with m >= 2")
    if n is None:
        n = len(blocks)
    if len(blocks) != n or not np.array_equal(blocks[:, 0], np.arange(n)):
        raise InvalidInputError("blocks must cover vertices 0..n-1 in order")
    m = blocks.shape[1]
    rows = np.repeat(blocks[:, 0], m - 1)
    cols = blocks[:, 1:].ravel()
    return _graph_from_pairs(n, rows, cols)


@dataclass(frozen=True)
class ShellIndex:
    source: int
    distances: np.ndarray = field(repr=False)

    def shell(self, h: int) -> np.ndarray:
        return np.flatnonzero(self.distances == h)


def bfs_distances(graph: SpatialGraph, source: int, h_max: int | None = None) -> ShellIndex:
    """Hop distances from ``source``; vertices past ``h_max`` get ``UNREACHABLE``."""
    if not 0 <= source < graph.n:
        raise InvalidInputError(f"source {source} out of range for n={graph.n}")
    dist = np.full(graph.n, UNREACHABLE, dtype=np.intp)
    dist[source] = 0
    queue = deque([source])
    indptr, indices = graph.indptr, graph.indices
    while queue:
        u = queue.popleft()
        du = dist[u]
        if h_max is not None and du >= h_max:
            continue
        for v in indices[indptr[u]:indptr[u + 1]]:
            if dist[v] == UNREACHABLE:
                dist[v] = du + 1
                queue.append(v)
    return ShellIndex(source, dist)


def shell_matrices(graph: SpatialGraph, h_max: int) -> list[sparse.csr_matrix]:
    """Shell indicator matrices ``S_h[s, t] = 1{d(s, t) == h}`` for ``h = 0..h_max``.

    Level-synchronous BFS from all sources at once, using sparse products.
    """
    if h_max < 0:
        raise InvalidInputError("h_max must be >= 0")
    adj = graph.to_sparse()
    frontier = sparse.identity(graph.n, format="csr")
    visited = frontier.copy()
    shells = [frontier]
    for _ in range(h_max):
        reach = frontier @ adj
        reach.data[:] = 1.0
        new = reach - reach.multiply(visited)
        new = sparse.csr_matrix(new)
        new.eliminate_zeros()
        new.sort_indices()
        shells.append(new)
        visited = visited + new
        frontier = new
        if new.nnz == 0:
            # Further shells are empty as well.
            shells.extend(
                sparse.csr_matrix((graph.n, graph.n)) for _ in range(h_max - len(shells) + 1)
            )
            break
    return shells


def pair_counts(graph: SpatialGraph, h_max: int) -> np.ndarray:
    """``U(h)``: number of ordered vertex pairs at hop distance exactly ``h``."""
    return np.array([s.nnz for s in shell_matrices(graph, h_max)], dtype=np.int64)


def _shell_sizes(shells, h) -> np.ndarray:
    return np.diff(shells[h].indptr)


def shell_stat_delta(graph: SpatialGraph, h: int, k: float) -> float:
    """Average ``k``-th power of the ``h``-shell sizes."""
    sizes = _shell_sizes(shell_matrices(graph, h), h)
    return float(np.mean(sizes.astype(float) ** k))


def _ball(shells, radius) -> sparse.csr_matrix:
    ball = shells[0].copy()
    for s in shells[1:radius + 1]:
        ball = ball + s
    return sparse.csr_matrix(ball)


def shell_stat_Delta(graph: SpatialGraph, h: int, f: int, k: float) -> float:
    """Neighbourhood-overlap moment.

    For each vertex ``i`` take the largest ``|V(i; f) minus V(j; h-1)|`` over
    ``j`` in the ``h``-shell of ``i``, raise it to ``k`` and average over
    vertices. Vertices with an empty ``h``-shell contribute 0.
    """
    if h < 1:
        raise InvalidInputError("h must be >= 1")
    shells = shell_matrices(graph, max(h, f))
    ball_f = _ball(shells, f)
    ball_h1 = _ball(shells, h - 1)
    size_f = np.diff(ball_f.indptr)
    overlap = sparse.csr_matrix(ball_f @ ball_h1)
    rows, cols = shells[h].nonzero()
    per_vertex = np.zeros(graph.n)
    if len(rows):
        inter = np.asarray(overlap[rows, cols]).ravel()
        vals = (size_f[rows] - inter).astype(float) ** k
        np.maximum.at(per_vertex, rows, vals)
    return float(per_vertex.mean())


def shell_stat_c(
    graph: SpatialGraph,
    h: int,
    f: int,
    k: float,
    beta_grid: Sequence[float] = DEFAULT_BETA_GRID,
) -> float:
    """Grid minimum over ``beta`` of the Holder product of the two moments."""
    betas = list(beta_grid)
    if not betas or any(b <= 1 for b in betas):
        raise InvalidInputError("beta_grid must be nonempty with entries > 1")
    best = np.inf
    for b in betas:
        big = shell_stat_Delta(graph, h, f, k * b)
        small = shell_stat_delta(graph, h, b / (b - 1.0))
        best = min(best, big ** (1.0 / b) * small ** (1.0 - 1.0 / b))
    return float(best)


def duplicate_count(points) -> int:
    """Number of locations whose coordinates repeat an earlier location."""
    pts = _as_points(points)
    return int(len(pts) - len(np.unique(pts, axis=0)))
