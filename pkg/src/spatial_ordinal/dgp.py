"""
Synthetic locations and fields for size and power studies.

Random streams come from NumPy's Philox counter-based generator keyed by a
``SeedSequence`` built from ``(seed, *keys)``. Replicate ``r`` of an experiment
uses keys that include ``r``, so replicates are independent of each other and
of the order in which they are computed.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .errors import InvalidInputError
from .geometry import build_blocks, build_graph

__all__ = [
    "TRANSFORMS",
    "DgpSpec",
    "make_rng",
    "sample_points_uniform",
    "build_weight_matrix",
    "sar_sample",
    "sar_solve",
    "apply_transform",
    "transform_name",
    "sample_iid_field",
]

log = logging.getLogger(__name__)

TRANSFORMS = ("identity", "sin", "log_abs")
_TRANSFORM_ALIASES = {"logabs": "log_abs", "log|.|": "log_abs"}


def make_rng(seed, *keys: int) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    ss = np.random.SeedSequence([int(seed), *(int(k) for k in keys)])
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class DgpSpec:
    n: int
    rho: float = 0.0
    k_graph: int = 3
    transform: str = "identity"
    seed: int = 0
    noise_sd: float = 1.0

    def __post_init__(self):
        if not -1 < self.rho < 1:
            raise InvalidInputError(f"rho must lie in (-1, 1), got {self.rho}")
        object.__setattr__(self, "transform", transform_name(self.transform))


def sample_points_uniform(n: int, seed=0) -> np.ndarray:
    """``n`` i.i.d. uniform points on the unit square."""
    if n < 1:
        raise InvalidInputError("n must be >= 1")
    return make_rng(seed).random((n, 2))


def build_weight_matrix(points, k_graph: int = 3) -> sparse.csr_matrix:
    """Row-normalised adjacency of the symmetrised ``k_graph``-NN graph."""
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    if not 1 <= k_graph < n:
        raise InvalidInputError(f"need 1 <= k_graph < n, got k_graph={k_graph}, n={n}")
    graph = build_graph(build_blocks(pts, k_graph + 1), n)
    deg = graph.degrees()
    if np.any(deg == 0):
        raise InvalidInputError("isolated vertex in weight graph")
    data = np.repeat(1.0 / deg, deg)
    return sparse.csr_matrix((data, graph.indices, graph.indptr), shape=(n, n))


def sar_solve(W, rho: float, eps: np.ndarray, tol: float = 1e-12, max_iter: int = 100_000):
    """Solve ``(I - rho W) x = eps`` by the Neumann fixed point ``x <- eps + rho W x``."""
    if not -1 < rho < 1:
        raise InvalidInputError(f"rho must lie in (-1, 1), got {rho}")
    x = np.array(eps, dtype=float)
    if rho == 0:
        return x
    for _ in range(max_iter):
        nxt = eps + rho * (W @ x)
        change = np.max(np.abs(nxt - x))
        x = nxt
        if change < tol:
            return x
    raise RuntimeError("Neumann iteration did not converge")


def sar_sample(W, rho: float, seed=0, noise_sd: float = 1.0) -> np.ndarray:
    """One SAR field ``(I - rho W)^{-1} eps`` with Gaussian innovations."""
    if not -1 < rho < 1:
        raise InvalidInputError(f"rho must lie in (-1, 1), got {rho}")
    eps = make_rng(seed).normal(0.0, noise_sd, W.shape[0])
    return sar_solve(W, rho, eps)


def transform_name(name: str) -> str:
    """Canonical transform name; accepts the aliases ``logabs`` and ``log|.|``."""
    name = _TRANSFORM_ALIASES.get(name, name)
    if name not in TRANSFORMS:
        raise InvalidInputError(f"unknown transform {name!r}; choose from {TRANSFORMS}")
    return name


def apply_transform(x, transform: str = "identity") -> np.ndarray:
    transform = transform_name(transform)
    x = np.asarray(x, dtype=float)
    if transform == "identity":
        return x.copy()
    if transform == "sin":
        return np.sin(x)
    mag = np.abs(x)
    zero = mag == 0
    if np.any(zero):
        log.warning("log|x| hit %d exact zeros; substituting the smallest normal", zero.sum())
        mag = np.where(zero, np.finfo(float).tiny, mag)
    return np.log(mag)


def sample_iid_field(n: int, seed=0, distribution: str = "gaussian") -> np.ndarray:
    rng = make_rng(seed)
    if distribution == "gaussian":
        return rng.standard_normal(n)
    if distribution == "uniform":
        return rng.random(n)
    raise InvalidInputError(f"unknown distribution {distribution!r}")
