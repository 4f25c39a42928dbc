"""
Long-run covariance of the pattern indicators via graph-distance shells.

Three compactly supported kernels are available. ``bartlett`` and
``truncated`` are the usual triangular and rectangular windows. ``flat_top``
(the default) keeps full weight through hop ``flat`` and then tapers linearly
to zero at the bandwidth. Under independence the indicators of blocks more
than two hops apart share no locations, so with ``flat=2`` every shell that
carries null dependence is counted at full weight.

The shell contribution at distance ``h`` is ``Z' S_h Z`` where ``Z`` holds the
centred indicator rows and ``S_h`` is the 0/1 matrix of ordered pairs at hop
distance ``h``. Kernel weighting therefore collapses into a single sparse
matrix ``K = sum_h w(h / b) S_h`` that depends only on the graph, which lets
repeated estimates on a fixed geometry skip the shell traversal.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import factorial, floor

import numpy as np
from scipy import sparse

from .errors import DegenerateCovarianceError, InvalidInputError
from .geometry import SpatialGraph, shell_matrices

__all__ = [
    "KernelSpec",
    "CovarianceEstimate",
    "default_bandwidth",
    "kernel_weight",
    "shell_contribution",
    "omega_by_shell",
    "kernel_matrix",
    "estimate_V",
    "regularize",
    "spectral_floor",
]

KERNELS = ("flat_top", "bartlett", "truncated")
DEFAULT_FLAT = 2.0
MODES = ("null_uniform", "empirical_mean")


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family, bandwidth ``b`` (in hops) and flat-top width (in hops)."""

    kind: str = "flat_top"
    bandwidth: float = 3.0
    flat: float = DEFAULT_FLAT

    def __post_init__(self):
        if self.kind not in KERNELS:
            raise InvalidInputError(f"unknown kernel {self.kind!r}; choose from {KERNELS}")
        if not self.bandwidth > 0:
            raise InvalidInputError("bandwidth must be positive")
        if self.kind == "flat_top" and not 0 <= self.flat < self.bandwidth:
            raise InvalidInputError("flat-top width must lie in [0, bandwidth)")

    @classmethod
    def default(cls, n: int, kind: str = "flat_top") -> "KernelSpec":
        return cls(kind, default_bandwidth(n, kind))

    @property
    def h_max(self) -> int:
        """Largest hop distance that can receive nonzero weight."""
        return int(floor(self.bandwidth))

    def weights(self) -> np.ndarray:
        h = np.arange(self.h_max + 1)
        return kernel_weight(h / self.bandwidth, self.kind, self.flat / self.bandwidth)


def default_bandwidth(n: int, kind: str = "flat_top") -> int:
    """``floor(n**(1/4))`` hops, or for the flat-top kernel ``floor(n**(1/4)) + 3``.

    The flat-top taper then spans ``floor(n**(1/4)) + 1`` hops past the flat region.
    """
    base = max(1, int(floor(n ** 0.25)))
    return base + 3 if kind == "flat_top" else base


def kernel_weight(x, kind: str = "bartlett", flat: float = 0.0):
    """Kernel at ``x = h / b``; ``flat`` is the flat-top width as a fraction of ``b``."""
    x = np.abs(np.asarray(x, dtype=float))
    inside = x <= 1.0
    if kind == "bartlett":
        return np.where(inside, 1.0 - x, 0.0)
    if kind == "truncated":
        return np.where(inside, 1.0, 0.0)
    if kind == "flat_top":
        taper = (1.0 - x) / (1.0 - flat)
        return np.where(x <= flat, 1.0, np.where(inside, taper, 0.0))
    raise InvalidInputError(f"unknown kernel {kind!r}")


@dataclass(frozen=True)
class CovarianceEstimate:
    """``V_hat`` plus its floored eigen-factorization ``eigvecs @ diag(eigvals) @ eigvecs.T``."""

    V_hat: np.ndarray
    bandwidth: float
    h_max: int
    regularized: bool
    floor: float
    raw: np.ndarray
    eigvals: np.ndarray | None = None
    eigvecs: np.ndarray | None = None


def _centering(Y: np.ndarray, mode: str, m: int | None) -> np.ndarray:
    if mode == "empirical_mean":
        return Y.mean(axis=0)
    if mode == "null_uniform":
        d = Y.shape[1]
        if m is None:
            m = _m_from_dim(d)
        return np.full(d, 1.0 / factorial(m))
    raise InvalidInputError(f"unknown centering mode {mode!r}; choose from {MODES}")


def _m_from_dim(d: int) -> int:
    for m in range(2, 11):
        if factorial(m) - 1 == d:
            return m
    raise InvalidInputError(f"indicator width {d} is not m! - 1 for any m")


def shell_contribution(
    indicators: np.ndarray, centering, graph: SpatialGraph, h: int
) -> np.ndarray:
    """Sum of outer products of centred rows over ordered pairs at distance ``h``."""
    Y = np.asarray(indicators, dtype=float)
    c = np.asarray(centering, dtype=float)
    if Y.ndim != 2 or c.shape != (Y.shape[1],):
        raise InvalidInputError("centering length must equal the indicator width")
    if Y.shape[0] != graph.n:
        raise InvalidInputError("indicator rows must match graph vertices")
    Z = Y - c
    S = shell_matrices(graph, h)[h]
    return Z.T @ (S @ Z)


def omega_by_shell(
    indicators: np.ndarray, graph: SpatialGraph, h_max: int, mode: str = "null_uniform",
    *, m: int | None = None,
) -> list[np.ndarray]:
    """Unweighted shell sums ``Z' S_h Z`` for ``h = 0..h_max`` (one traversal)."""
    Y = np.asarray(indicators, dtype=float)
    if Y.shape[0] != graph.n:
        raise InvalidInputError("indicator rows must match graph vertices")
    Z = Y - _centering(Y, mode, m)
    return [Z.T @ (S @ Z) for S in shell_matrices(graph, h_max)]


def kernel_matrix(graph: SpatialGraph, kernel: KernelSpec) -> sparse.csr_matrix:
    """Sparse ``K[s, t] = w(d(s, t) / b)``; zero beyond the kernel support."""
    w = kernel.weights()
    shells = shell_matrices(graph, kernel.h_max)
    K = sparse.csr_matrix((graph.n, graph.n))
    for wh, S in zip(w, shells):
        if wh != 0.0:
            K = K + wh * S
    K = sparse.csr_matrix(K)
    K.sort_indices()
    return K


def spectral_floor(M: np.ndarray, rel_floor: float = 1e-8):
    """Eigen-factorization of ``(M + M') / 2`` with eigenvalues lifted to ``rel_floor * trace / dim``.

    Returns ``(eigvals, eigvecs, fired, floor)``.
    """
    S = 0.5 * (M + M.T)
    d = S.shape[0]
    eps = rel_floor * abs(np.trace(S)) / d
    vals, vecs = np.linalg.eigh(S)
    fired = bool(vals.min() <= eps)
    if fired:
        vals = np.maximum(vals, eps)
    return vals, vecs, fired, eps


def regularize(M: np.ndarray, rel_floor: float = 1e-8):
    """Symmetrise and lift eigenvalues to ``rel_floor * trace / dim``.

    Returns ``(matrix, fired, floor)``.
    """
    S = 0.5 * (M + M.T)
    vals, vecs, fired, eps = spectral_floor(S, rel_floor)
    if not fired:
        return S, False, eps
    repaired = (vecs * vals) @ vecs.T
    return 0.5 * (repaired + repaired.T), True, eps


def estimate_V(
    indicators: np.ndarray,
    graph: SpatialGraph | None,
    kernel: KernelSpec,
    mode: str = "null_uniform",
    *,
    m: int | None = None,
    K: sparse.spmatrix | None = None,
) -> CovarianceEstimate:
    """Kernel-weighted shell covariance, normalised by ``n``.

    Pass a precomputed :func:`kernel_matrix` as ``K`` to reuse a geometry.
    """
    Y = np.asarray(indicators, dtype=float)
    n = Y.shape[0]
    if n == 0:
        raise InvalidInputError("no observations")
    if np.all(Y == Y[0]):
        raise DegenerateCovarianceError(
            "every block has the same ordinal pattern; covariance is degenerate"
        )
    c = _centering(Y, mode, m)
    if K is None:
        if graph is None:
            raise InvalidInputError("need a graph or a kernel matrix")
        if graph.n != n:
            raise InvalidInputError("indicator rows must match graph vertices")
        K = kernel_matrix(graph, kernel)
    Z = Y - c
    raw = Z.T @ (K @ Z) / n
    raw = 0.5 * (raw + raw.T)
    vals, vecs, fired, eps = spectral_floor(raw)
    V = raw
    if fired:
        V = (vecs * vals) @ vecs.T
        V = 0.5 * (V + V.T)
    return CovarianceEstimate(V, kernel.bandwidth, kernel.h_max, fired, eps, raw, vals, vecs)
