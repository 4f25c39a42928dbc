"""
ALR-based Wald test of spatial independence.

The pattern frequencies are mapped to additive log-ratio coordinates against
the reference pattern, and the quadratic form
``L = n * a' (J V J')^{-1} a`` is compared with a chi-square law on
``m! - 1`` degrees of freedom. ``J`` is the Jacobian of the log-ratio map at
the uniform composition.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from math import factorial

import numpy as np
from scipy import linalg, optimize, special

from .covariance import KernelSpec, estimate_V, kernel_matrix
from .errors import InvalidInputError, SingularCovarianceError, ZeroFrequencyError
from .geometry import PointCloud, SpatialGraph, build_blocks, build_graph
from .patterns import (
    MAX_M,
    PatternFrequencies,
    indicators_from_ranks,
    pattern_ranks,
    rank_to_word,
)

__all__ = [
    "AlrVector",
    "TestReport",
    "Geometry",
    "alr",
    "jacobian_uniform",
    "jacobian_uniform_solve",
    "wald_statistic",
    "chi2_survival",
    "chi2_quantile",
    "run_test",
]

REPORT_KEYS = (
    "n", "m", "statistic", "df", "p_value", "level", "reject", "bandwidth",
    "kernel", "centering", "reference_pattern", "frequencies", "ties",
    "regularized",
)


@dataclass(frozen=True)
class AlrVector:
    coords: np.ndarray
    reference: int
    smoothed: bool = False


def alr(frequencies: PatternFrequencies | np.ndarray, smoothing: float = 0.5) -> AlrVector:
    """Log-ratios of each pattern count to the last (reference) pattern count.

    ``smoothing`` is added to every count, but only when some count is zero.
    With ``smoothing=0`` a zero count raises :class:`ZeroFrequencyError`.
    """
    if isinstance(frequencies, PatternFrequencies):
        counts, m = frequencies.counts, frequencies.m
    else:
        counts = np.asarray(frequencies)
        m = None
    counts = np.asarray(counts, dtype=float)
    if counts.ndim != 1 or len(counts) < 2:
        raise InvalidInputError("need a vector of at least two pattern counts")
    if counts.sum() <= 0 or np.any(counts < 0):
        raise InvalidInputError("counts must be nonnegative with a positive total")
    if smoothing < 0:
        raise InvalidInputError("smoothing must be >= 0")
    smoothed = False
    if np.any(counts == 0):
        if smoothing == 0:
            zero = int(np.flatnonzero(counts == 0)[0])
            word = rank_to_word(zero, m) if m is not None else (zero,)
            raise ZeroFrequencyError(word)
        counts = counts + smoothing
        smoothed = True
    logs = np.log(counts)
    ref = len(counts) - 1
    return AlrVector(logs[:-1] - logs[ref], ref, smoothed)


def jacobian_uniform(m: int) -> np.ndarray:
    if not 2 <= m <= MAX_M:
        raise InvalidInputError(f"m must lie in [2, {MAX_M}]")
    k = factorial(m)
    d = k - 1
    return k * (np.eye(d) + np.ones((d, d)))


def jacobian_uniform_solve(a: np.ndarray, m: int) -> np.ndarray:
    """``J^{-1} a`` in closed form: ``(I + 11')^{-1} = I - 11' / m!``."""
    k = factorial(m)
    return (a - a.sum() / k) / k


def wald_statistic(alr_vec, V_hat, n: int, m: int) -> float:
    """``n * a' (J V J')^{-1} a``.

    For a :class:`CovarianceEstimate` the quadratic form is evaluated through
    its floored eigen-factorization ``V = (U L^{1/2})(U L^{1/2})'`` as
    ``n * |L^{-1/2} U' J^{-1} a|^2``. This keeps full relative accuracy when
    the floor has made ``V`` ill-conditioned. A bare matrix goes through a
    Cholesky solve of ``J V J'``.
    """
    a = alr_vec.coords if isinstance(alr_vec, AlrVector) else np.asarray(alr_vec, float)
    V = getattr(V_hat, "V_hat", V_hat)
    J = jacobian_uniform(m)
    if V.shape != J.shape or a.shape != (J.shape[0],):
        raise InvalidInputError("dimension mismatch between ALR, covariance and m")
    vals = getattr(V_hat, "eigvals", None)
    if vals is not None:
        if not np.all(vals > 0):
            raise SingularCovarianceError("covariance estimate is not positive definite")
        y = V_hat.eigvecs.T @ jacobian_uniform_solve(a, m)
        return max(float(n * np.sum(y * y / vals)), 0.0)
    M = J @ V @ J.T
    M = 0.5 * (M + M.T)
    try:
        factor = linalg.cho_factor(M, lower=True, check_finite=True)
    except linalg.LinAlgError as exc:
        raise SingularCovarianceError(f"covariance factorization failed: {exc}") from exc
    stat = float(n * a @ linalg.cho_solve(factor, a))
    return max(stat, 0.0)


def chi2_survival(x: float, df: int) -> float:
    """``P(chi2_df > x)`` via the regularized upper incomplete gamma function."""
    if df <= 0:
        raise InvalidInputError("df must be positive")
    if x <= 0:
        return 1.0
    return float(special.gammaincc(0.5 * df, 0.5 * x))


def chi2_quantile(p: float, df: int) -> float:
    """Root of ``chi2_survival(x, df) = 1 - p``."""
    if not 0 < p < 1:
        raise InvalidInputError(f"probability must lie in (0, 1), got {p}")
    if df <= 0:
        raise InvalidInputError("df must be positive")
    target = 1.0 - p
    hi = max(2.0 * df, 1.0)
    while chi2_survival(hi, df) > target:
        hi *= 2.0
    return float(
        optimize.brentq(
            lambda x: special.gammaincc(0.5 * df, 0.5 * x) - target,
            0.0, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=500,
        )
    )


@dataclass
class TestReport:
    n: int
    m: int
    statistic: float
    df: int
    p_value: float
    level: float
    reject: bool
    bandwidth: float
    kernel: str
    centering: str
    reference_pattern: list[int]
    frequencies: list[float]
    ties: int
    regularized: bool
    smoothed: bool = False
    duplicates: int = 0
    extra: dict = field(default_factory=dict, repr=False)

    __test__ = False  # not a pytest class

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in REPORT_KEYS}

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


@dataclass
class Geometry:
    """Blocks, graph and kernel matrix for one set of locations.

    Building this once and reusing it across fields on the same locations
    avoids repeating the neighbour search and shell traversal.
    """

    points: np.ndarray
    m: int
    blocks: np.ndarray
    graph: SpatialGraph
    kernel: KernelSpec
    K: object

    @classmethod
    def build(cls, points, m: int, kernel: KernelSpec | None = None) -> "Geometry":
        pts = points.points if isinstance(points, PointCloud) else np.asarray(points, float)
        if not 2 <= m <= MAX_M:
            raise InvalidInputError(f"m must lie in [2, {MAX_M}], got {m}")
        blocks = build_blocks(pts, m)
        graph = build_graph(blocks, len(pts))
        if kernel is None:
            kernel = KernelSpec.default(len(pts))
        return cls(pts, m, blocks, graph, kernel, kernel_matrix(graph, kernel))


CENTERING_NAMES = {"null": "null_uniform", "empirical": "empirical_mean"}


def run_test(
    cloud: PointCloud,
    m: int = 3,
    kernel: KernelSpec | None = None,
    level: float = 0.05,
    *,
    centering: str = "null_uniform",
    smoothing: float = 0.5,
    geometry: Geometry | None = None,
) -> TestReport:
    """Full pipeline from a point cloud to a test decision."""
    if not 0 < level < 1:
        raise InvalidInputError("level must lie in (0, 1)")
    centering = CENTERING_NAMES.get(centering, centering)
    if geometry is None:
        geometry = Geometry.build(cloud, m, kernel)
    elif geometry.m != m or len(geometry.points) != cloud.n:
        raise InvalidInputError("geometry does not match the point cloud")
    n = cloud.n
    block_vals = cloud.values[geometry.blocks]
    ranks = pattern_ranks(block_vals)
    k = factorial(m)
    counts = np.bincount(ranks, minlength=k).astype(np.int64)
    freqs = PatternFrequencies(counts, m)
    Y = indicators_from_ranks(ranks, m)
    cov = estimate_V(Y, None, geometry.kernel, centering, m=m, K=geometry.K)
    a = alr(freqs, smoothing)
    stat = wald_statistic(a, cov, n, m)
    df = k - 1
    p = chi2_survival(stat, df)
    sorted_vals = np.sort(block_vals, axis=1)
    ties = int(np.any(np.diff(sorted_vals, axis=1) == 0, axis=1).sum())
    return TestReport(
        n=n,
        m=m,
        statistic=stat,
        df=df,
        p_value=p,
        level=level,
        reject=bool(stat >= chi2_quantile(1.0 - level, df)),
        bandwidth=float(geometry.kernel.bandwidth),
        kernel=geometry.kernel.kind,
        centering=centering,
        reference_pattern=list(rank_to_word(k - 1, m)),
        frequencies=(counts / n).tolist(),
        ties=ties,
        regularized=cov.regularized,
        smoothed=a.smoothed,
        duplicates=len(geometry.points) - len(np.unique(geometry.points, axis=0)),
    )
