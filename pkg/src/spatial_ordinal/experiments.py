"""
Monte Carlo size and power studies and graph diagnostics.

Seeding: locations for sample size ``n`` come from ``make_rng(seed, 0, n)``
and the innovations of replicate ``r`` from ``make_rng(seed, 1, n, r)``. The
innovations are shared across ``rho``, ``k_graph``, transforms and ``m``, so
curves are compared on common random numbers and the ``rho = 0`` power row
coincides with the size study. Replicates are split into contiguous chunks
and reassembled in replicate order, so the worker count never changes a
result.
"""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from math import factorial
from pathlib import Path
from typing import Sequence

import numpy as np

from .covariance import KERNELS, MODES, KernelSpec, default_bandwidth
from .dgp import (
    apply_transform,
    build_weight_matrix,
    make_rng,
    sample_points_uniform,
    sar_solve,
    transform_name,
)
from .errors import InvalidInputError
from .geometry import (
    DEFAULT_BETA_GRID,
    PointCloud,
    build_blocks,
    build_graph,
    duplicate_count,
    shell_matrices,
    shell_stat_c,
    shell_stat_Delta,
    shell_stat_delta,
)
from .io import write_cloud_csv, write_table
from .patterns import MAX_M, tie_count
from .wald import CENTERING_NAMES, Geometry, chi2_quantile, run_test

__all__ = [
    "ExperimentConfig",
    "SizeSummary",
    "PowerCurve",
    "run_size",
    "run_power",
    "cmd_size",
    "cmd_power",
    "diagnostics",
    "MODEL_NAMES",
]

log = logging.getLogger(__name__)

LOCATION_STREAM = 0
FIELD_STREAM = 1
MODEL_NAMES = {"identity": "linear", "sin": "sin", "log_abs": "log_abs"}
SIZE_HEADER = ("n", "m", "R", "mean", "var", "median", "reject_rate")
POWER_HEADER = ("model", "m", "n", "k_graph", "rho", "reject_rate", "R")


def _tuple(v, cast):
    if isinstance(v, (str, bytes)) or not hasattr(v, "__iter__"):
        v = (v,)
    return tuple(cast(x) for x in v)


@dataclass(frozen=True)
class ExperimentConfig:
    mode: str = "size"
    n: tuple = (500,)
    m: tuple = (3,)
    rho: tuple = (0.0,)
    transforms: tuple = ("identity",)
    reps: int = 1000
    level: float = 0.05
    bandwidth: float | None = None
    kernel: str = "flat_top"
    k_graph: tuple = (2, 3)
    seed: int = 0
    centering: str = "null_uniform"
    smoothing: float = 0.5
    threads: int = 1
    out: str | None = None
    resample_locations: bool = False
    dump_fields: bool = False

    def __post_init__(self):
        set_ = lambda k, v: object.__setattr__(self, k, v)
        set_("n", _tuple(self.n, int))
        set_("m", _tuple(self.m, int))
        set_("rho", _tuple(self.rho, float))
        set_("k_graph", _tuple(self.k_graph, int))
        set_("transforms", tuple(transform_name(t) for t in _tuple(self.transforms, str)))
        set_("centering", CENTERING_NAMES.get(self.centering, self.centering))
        if self.mode not in ("test", "size", "power", "diagnostics"):
            raise InvalidInputError(f"unknown mode {self.mode!r}")
        if self.reps < 1:
            raise InvalidInputError("reps must be >= 1")
        if not 0 < self.level < 1:
            raise InvalidInputError("level must lie in (0, 1)")
        if not all(-1 < r < 1 for r in self.rho):
            raise InvalidInputError("every rho must lie in (-1, 1)")
        if not self.n or not self.m or not self.rho or not self.k_graph:
            raise InvalidInputError("n, m, rho and k_graph lists must be nonempty")
        if any(not 2 <= m <= MAX_M for m in self.m):
            raise InvalidInputError(f"m must lie in [2, {MAX_M}]")
        if any(n < max(self.m) + 1 for n in self.n):
            raise InvalidInputError("every n must exceed the largest m")
        if any(k < 1 for k in self.k_graph):
            raise InvalidInputError("k_graph must be >= 1")
        if self.kernel not in KERNELS:
            raise InvalidInputError(f"unknown kernel {self.kernel!r}")
        if self.bandwidth is not None and not self.bandwidth > 0:
            raise InvalidInputError("bandwidth must be positive")
        if self.centering not in MODES:
            raise InvalidInputError(f"unknown centering {self.centering!r}")
        if self.smoothing < 0:
            raise InvalidInputError("smoothing must be >= 0")
        if self.threads < 1:
            raise InvalidInputError("threads must be >= 1")

    def kernel_for(self, n: int) -> KernelSpec:
        b = self.bandwidth if self.bandwidth is not None else default_bandwidth(n, self.kernel)
        return KernelSpec(self.kernel, b)


@dataclass
class SizeSummary:
    n: int
    m: int
    reps: int
    mean: float
    var: float
    median: float
    reject_rate: float
    var_defined: bool = True
    statistics: np.ndarray = field(default=None, repr=False)
    p_values: np.ndarray = field(default=None, repr=False)
    regularized: int = 0
    smoothed: int = 0

    def row(self):
        return (self.n, self.m, self.reps, self.mean, self.var, self.median, self.reject_rate)

    def qq(self) -> list[tuple[float, float]]:
        """``(chi-square quantile, empirical quantile)`` at ``p = (i - 0.5) / R``."""
        df = factorial(self.m) - 1
        emp = np.sort(self.statistics)
        R = len(emp)
        return [(chi2_quantile((i + 0.5) / R, df), float(emp[i])) for i in range(R)]


@dataclass
class PowerCurve:
    model: str
    m: int
    n: int
    k_graph: int
    rho: tuple
    rates: tuple
    reps: int

    def rows(self):
        for r, p in zip(self.rho, self.rates):
            yield (self.model, self.m, self.n, self.k_graph, r, p, self.reps)


def _locations(cfg: ExperimentConfig, n: int, rep: int) -> np.ndarray:
    if cfg.resample_locations:
        return sample_points_uniform(n, make_rng(cfg.seed, LOCATION_STREAM, n, rep))
    return sample_points_uniform(n, make_rng(cfg.seed, LOCATION_STREAM, n))


def _innovations(cfg: ExperimentConfig, n: int, rep: int) -> np.ndarray:
    return make_rng(cfg.seed, FIELD_STREAM, n, rep).standard_normal(n)


def _chunks(reps: int, threads: int) -> list[tuple[int, int]]:
    k = max(1, min(reps, threads))
    edges = np.linspace(0, reps, k + 1).round().astype(int)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def _map(fn, tasks, threads: int):
    if threads <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, tasks))


def _size_chunk(task):
    cfg, n, m, start, stop = task
    kernel = cfg.kernel_for(n)
    geo = None
    out = np.empty((stop - start, 5))
    for i, rep in enumerate(range(start, stop)):
        if geo is None or cfg.resample_locations:
            geo = Geometry.build(_locations(cfg, n, rep), m, kernel)
        cloud = PointCloud(geo.points, _innovations(cfg, n, rep))
        r = run_test(cloud, m, level=cfg.level, centering=cfg.centering,
                     smoothing=cfg.smoothing, geometry=geo)
        out[i] = (r.statistic, r.p_value, r.reject, r.regularized, r.smoothed)
    return out


def run_size(cfg: ExperimentConfig) -> list[SizeSummary]:
    """i.i.d. Gaussian fields at every ``(n, m)``; one summary per cell."""
    summaries = []
    for n in cfg.n:
        for m in cfg.m:
            tasks = [(cfg, n, m, a, b) for a, b in _chunks(cfg.reps, cfg.threads)]
            res = np.vstack(_map(_size_chunk, tasks, cfg.threads))
            stats = res[:, 0]
            R = len(stats)
            var_ok = R > 1
            if not var_ok:
                log.warning("n=%d m=%d: a single replicate has no variance; reporting 0", n, m)
            summaries.append(SizeSummary(
                n=n, m=m, reps=R,
                mean=float(stats.mean()),
                var=float(stats.var(ddof=1)) if var_ok else 0.0,
                median=float(np.median(stats)),
                reject_rate=float(res[:, 2].mean()),
                var_defined=var_ok,
                statistics=stats,
                p_values=res[:, 1],
                regularized=int(res[:, 3].sum()),
                smoothed=int(res[:, 4].sum()),
            ))
    return summaries


def _power_chunk(task):
    cfg, n, start, stop = task
    geos: dict[int, Geometry] = {}
    weights: dict[int, object] = {}
    shape = (stop - start, len(cfg.k_graph), len(cfg.rho), len(cfg.transforms), len(cfg.m))
    out = np.zeros(shape, dtype=bool)
    kernel = cfg.kernel_for(n)
    for i, rep in enumerate(range(start, stop)):
        if not geos or cfg.resample_locations:
            pts = _locations(cfg, n, rep)
            geos = {m: Geometry.build(pts, m, kernel) for m in cfg.m}
            weights = {k: build_weight_matrix(pts, k) for k in cfg.k_graph}
        pts = geos[cfg.m[0]].points
        eps = _innovations(cfg, n, rep)
        for a, k in enumerate(cfg.k_graph):
            for b, rho in enumerate(cfg.rho):
                x = sar_solve(weights[k], rho, eps)
                for c, tr in enumerate(cfg.transforms):
                    cloud = PointCloud(pts, apply_transform(x, tr))
                    for d, m in enumerate(cfg.m):
                        r = run_test(cloud, m, level=cfg.level, centering=cfg.centering,
                                     smoothing=cfg.smoothing, geometry=geos[m])
                        out[i, a, b, c, d] = r.reject
    return out


def run_power(cfg: ExperimentConfig) -> list[PowerCurve]:
    """SAR fields over the ``rho`` grid; one curve per ``(model, m, n, k_graph)``."""
    curves = []
    for n in cfg.n:
        tasks = [(cfg, n, a, b) for a, b in _chunks(cfg.reps, cfg.threads)]
        rej = np.concatenate(_map(_power_chunk, tasks, cfg.threads), axis=0)
        rates = rej.mean(axis=0)
        for c, tr in enumerate(cfg.transforms):
            for d, m in enumerate(cfg.m):
                for a, k in enumerate(cfg.k_graph):
                    curves.append(PowerCurve(
                        MODEL_NAMES[tr], m, n, k, cfg.rho,
                        tuple(float(v) for v in rates[a, :, c, d]), len(rej),
                    ))
    order = {name: i for i, name in enumerate(MODEL_NAMES.values())}
    curves.sort(key=lambda cv: (order[cv.model], cv.m, cv.n, cv.k_graph))
    return curves


def write_size_outputs(summaries: Sequence[SizeSummary], out) -> dict[str, Path]:
    from .plots import qq_plot

    out = Path(out)
    paths = {
        "summary": write_table(out / "size_summary.csv", SIZE_HEADER, (s.row() for s in summaries)),
        "qq": write_table(
            out / "size_qq.csv", ("n", "m", "theoretical", "empirical"),
            ((s.n, s.m, t, e) for s in summaries for t, e in s.qq()),
        ),
        "statistics": write_table(
            out / "size_statistics.csv", ("n", "m", "rep", "statistic", "p_value"),
            ((s.n, s.m, i, float(t), float(p))
             for s in summaries for i, (t, p) in enumerate(zip(s.statistics, s.p_values))),
        ),
    }
    paths["plot"] = qq_plot(summaries, out / "size_qq.svg")
    return paths


def write_power_outputs(curves: Sequence[PowerCurve], out) -> dict[str, Path]:
    from .plots import power_plot

    out = Path(out)
    paths = {"curves": write_table(
        out / "power.csv", POWER_HEADER, (row for cv in curves for row in cv.rows())
    )}
    for model, m in dict.fromkeys((cv.model, cv.m) for cv in curves):
        group = [cv for cv in curves if cv.model == model and cv.m == m]
        paths[f"plot_{model}_m{m}"] = power_plot(group, out / f"power_{model}_m{m}.svg")
    return paths


def dump_fields(cfg: ExperimentConfig, out) -> list[Path]:
    """Replicate-0 fields for every ``(n, k_graph, rho, transform)`` as ``x,y,value`` CSVs."""
    out = Path(out) / "fields"
    paths = []
    for n in cfg.n:
        pts = _locations(cfg, n, 0)
        eps = _innovations(cfg, n, 0)
        for k in cfg.k_graph:
            W = build_weight_matrix(pts, k)
            for rho in cfg.rho:
                x = sar_solve(W, rho, eps)
                for tr in cfg.transforms:
                    name = f"field_n{n}_k{k}_rho{rho:g}_{MODEL_NAMES[tr]}.csv"
                    paths.append(write_cloud_csv(out / name, pts, apply_transform(x, tr)))
    return paths


def cmd_size(cfg: ExperimentConfig) -> list[SizeSummary]:
    summaries = run_size(cfg)
    if cfg.out is not None:
        write_size_outputs(summaries, cfg.out)
    return summaries


def cmd_power(cfg: ExperimentConfig) -> list[PowerCurve]:
    curves = run_power(cfg)
    if cfg.out is not None:
        write_power_outputs(curves, cfg.out)
        if cfg.dump_fields:
            dump_fields(cfg, cfg.out)
    return curves


def diagnostics(
    cloud: PointCloud,
    m: int = 3,
    h_max: int = 4,
    f_grid: Sequence[int] = (1, 2),
    k_grid: Sequence[float] = (1.0, 2.0),
    beta_grid: Sequence[float] = DEFAULT_BETA_GRID,
) -> dict:
    """Shell sizes, pair counts and sparsity moments of the block graph."""
    if h_max < 0:
        raise InvalidInputError("h_max must be >= 0")
    if cloud.n <= m - 1:
        raise InvalidInputError(f"need more than m - 1 = {m - 1} points")
    blocks = build_blocks(cloud, m)
    graph = build_graph(blocks, cloud.n)
    shells = shell_matrices(graph, h_max)
    hist = {}
    for h, S in enumerate(shells):
        sizes, counts = np.unique(np.diff(S.indptr), return_counts=True)
        hist[str(h)] = {str(int(s)): int(c) for s, c in zip(sizes, counts)}
    hs = range(0, h_max + 1)
    return {
        "n": cloud.n,
        "m": m,
        "h_max": h_max,
        "edges": len(graph.indices) // 2,
        "shell_size_histogram": hist,
        "pair_counts": [int(S.nnz) for S in shells],
        "delta": [
            {"h": h, "k": k, "value": shell_stat_delta(graph, h, k)} for h in hs for k in k_grid
        ],
        "Delta": [
            {"h": h, "f": f, "k": k, "value": shell_stat_Delta(graph, h, f, k)}
            for h in hs if h >= 1 for f in f_grid for k in k_grid
        ],
        "c": [
            {"h": h, "f": f, "k": k, "value": shell_stat_c(graph, h, f, k, beta_grid)}
            for h in hs if h >= 1 for f in f_grid for k in k_grid
        ],
        "beta_grid": list(beta_grid),
        "ties": tie_count(cloud, blocks),
        "duplicates": duplicate_count(cloud.points),
    }
