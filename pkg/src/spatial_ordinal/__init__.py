"""Ordinal-pattern test of spatial independence on irregular point clouds."""
from .covariance import KernelSpec, default_bandwidth, estimate_V
from .errors import (
    DegenerateCovarianceError,
    InvalidInputError,
    SingularCovarianceError,
    SpatialOrdinalError,
    ZeroFrequencyError,
)
from .geometry import PointCloud, SpatialGraph, build_blocks, build_graph
from .patterns import pattern_frequencies
from .wald import Geometry, TestReport, run_test

__version__ = "0.1.0"

__all__ = [
    "KernelSpec",
    "default_bandwidth",
    "estimate_V",
    "DegenerateCovarianceError",
    "InvalidInputError",
    "SingularCovarianceError",
    "SpatialOrdinalError",
    "ZeroFrequencyError",
    "PointCloud",
    "SpatialGraph",
    "build_blocks",
    "build_graph",
    "pattern_frequencies",
    "Geometry",
    "TestReport",
    "run_test",
]
