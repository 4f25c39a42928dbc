"""Exception hierarchy. Each class maps to one CLI exit code."""


class SpatialOrdinalError(Exception):
    exit_code = 4


class InvalidInputError(SpatialOrdinalError, ValueError):
    """Malformed or inconsistent input data."""

    exit_code = 3


class ZeroFrequencyError(SpatialOrdinalError, ValueError):
    """A pattern never occurred and smoothing is disabled."""

    exit_code = 3

    def __init__(self, pattern):
        self.pattern = tuple(pattern)
        super().__init__(
            f"pattern {self.pattern} has zero frequency; "
            "ALR is undefined without smoothing"
        )


class DegenerateCovarianceError(SpatialOrdinalError):
    """Every block carries the same pattern, so no covariance can be estimated."""

    exit_code = 4


class SingularCovarianceError(SpatialOrdinalError):
    exit_code = 4
