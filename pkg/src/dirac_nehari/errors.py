"""Exception types raised across the package."""


class SymmetryError(ValueError):
    """Operator matrix is not symmetric (hermitian) to tolerance."""

    def __init__(self, defect, tolerance):
        super().__init__(f"operator not symmetric: defect {defect:.3e} > {tolerance:.3e}")
        self.defect = defect


class NotPositiveDefiniteError(ValueError):
    """Gram matrix failed Cholesky; ``pivot`` is the 0-based offending pivot."""

    def __init__(self, pivot):
        super().__init__(f"gram matrix not positive definite at pivot {pivot}")
        self.pivot = pivot


class DimensionError(ValueError):
    pass


class DegenerateDirectionError(ValueError):
    """The positive part of v vanishes, so (u, v) lies in H^-."""


class ChartError(ValueError):
    pass


class GridTooSmallError(RuntimeError):
    """Brute-force maximizer landed on the boundary of the search box."""


class ConfigError(ValueError):
    pass
