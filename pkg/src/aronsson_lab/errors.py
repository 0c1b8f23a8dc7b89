"""Exception types raised by the toolkit."""


class AronssonLabError(Exception):
    """Base class for all toolkit errors."""


class DimensionMismatch(AronssonLabError, ValueError):
    pass


class SingularPoint(AronssonLabError):
    """H(x, p) is at or below the singular tolerance, so H_p / feedback are undefined."""

    def __init__(self, x, H, tol):
        super().__init__(f"singular point: H={H:.3e} <= tol_H={tol:.1e} at x={list(map(float, x))}")
        self.x = x
        self.H = H
        self.tol = tol


class EvalOutsideDomain(AronssonLabError):
    """Candidate evaluated where it is not C^1 (or C^2 when a hessian was requested)."""


class HessianUnavailable(EvalOutsideDomain):
    pass


class NoExit(AronssonLabError):
    """Trajectory did not leave the box within the horizon."""


class CFLViolation(AronssonLabError, ValueError):
    pass


class NonConvergence(AronssonLabError):
    def __init__(self, msg, grid=None):
        super().__init__(msg)
        self.grid = grid


class EmptyRegion(AronssonLabError):
    pass


class InsufficientPoints(AronssonLabError):
    pass


class ConfigError(AronssonLabError, ValueError):
    pass
