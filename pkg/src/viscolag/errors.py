"""Exception types raised by the solvers and diagnostics.

Each solver-level failure carries the process exit code used by the CLI.
"""


class ViscoError(Exception):
    exit_code = 1


class ConfigError(ViscoError, ValueError):
    exit_code = 2


class SingularMap(ViscoError):
    """The flow map stopped being a diffeomorphism (min J at or below the floor)."""

    exit_code = 3

    def __init__(self, min_jac, floor=0.0):
        self.min_jac = float(min_jac)
        self.floor = float(floor)
        super().__init__(f"min J = {self.min_jac:.3e} <= {self.floor:g}")


class NoConvergence(ViscoError):
    exit_code = 4

    def __init__(self, iterations, residual):
        self.iterations = int(iterations)
        self.residual = float(residual)
        super().__init__(
            f"pressure fixed point did not converge after {self.iterations} "
            f"iterations (relative residual {self.residual:.3e})"
        )


class StepRejected(ViscoError):
    exit_code = 5

    def __init__(self, jac_error, tol):
        self.jac_error = float(jac_error)
        self.tol = float(tol)
        super().__init__(f"max|J - 1| = {self.jac_error:.3e} exceeds {self.tol:.1e}")


class OracleFailure(ViscoError):
    exit_code = 6


class NonZeroMean(ViscoError, ValueError):
    pass


class NotDivergenceFree(ViscoError, ValueError):
    pass


class OutOfRange(ViscoError, ValueError):
    pass


class NonPositiveSamples(ViscoError, ValueError):
    pass


class WindowTooSmall(ViscoError, ValueError):
    pass
