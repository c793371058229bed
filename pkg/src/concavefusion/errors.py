"""Exception hierarchy shared by all modules."""


class FusionError(Exception):
    """Base class for every error raised by the package."""


class DataError(FusionError, ValueError):
    pass


class NonFiniteError(DataError):
    def __init__(self, name, row, col):
        self.name, self.row, self.col = name, row, col
        super().__init__(f"non-finite value in {name} at row {row}, col {col}")


class RankDeficientZ(DataError):
    pass


class ShapeMismatch(DataError):
    pass


class ZeroVarianceColumn(DataError):
    def __init__(self, col):
        self.col = col
        super().__init__(f"column {col} has zero variance")


class NegativeArgument(FusionError, ValueError):
    pass


class IncompatibleGamma(FusionError, ValueError):
    pass


class SingularSystem(FusionError, ArithmeticError):
    pass


class NotConverged(FusionError, RuntimeError):
    """Raised when ADMM hits ``max_iter``; the last iterate rides along on ``state``."""

    def __init__(self, state):
        self.state = state
        super().__init__(
            f"ADMM stopped after {state.iter} iterations "
            f"(primal={state.primal_norm:.3g}, dual={state.dual_norm:.3g})"
        )


class InvalidRange(FusionError, ValueError):
    pass


class EmptyPath(FusionError, ValueError):
    pass


class NoConvergedPoint(FusionError, RuntimeError):
    pass


class NonPositiveDof(FusionError, ValueError):
    pass


class SingularSchur(FusionError, ArithmeticError):
    pass


class SingularContrastCovariance(FusionError, ArithmeticError):
    pass


class InvalidLevel(FusionError, ValueError):
    pass


class InvalidDof(FusionError, ValueError):
    pass
