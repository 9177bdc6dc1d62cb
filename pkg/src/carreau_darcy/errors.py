"""Exception hierarchy shared by all subpackages."""


class CarreauDarcyError(Exception):
    """Base class for every error raised by this package."""


class InvalidShape(CarreauDarcyError, ValueError):
    pass


class InfeasibleResolution(CarreauDarcyError, ValueError):
    pass


class NonConformingSplit(CarreauDarcyError, AssertionError):
    pass


class NonTilingEps(CarreauDarcyError, ValueError):
    pass


class ParseError(CarreauDarcyError, ValueError):
    """Malformed mesh file; ``line`` is 1-based (0 when not applicable)."""

    def __init__(self, message, line=0):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


class UnsupportedElementType(CarreauDarcyError, ValueError):
    pass


class SpaceMeshMismatch(CarreauDarcyError, ValueError):
    pass


class SingularSystem(CarreauDarcyError, ArithmeticError):
    pass


class ToleranceNotReached(CarreauDarcyError, ArithmeticError):
    pass


class NewtonDiverged(CarreauDarcyError, ArithmeticError):
    def __init__(self, message, iterations=0, residual=float("nan"), xi=None):
        self.iterations = iterations
        self.residual = residual
        self.xi = xi
        super().__init__(message)


class OuterNewtonDiverged(CarreauDarcyError, ArithmeticError):
    def __init__(self, message, history=()):
        self.history = list(history)
        super().__init__(message)


class CellSolveError(CarreauDarcyError, ArithmeticError):
    """A cell problem failed while being evaluated for a macroscopic point."""

    def __init__(self, message, xi=None, triangle=None):
        self.xi = xi
        self.triangle = triangle
        super().__init__(message)


class OutOfTableRange(CarreauDarcyError, ValueError):
    def __init__(self, xi, message=None):
        self.xi = xi
        super().__init__(message or f"|xi| of {tuple(xi)} lies outside the tabulated radii")


class ExprSyntaxError(CarreauDarcyError, SyntaxError):
    """Forcing-expression syntax error with 1-based line/column."""

    def __init__(self, message, line, col, expected=None):
        self.line = line
        self.col = col
        self.expected = expected
        super().__init__(f"{line}:{col}: {message}")


class ExprEvalError(CarreauDarcyError, ValueError):
    pass


class ConfigError(CarreauDarcyError, ValueError):
    pass
