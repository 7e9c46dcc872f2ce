"""Exception hierarchy shared by every module of the package."""


class SivcmError(Exception):
    """Base class; ``code`` is the machine-readable tag printed by the CLI."""

    code = "sivcm_error"


class NonFinite(SivcmError, ValueError):
    code = "non_finite"


class NotSymmetric(SivcmError, ValueError):
    code = "not_symmetric"


class SingularAfterRidge(SivcmError, ArithmeticError):
    code = "singular_after_ridge"


class EmptyWindow(SivcmError, ArithmeticError):
    """No observation receives positive kernel weight at an evaluation point."""

    code = "empty_window"

    def __init__(self, u, message=None):
        self.u = float(u)
        super().__init__(message or f"no positive kernel weight at u={self.u!r}")


class DegenerateInput(SivcmError, ValueError):
    code = "degenerate_input"


class NoFeasiblePoint(SivcmError, ArithmeticError):
    code = "no_feasible_point"


class TooFewObservations(SivcmError, ValueError):
    code = "too_few_observations"


class AllInfinite(SivcmError, ArithmeticError):
    code = "all_infinite"


class MalformedCsv(SivcmError, ValueError):
    code = "malformed_csv"

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
