"""Exception hierarchy shared by all pipeline stages."""


class PedsimError(Exception):
    """Base class for every error raised by this package."""


class ParseError(PedsimError, ValueError):
    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}"
        super().__init__(f"{where}: {message}" if where else message)


class UnsupportedGeometryError(ParseError):
    """Raised for faces that are not triangles (quads, n-gons)."""


class DegenerateGeometryError(PedsimError, ValueError):
    pass


class FormatError(PedsimError, ValueError):
    pass


class OrderingError(FormatError):
    """Timestamps not strictly increasing."""


class ParameterError(PedsimError, ValueError):
    pass


class ConfigError(ParameterError):
    pass


class RangeError(PedsimError, ValueError):
    """Requested time span falls outside the available data (no extrapolation)."""


class UnderdeterminedError(PedsimError, ValueError):
    pass


class SingularityError(PedsimError, ArithmeticError):
    def __init__(self, message, condition=float("inf")):
        self.condition = condition
        super().__init__(f"{message} (condition estimate {condition:.3e})")


class ShapeError(PedsimError, ValueError):
    pass


class DivisionError(PedsimError, ZeroDivisionError):
    pass
