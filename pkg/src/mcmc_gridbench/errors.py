"""Exception types shared across the package."""


class GridbenchError(Exception):
    pass


class ZeroVariance(GridbenchError, ValueError):
    pass


class BadLag(GridbenchError, ValueError):
    pass


class SingularToeplitz(GridbenchError, ValueError):
    pass


class NonstationaryInput(GridbenchError, ValueError):
    pass


class Degenerate(GridbenchError, ValueError):
    """Series has too few distinct values to identify an AR model."""


class ConfigError(GridbenchError, ValueError):
    pass


class ParseError(GridbenchError, ValueError):
    def __init__(self, message, line=None, column=None):
        super().__init__(message)
        self.line = line
        self.column = column


class VersionError(GridbenchError, ValueError):
    pass


class MissingTiming(GridbenchError, ValueError):
    pass


class EmptySelection(UserWarning):
    """A grid panel had no rows; it is rendered blank."""
