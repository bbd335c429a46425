"""Exception types shared across the toolkit."""


class SmoothgenError(Exception):
    """Base class for all toolkit errors."""


class SchemaError(SmoothgenError):
    """A file or record violates its schema or an invariant."""

    def __init__(self, message, path=None, line=None):
        loc = ""
        if path is not None:
            loc = f"{path}"
            if line is not None:
                loc += f":{line}"
            loc += ": "
        super().__init__(loc + message)
        self.path = path
        self.line = line


class DegenerateSampleError(SmoothgenError):
    """A statistic is undefined on the given sample (e.g. all values tied)."""


class ConvergenceError(SmoothgenError):
    """An iterative solver failed to converge within its iteration budget."""

    def __init__(self, message, gap=None):
        super().__init__(message)
        self.gap = gap


class DivergenceError(SmoothgenError):
    """Training produced a non-finite loss."""

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch
