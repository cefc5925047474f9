"""Exception types raised across the package."""


class DestructorError(Exception):
    """Base class for all errors raised by destructor_it."""


class InputError(DestructorError, ValueError):
    """Bad user input (files, shapes, arguments)."""


class NumericError(DestructorError, ArithmeticError):
    """A numeric procedure could not be completed on the given data."""


class MalformedRow(InputError):
    def __init__(self, line_no, reason=""):
        self.line_no = line_no
        msg = f"malformed row at line {line_no}"
        if reason:
            msg += f": {reason}"
        super().__init__(msg)


class EmptyData(InputError):
    pass


class BadFraction(InputError):
    pass


class DimensionMismatch(InputError):
    def __init__(self, expected, got):
        self.expected = expected
        self.got = got
        super().__init__(f"dimension mismatch: expected {expected} columns, got {got}")


class RowCountMismatch(InputError):
    def __init__(self, n_x, n_y):
        super().__init__(f"row count mismatch: {n_x} vs {n_y}")


class TooFewSamples(InputError):
    pass


class OutOfDomain(InputError):
    pass


class DegenerateDimension(NumericError):
    def __init__(self, message="dimension has zero range", layer=None, column=None):
        self.layer = layer
        self.column = column
        where = []
        if layer is not None:
            where.append(f"layer {layer}")
        if column is not None:
            where.append(f"column {column}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class RankDeficient(NumericError):
    pass


class RankDeficientWarning(UserWarning):
    pass


class NotPositiveDefinite(NumericError):
    pass


class VersionMismatch(DestructorError):
    pass


class CorruptModel(DestructorError):
    pass
