class DynaSagaError(Exception):
    pass


class DimensionMismatchError(DynaSagaError, ValueError):
    pass


class NotStronglyConvexError(DynaSagaError, ValueError):
    pass


class ParseError(DynaSagaError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class OutOfActiveSetError(DynaSagaError, IndexError):
    pass


class CannotGrowError(DynaSagaError, ValueError):
    pass


class ReferenceOptimumError(DynaSagaError, ArithmeticError):
    """Raised when a reported suboptimality is negative beyond tolerance."""


class InstanceTooLargeError(DynaSagaError, MemoryError):
    pass
