"""Exception types shared across the package."""


class ContractError(ValueError):
    """An operation was called outside its documented preconditions."""


class ShapeError(ContractError):
    """Operand shapes are incompatible."""


class NonFiniteError(FloatingPointError):
    """A loss or gradient became NaN or infinite."""

    def __init__(self, message, name=None):
        super().__init__(message)
        self.name = name


class CheckpointError(IOError):
    """A checkpoint file could not be decoded."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field
