"""Exception types shared across the package."""


class ContractViolation(ValueError):
    """An operation was called outside its documented contract."""


class DataFormatError(Exception):
    """An input file is malformed. Carries a file/row diagnostic."""

    def __init__(self, message, path=None, row=None):
        loc = ""
        if path is not None:
            loc = f" [{path}" + (f", row {row}" if row is not None else "") + "]"
        super().__init__(message + loc)
        self.path = path
        self.row = row


class TrainingDiverged(RuntimeError):
    """Training hit a non-finite loss or gradient and was aborted."""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class AuditViolation(RuntimeError):
    """A guarded target value was read while the access guard was active."""
