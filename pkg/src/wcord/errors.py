"""Exception types shared across the package."""


class WcordError(Exception):
    """Base class for all package errors."""


class ShapeError(WcordError):
    """Operands have incompatible shapes."""


class DomainError(WcordError):
    """Input outside an operation's mathematical domain (log of <= 0, etc.)."""


class ContractError(WcordError):
    """A call violated a documented precondition."""


class SolverUnderflowError(WcordError):
    """Transport kernel exp(-C/epsilon) underflowed to an all-zero row/column."""


class TrainingDivergedError(WcordError):
    """Training produced a non-finite loss; carries last diagnostics."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class CsvParseError(WcordError):
    """Malformed dataset CSV; message includes the offending line number."""


class ConfigError(WcordError):
    """Invalid run configuration; `pointer` is a JSON pointer to the bad key."""

    def __init__(self, pointer, message):
        super().__init__(f"{pointer}: {message}")
        self.pointer = pointer
