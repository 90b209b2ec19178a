"""Exception hierarchy shared across the package."""


class BdStabError(Exception):
    """Base class for all errors raised by bdstab."""


class DomainError(BdStabError, ValueError):
    """A state or vector lies outside the domain of an operation."""


class DimensionError(BdStabError, ValueError):
    pass


class Unsupported(BdStabError, ValueError):
    pass


class ContractError(BdStabError, RuntimeError):
    """An operation was called without its precondition being met."""


class ParseError(BdStabError, ValueError):
    def __init__(self, message, line=1, column=1):
        super().__init__(f"{message} (line {line}, column {column})")
        self.reason = message
        self.line = line
        self.column = column


class EvalError(BdStabError, ArithmeticError):
    def __init__(self, message, subexpr=None):
        super().__init__(message if subexpr is None else f"{message} in '{subexpr}'")
        self.subexpr = subexpr


class SchemaError(BdStabError, ValueError):
    """Scenario file violates the schema; ``pointer`` is a JSON pointer."""

    def __init__(self, pointer, message):
        super().__init__(f"{pointer or '/'}: {message}")
        self.pointer = pointer
        self.message = message


class HomogeneityError(BdStabError, ValueError):
    """Rates are not 0-homogeneous; ``witness`` holds (x, alpha, deviation)."""

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness
