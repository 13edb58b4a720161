"""Exception hierarchy shared by every subpackage.

The CLI maps these onto its exit-code contract, so each class carries the
code it should produce.
"""


class CloraError(Exception):
    exit_code = 1


class ContractError(CloraError):
    """A precondition of an operation was violated by the caller."""


class ShapeError(ContractError, ValueError):
    """Operand extents are incompatible."""


class GraphError(ContractError):
    """Misuse of the recorded computation graph."""


class ConfigError(CloraError, ValueError):
    pass


class ScheduleError(ConfigError):
    pass


class DataError(CloraError, ValueError):
    exit_code = 2


class ParseError(DataError):
    pass


class MagicError(ParseError):
    pass


class HeaderError(ParseError):
    pass


class TruncatedError(ParseError):
    pass


class PairingError(ParseError):
    pass


class CheckpointError(DataError):
    pass


class NumericError(CloraError, ArithmeticError):
    exit_code = 3
