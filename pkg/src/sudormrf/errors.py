"""Error taxonomy shared by the library, service, and CLI.

Each class maps to one process exit code so failures stay diagnosable
from scripts: usage errors exit 1, file/stream problems exit 2, contract
violations exit 3, and non-finite numerics exit 4.
"""


class EngineError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1
    kind = "engine"


class UsageError(EngineError):
    """Bad command line or request arguments."""

    exit_code = 1
    kind = "usage"


class DataIOError(EngineError):
    """Unreadable, unwritable, or malformed files and byte streams."""

    exit_code = 2
    kind = "data_io"


class ValidationError(EngineError):
    """Inputs that parse but violate a documented contract."""

    exit_code = 3
    kind = "validation"


class NumericalError(EngineError):
    """NaN or Inf produced where finite values are required."""

    exit_code = 4
    kind = "numerical"
