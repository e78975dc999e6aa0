"""Exception hierarchy shared by the whole toolkit.

Every exception carries the process exit code the CLI maps it to:
0 success, 2 input/format error, 3 state error, 4 internal.
"""


class CnnsizerError(Exception):
    """Base class; unexpected internal failures exit with code 4."""

    exit_code = 4


class InputError(CnnsizerError):
    """Caller supplied invalid data (bad vectors, unknown classes, bad flags)."""

    exit_code = 2


class FormatError(InputError):
    """A file could not be parsed or violates its documented schema."""


class ChecksumError(FormatError):
    """Embedding payload does not match the checksum in its manifest."""


class UnknownClassError(InputError):
    """A class id was referenced that the data does not contain."""


class InsufficientDataError(InputError):
    """A class has too few instances for the requested statistic."""


class UndefinedCorrelationError(InputError):
    """Pearson correlation requested on a zero-variance sequence."""


class StateError(CnnsizerError):
    """Operation requires session state that does not exist yet."""

    exit_code = 3
