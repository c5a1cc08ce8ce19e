"""Exception hierarchy.

Every error raised by the package derives from :class:`WhisperDetError`.
The CLI maps the four intermediate classes onto its exit codes.
"""


class WhisperDetError(Exception):
    exit_code = 1


class ConfigError(WhisperDetError, ValueError):
    exit_code = 2


class DataError(WhisperDetError):
    """Unreadable, malformed or inconsistent input data."""

    exit_code = 3


class NumericError(WhisperDetError, ArithmeticError):
    exit_code = 4


class UsageError(WhisperDetError):
    exit_code = 5


# audio / manifest
class NotWav(DataError):
    pass


class UnsupportedFormat(DataError):
    pass


class Truncated(DataError):
    pass


class TooShort(DataError):
    pass


class ParseError(DataError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DuplicateUtteranceId(ParseError):
    pass


class UnknownLabel(ParseError):
    pass


# features
class EmptyGroup(DataError):
    pass


class DegenerateLpc(NumericError):
    pass


# neural
class DimMismatch(DataError, ValueError):
    pass


class NonFiniteLoss(NumericError):
    def __init__(self, epoch, batch, loss):
        super().__init__(f"non-finite loss {loss!r} at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch


class NonFiniteParams(NumericError):
    def __init__(self, epoch, name):
        super().__init__(f"parameter {name} left the float32 range at epoch {epoch}")
        self.epoch = epoch
        self.name = name


class VersionMismatch(DataError):
    pass


class CorruptFile(DataError):
    pass


# inference / metrics
class EmptyTrajectory(DataError, ValueError):
    pass


class EmptySet(DataError, ValueError):
    pass
