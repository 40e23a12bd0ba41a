"""Exception hierarchy shared by every subsystem."""


class CLError(Exception):
    """Base class for all library errors."""


class InvalidArgument(CLError, ValueError):
    pass


class ShapeError(CLError, ValueError):
    pass


class StateError(CLError, RuntimeError):
    pass


class NotFound(CLError, KeyError):
    def __str__(self):
        # KeyError repr-quotes its message; keep it readable
        return str(self.args[0]) if self.args else ""


class FormatError(CLError, ValueError):
    pass


class VersionError(CLError):
    pass


class CheckpointMismatch(CLError):
    pass


class LoggingError(CLError, RuntimeError):
    pass


class ConfigError(CLError, ValueError):
    pass


class OutOfRange(CLError, IndexError):
    pass
