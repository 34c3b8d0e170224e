"""Exception hierarchy shared by all pipeline stages.

Exit-code mapping used by the CLI:
    0  success
    2  ParameterError / ConfigError (bad inputs or configuration)
    3  FormatError (malformed or truncated stream files)
    4  HardFault (internal invariant breach, always a bug)
"""


class ParameterError(ValueError):
    """Invalid value passed to an operation (non-positive rate, bad range)."""


class ConfigError(ValueError):
    """Invalid or inconsistent configuration (unknown key, impossible widths)."""


class FormatError(Exception):
    """Malformed serialized data.

    ``offset`` points at the first offending byte when known.
    """

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class StreamOrderError(FormatError):
    """Frames arrived out of the fixed TDM channel order."""


class UndefinedPhaseError(ArithmeticError):
    """Both correlation sums are zero, the phase is undefined."""


class HardFault(RuntimeError):
    """Invariant breach that configuration was supposed to rule out."""
