"""Exception types shared across the lab."""


class DomainError(ValueError):
    """An argument lies outside the operation's domain (bad id, bad ratio, ...)."""


class NumericError(ArithmeticError):
    """A computation produced or received a non-finite value."""


class StateCorruptionError(RuntimeError):
    """Scheduler state is inconsistent, e.g. a prompt has no cached pair."""


class LogFormatError(ValueError):
    """A run log is missing or malformed."""

    def __init__(self, path, line_no, message):
        self.path = path
        self.line_no = line_no
        super().__init__(f"{path}:{line_no}: {message}")
