# backend/errors.py
"""Exception hierarchy shared by every backend module."""


class LabError(Exception):
    """Base class for errors the CLI reports as a one-line diagnostic."""


class MalformedInputError(LabError, ValueError):
    """Input bytes or headers do not follow the expected layout."""


class CorruptRecordError(LabError, ValueError):
    """A record parsed fine but carries an impossible value."""


class ContractViolation(LabError, ValueError):
    """A caller broke a documented pre-condition."""


class ConfigError(LabError):
    """Bad configuration key or value."""

    def __init__(self, message, key=None, line=None):
        self.key = key
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(key)
        prefix = ": ".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)


def require(condition, message):
    """Raise ContractViolation with message unless condition holds."""
    if not condition:
        raise ContractViolation(message)
