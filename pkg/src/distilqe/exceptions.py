"""Exception hierarchy.

Every error carries a short machine-parsable ``category`` that the CLI prints
on failure.
"""


class DistilQEError(Exception):
    category = "error"


class DimensionError(DistilQEError, ValueError):
    category = "dimension"


class ContractError(DistilQEError, ValueError):
    """A documented precondition was violated by the caller."""

    category = "contract"


class NumericError(DistilQEError, ArithmeticError):
    category = "numeric"


class ConfigError(DistilQEError, ValueError):
    category = "config"


class ParseError(DistilQEError, ValueError):
    category = "parse"

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ScoreRangeError(ParseError):
    category = "range"


class FormatError(DistilQEError, ValueError):
    """Model container could not be decoded."""

    category = "format"

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class LookupMissError(DistilQEError, KeyError):
    category = "lookup"

    def __str__(self):
        return str(self.args[0]) if self.args else "lookup miss"


class MetricError(DistilQEError, ValueError):
    category = "metric"


class IndexRangeError(DistilQEError, IndexError):
    category = "index"
