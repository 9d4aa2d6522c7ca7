"""Exception hierarchy.

Every error carries a short ``code`` naming its failure class so the CLI can
print one machine-parsable line per failure.
"""


class ThreatGraphError(Exception):
    code = "INTERNAL"


class DomainError(ThreatGraphError, ValueError):
    """An argument lies outside the domain an operation is defined on."""

    code = "NUMERIC"


class ParseError(ThreatGraphError, ValueError):
    """A document could not be parsed.

    ``offset`` is a byte offset for stream formats, ``line`` a 1-based line
    number for line-delimited formats.
    """

    code = "SCHEMA"

    def __init__(self, message, offset=None, line=None):
        super().__init__(message)
        self.offset = offset
        self.line = line


class FormatError(ParseError):
    pass


class ConstructionError(ThreatGraphError, ValueError):
    code = "SCHEMA"


class NodeLookupError(ThreatGraphError, KeyError):
    code = "SCHEMA"

    def __str__(self):
        return str(self.args[0]) if self.args else ""


class KindError(ThreatGraphError, TypeError):
    code = "SCHEMA"


class ShapeError(ThreatGraphError, ValueError):
    code = "NUMERIC"


class TrainingError(ThreatGraphError, ArithmeticError):
    code = "NUMERIC"

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class ConfigError(ThreatGraphError, ValueError):
    code = "CONFIG"
