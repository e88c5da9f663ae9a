"""Exception hierarchy shared across embedmap."""


class EmbedMapError(Exception):
    """Base class for every error raised by this package."""


class ProtocolError(EmbedMapError, ValueError):
    """Inputs violate a structural contract (shapes, IDs, counts, ranges)."""


class NumericalError(EmbedMapError, ArithmeticError):
    """A linear-algebra step cannot be carried out reliably."""


class DegenerateVectorError(NumericalError):
    """A vector is too close to zero to define a direction."""


class ParseError(ProtocolError):
    """A text file could not be parsed. Carries the 1-based line number when known."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        elif line is not None:
            where = f"line {line}: "
        super().__init__(where + message)


class FormatError(EmbedMapError):
    """A binary or JSON file is not in the expected format."""


class IncompatibleVersionError(FormatError):
    """The file declares a format version this library does not read."""
