"""Exception types shared across the package.

The CLI maps DataError subclasses to exit code 3 (bad input data or
configuration); any other exception is an internal error (exit 1).
"""


class CodenoiseError(Exception):
    """Base class for every error raised by this package."""


class DataError(CodenoiseError, ValueError):
    """Invalid input data or configuration supplied by the caller."""


class MalformedCode(DataError):
    """A code string does not normalize to a valid alphanumeric code."""


class IdenticalCodes(DataError):
    """A pairwise comparison was asked for a code against itself."""


class ParseError(DataError):
    """A data file could not be read or parsed; corpus messages carry the line number."""


class DuplicateNoteId(DataError):
    """Two corpus records share a note id."""


class InvalidConfig(DataError):
    """A configuration value is out of range or inconsistent."""


class NoValidatedLabels(DataError):
    """An operation needed validated labels on notes that lack them."""


class EmptyIntersection(DataError):
    """Two annotation maps share no note ids."""


class EmptyTrainSet(DataError):
    """Vocabulary construction received no notes."""


class EmptyTrainingSet(DataError):
    """Model training received no instances."""


class LengthMismatch(DataError):
    """Parallel sequences differ in length."""


class DimensionMismatch(DataError):
    """A feature vector's dimensionality does not match the model."""


class WidthMismatch(DataError):
    """A label matrix's width does not match the model's output count."""


class EmptyInput(DataError):
    """An aggregate was asked for over an empty collection."""


class TargetInConfusionSet(DataError):
    """A confusion set contains the target code itself."""
