"""Exception hierarchy shared across the toolkit.

Validation errors carry enough context (file, row, field) to locate the
offending record without re-running the loader.
"""


class AffectLabError(Exception):
    """Base class for all toolkit errors."""


class MissingFile(AffectLabError):
    pass


class SchemaViolation(AffectLabError):
    """A file row or field does not match the documented schema."""


class RangeViolation(SchemaViolation):
    """A value lies outside its declared range ([0,1] or [-1,1])."""


class DuplicateId(SchemaViolation):
    pass


class TooFewSubjects(AffectLabError):
    pass


class DegenerateInput(AffectLabError):
    """Zero-variance input where a correlation is requested."""


class OutOfDomain(AffectLabError):
    pass


class SingleClassReference(AffectLabError):
    """UAR reference vector contains a single class."""


class NoValidPairs(AffectLabError):
    """Every annotator pair was degenerate for this statistic."""


class MissingLabelStats(AffectLabError):
    pass


class ShapeMismatch(AffectLabError):
    pass


class NonFiniteLoss(AffectLabError):
    pass


class Divergence(AffectLabError):
    """Training loss became non-finite; carries the partial epoch log."""

    def __init__(self, message, log=None):
        super().__init__(message)
        self.log = log if log is not None else []


class EmptyOverlap(AffectLabError):
    pass


class RankDeficient(AffectLabError):
    pass


class MissingLevel(AffectLabError):
    """A factor level required by the design is absent from the data."""


class NonConvergence(AffectLabError):
    """MCMC diagnostics exceeded the configured R-hat limit."""


class ConfigInvalid(AffectLabError):
    pass


class IllConditionedWarning(UserWarning):
    """Least-squares system was rank deficient; ridge fallback engaged."""
