"""Exception types raised by the numerical core."""


class LabError(ValueError):
    """Base class for invalid inputs to the lab.

    Subclasses ValueError so callers that only know about ValueError
    (the REST layer maps it to HTTP 400) keep working.
    """


class GridMismatchError(LabError):
    """Array shape or grid geometry does not match the expected grid."""


class UnresolvedInputError(LabError):
    """Input carries spectral energy above the top resolved corona."""


class IndexRangeError(LabError):
    """Block, level or frequency index outside the admissible range."""


class NonRealInputError(LabError):
    """A real-valued grid function was required."""


class DerivativeUnavailableError(LabError):
    """Requested symbol derivative has no closure and finite differences are off."""


class MissingSpectraError(LabError):
    """A paradifferential result was produced without per-term spectra."""


class InadmissibleFamilyError(LabError):
    """Counterexample family parameters violate the admissibility rules."""


class InvalidSpecError(LabError):
    """Unsupported combination of space, symbol or probe parameters."""


class SerializationError(LabError):
    """Malformed grid-function document or binary payload."""
