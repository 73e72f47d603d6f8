"""Exception hierarchy shared by all czreg modules."""


class CZRegError(Exception):
    """Base class for errors raised by czreg."""


class DomainError(CZRegError, ValueError):
    """An argument lies outside the domain of a function."""


class WeightParseError(CZRegError, ValueError):
    """A weight expression could not be parsed.

    Attributes
    ----------
    position : int
        Zero-based character offset of the offending token.
    """

    def __init__(self, message, position):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class UnboundedDilationError(CZRegError):
    """The supremum defining the dilation function did not settle on the grid."""


class IndexEstimationError(CZRegError):
    """Numeric estimation of Boyd indices diverged."""


class IndeterminateError(CZRegError):
    """A yes/no question could not be decided within numeric uncertainty."""


class NoBandError(CZRegError):
    """No integer n satisfies n < lower index <= upper index < n + 1."""


class FormatError(CZRegError, ValueError):
    """A sample file is malformed.

    Attributes
    ----------
    offset : int
        Byte offset at which the problem was detected.
    """

    def __init__(self, message, offset):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class InsufficientSamplesError(CZRegError):
    """Too few grid points fall inside a ball."""


class OutsideWindowError(CZRegError):
    """A ball or kernel support leaves the sampled window."""


class ConditioningError(CZRegError):
    """A least-squares design is rank deficient."""


class IterationLimitError(CZRegError):
    """An iterative solver hit its iteration cap.

    Attributes
    ----------
    last_iterate : object
        The final iterate, usually a :class:`~czreg.lp_approx.PolyJet`.
    residual : float
        Residual norm attained by ``last_iterate``.
    """

    def __init__(self, message, last_iterate=None, residual=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.residual = residual


class KernelConstructionError(CZRegError):
    """The moment system of the mollifier is singular."""


class ExtractionUnstableError(CZRegError):
    """Derivatives of mollifications do not settle as the scale shrinks.

    Attributes
    ----------
    diagnostics : dict
        Per-scale values recorded before giving up.
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class CompatibilityError(CZRegError):
    """A jet field failed the Whitney compatibility gate.

    Attributes
    ----------
    measured : float
        The measured compatibility constant.
    """

    def __init__(self, message, measured):
        super().__init__(message)
        self.measured = measured


class ExperimentInapplicableError(CZRegError):
    """The hypothesis side of an experiment fails broadly."""


class InvariantViolation(CZRegError, AssertionError):
    """An implication that must always hold was violated."""
