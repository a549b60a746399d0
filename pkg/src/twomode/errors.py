"""Typed domain errors shared across the package.

Every error raised on a violated contract derives from ``DomainError`` so the
CLI can map them to exit code 1 while genuine bugs still surface as ordinary
exceptions.
"""


class DomainError(Exception):
    """Base class for contract violations with a physical meaning."""


class TargetUnreachable(DomainError):
    """The calibration target is never crossed inside the search window."""


class NonMonotoneWindow(DomainError):
    """The effective rotation angle reverses direction inside the window."""


class StepTooCoarse(DomainError):
    """Integrator self-check failed: halving the step moved the result."""


class TruncationOverflow(DomainError):
    """An operation lost more probability to the Fock cutoff than allowed."""


class GridTooNarrow(DomainError):
    """A quadrature grid does not contain the state's support."""


class InsufficientAngles(DomainError):
    """Too few distinct rotation angles for a tomographic reconstruction."""


class FitDiverged(DomainError):
    """Model fit residual exceeded its acceptance threshold."""


class OrthogonalPostselection(DomainError):
    """Weak value undefined: postselected state orthogonal to the input."""


class EmptyPostselection(DomainError):
    """The postselection window carries (numerically) zero probability."""


class TooFewAngles(DomainError):
    """Not enough usable angle scans to assemble a joint phase surface."""


class NotReconstructible(DomainError):
    """State phase varies only with angle; the radial weak scan is blind."""


class ParseError(DomainError):
    """A textual spec could not be parsed; carries the offending position."""

    def __init__(self, message: str, position: int | None = None):
        super().__init__(message if position is None else f"{message} (at position {position})")
        self.position = position


class NormalizationError(DomainError):
    """Explicit amplitudes deviate from unit norm beyond tolerance."""
