"""
Error Types

Every failure a service can report is a HorseshoeError subclass.
Non-fatal conditions are HorseshoeWarning subclasses, emitted with
warnings.warn and logged by the caller.
"""

from typing import Any


class HorseshoeError(Exception):
    """
    Base class for all errors raised by the package.

    Args:
        message: Human-readable description
        **context: Structured details (node index, measured value, bound, ...)
    """

    def __init__(self, message: str, **context: Any):
        super().__init__(message)
        self.context = context


class ConfigError(HorseshoeError):
    """Run configuration could not be loaded or validated."""


class NonConvergence(HorseshoeError):
    """A Newton solve did not converge."""


# Affine-like calculus
class VanishingDerivative(HorseshoeError):
    """|A_x| or |B_y| fell below derivative_floor."""


class ProjectionNotInvertible(NonConvergence):
    """The graph of a diffeomorphism does not project onto the (y0, x1) rectangle."""


class DeltaDegenerate(HorseshoeError):
    """1 - A'_y B_x came too close to zero during elimination."""


class EmptyIntersection(HorseshoeError):
    """Composed strips do not meet."""


class ChartMismatch(HorseshoeError):
    """Image chart of the first map differs from the domain chart of the second."""


# Parabolic composition
class PC1Violated(HorseshoeError):
    """Maps adjacent to the fold are not adapted to the tongue geometry."""


class PC2Violated(HorseshoeError):
    """Displacement too small for parabolic composition."""


class NoIntersection(HorseshoeError):
    """The pulled-back and pushed-forward curves miss each other."""


class FamilyNotMonotone(HorseshoeError):
    """A curve family is not monotone in its parameter."""


class InvalidGeometry(HorseshoeError):
    """Fold geometry leaves its chart."""


# Model family
class NotATransition(HorseshoeError):
    """Requested pair of rectangles is not an allowed transition."""


class NotUnfolded(HorseshoeError):
    """Tongues only exist for t > 0."""


# Classes and forests
class NotAForest(HorseshoeError):
    """An up-set is not a finite chain."""


class BudgetExhausted(HorseshoeError):
    """Class extension hit max_elements; the partial class is attached."""

    def __init__(self, message: str, partial: Any = None, **context: Any):
        super().__init__(message, **context)
        self.partial = partial


# Parameters
class ConventionViolated(HorseshoeError):
    """Exponent calculus requires d_s >= d_u."""


# Dimension
class TruncationTooCoarse(HorseshoeError):
    """Excluded primes carry too much mass for the dimension to be trusted."""


class BracketFailure(HorseshoeError):
    """The dominant eigenvalue does not straddle 1 on the bracket."""


class HorseshoeWarning(UserWarning):
    """Base class for non-fatal conditions."""


class DegreeTooLow(HorseshoeWarning):
    """Trailing spectral coefficients exceed fit_tolerance."""


class H4Violated(HorseshoeWarning):
    """Configured dimensions fail the (H4) inequality."""


class TooFewCandidates(HorseshoeWarning):
    """Fewer than two candidate subintervals at some level."""


class ConstantsOrderingWarning(HorseshoeWarning):
    """0 < eps0 < eta < tau < beta - 1 < 1 does not hold."""
