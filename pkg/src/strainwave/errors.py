"""Exception hierarchy shared across the toolkit.

Two families matter for the CLI exit codes: configuration/domain problems
(:class:`ValidationError`, exit code 2) and numerical failures
(:class:`NumericalError`, exit code 3).
"""

from __future__ import annotations


class StrainwaveError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(StrainwaveError):
    """Invalid input, configuration, or domain violation."""


class NumericalError(StrainwaveError):
    """A numerical procedure failed or hit a singular configuration."""


class NotLieAlgebraElement(ValidationError):
    """Matrix does not have the se(3) pattern (skew top-left, zero bottom row)."""


class SingularRotation(NumericalError):
    """Rotation angle at the pi singularity where the SE(3) log is undefined."""


class OutOfDomain(ValidationError):
    """Abscissa outside the rod interval [0, L]."""


class DegenerateTangent(NumericalError):
    """Actuator path tangent has (numerically) zero length."""


class NoConvergence(NumericalError):
    """Iteration failed to reach its residual target.

    Carries the last iterate and residual so callers can inspect or reuse it.
    """

    def __init__(self, message: str, last_iterate=None, residual: float | None = None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.residual = residual


class SingularMass(NumericalError):
    """Generalized mass matrix conditioning exceeds the admissible bound."""


class ZeroEnergy(NumericalError):
    """Spectral or basis energy denominator is (numerically) zero."""


class EmptyDictionary(ValidationError):
    """Basis dictionary has no atoms for the requested operation."""


class LengthMismatch(ValidationError):
    """Paired sequences have different lengths."""


class IndexOutOfRange(ValidationError):
    """Time or sample index outside the sampled grid."""
