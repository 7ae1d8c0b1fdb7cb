"""Exception hierarchy shared by every module."""


class ArtifactError(Exception):
    """Base class of every error raised by this package."""


class ParameterError(ArtifactError, ValueError):
    """An argument lies outside its admissible range."""


class AssumptionViolation(ArtifactError, ValueError):
    """A structural assumption on the random field (for example kappa < ln 2) fails."""


class DomainError(ArtifactError, ValueError):
    """An argument lies outside the domain of a function."""


class CoercivityError(ArtifactError, ArithmeticError):
    """The diffusion coefficient is not positive at some quadrature node."""


class FDStepError(ArtifactError, ArithmeticError):
    """A finite-difference estimate is not stable under step halving."""
