"""Exception hierarchy shared across the package."""


class RumkitError(Exception):
    """Base class for all package-specific errors."""


class NumericalFailure(RumkitError):
    """A numerical procedure could not produce a trustworthy result."""


class CheckFailure(RumkitError):
    """A requested statistical or structural check did not pass."""


class ValidationError(RumkitError):
    """A specification object (model, grid, config) violates its invariants."""


class DomainError(RumkitError):
    """An evaluation point lies outside the declared domain of a model."""


class NoClosedFormError(RumkitError):
    """The noise family admits no closed-form choice probability."""


class GridMismatchError(RumkitError):
    """A grid is inconsistent with a model domain or a stored lattice."""


class ExtrapolationError(RumkitError):
    """A query point lies outside the convex hull of a tabulated field."""


class DegeneratePointError(NumericalFailure):
    """A derivative ratio is requested where the denominator vanishes."""


class RankDeficientBasisError(NumericalFailure):
    """The sieve normal equations are rank deficient."""


class NegativeRatioError(NumericalFailure):
    """A log-basis sieve fit received non-positive ratio samples."""


class CoverageError(NumericalFailure):
    """A characteristic failed to reach the anchor line inside the integration box."""


class StepUnderflowError(NumericalFailure):
    """Adaptive step halving hit its floor during ODE integration."""


class LevelRangeError(NumericalFailure):
    """A requested level value lies outside the attained range of a level function."""


class SupportError(NumericalFailure):
    """A heterogeneity point cannot be mapped back into the tabulated field."""


class NegativeDensityError(NumericalFailure):
    """Reconstructed density is negative beyond the sign-noise tolerance."""


class UnnormalizedDensityError(NumericalFailure):
    """Density mass is too far from 1 for integration to be meaningful."""


class ProvenanceError(RumkitError):
    """Artifacts from different identification runs were mixed."""
