"""Exception hierarchy shared by all graphcarve stages."""


class GraphCarveError(Exception):
    """Base class for all library errors."""


class InputError(GraphCarveError, ValueError):
    """Malformed argument, shape mismatch, or violated precondition."""


class InfeasibleBallError(GraphCarveError):
    """Ball-restricted subspace sampling accepted essentially nothing."""


class ConstructionInfeasibleError(GraphCarveError):
    """Frame perturbation cannot be carried out for the given inputs."""


class DegenerateFrameError(GraphCarveError):
    """A vanishing denominator made an orthonormalization step undefined."""


class CoverInvalidError(GraphCarveError):
    """A direction cover failed one of its inclusion checks."""

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class ResolutionExhaustedError(GraphCarveError):
    """No admissible saved-ball radius survives at the cloud resolution."""


class RefinementCollapsedError(GraphCarveError):
    """A pipeline stage removed too much mass to continue."""

    def __init__(self, message, ledger=None):
        super().__init__(message)
        self.ledger = ledger


class NotAGraphError(GraphCarveError):
    """A point pair violates the projection lower bound of a graph set."""

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class AlgorithmInvariantViolation(GraphCarveError):
    """Internal bug trap: a certified invariant failed on finite data."""


# Errors that abort one stage of a run without indicating a library bug.
STAGE_COLLAPSE_ERRORS = (
    InfeasibleBallError,
    ConstructionInfeasibleError,
    DegenerateFrameError,
    CoverInvalidError,
    ResolutionExhaustedError,
    RefinementCollapsedError,
    NotAGraphError,
)
