"""Exception types shared across the package."""


class PatchPopError(Exception):
    """Base class for all package errors."""


class StructuralModelError(PatchPopError):
    """Malformed building block (bad knots, empty window, shape mismatch).

    Raised at construction time, before any condition checking runs.
    """


class InvalidModelError(PatchPopError):
    """Model data violates a hard requirement (gamma <= 0, mu_inf <= 0, ...)."""


class StepSizeError(PatchPopError):
    """Integrator positivity clamp exceeded its tolerance; refine the step."""


class ConvergenceError(PatchPopError):
    """An iterative solver hit its iteration cap before reaching tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class ReducibleMatrixError(PatchPopError):
    """Spectral routines need an irreducible nonnegative matrix.

    The dispersal topology splits into disconnected blocks; analyze the
    components one patch group at a time instead.
    """


class PreconditionError(PatchPopError):
    """An operation's declared precondition does not hold for the inputs."""


class DegenerateEigenvalueError(PatchPopError):
    """First-order eigenvalue perturbation needs a simple dominant eigenvalue."""


class DesignError(PatchPopError):
    """A constructive scenario (e.g. the two-sink design) is infeasible."""


class ConsistencyError(PatchPopError):
    """Two routes to the same quantity disagree beyond their tolerances.

    Signals an integration or tolerance failure rather than bad user input.
    """


class ConfigError(PatchPopError):
    """Configuration file cannot be parsed or validated.

    ``location`` is a dotted path (or line/column string) identifying the
    offending entry.
    """

    def __init__(self, message, location=None):
        super().__init__(message if location is None else f"{location}: {message}")
        self.location = location
