"""Exception types shared across the package.

The service layer and the CLI map these onto error categories / exit codes:
validation failures -> 2, domain errors (boundary states, unidentifiable
directions) -> 3, degenerate experiments -> 4.
"""


class TomobenchError(Exception):
    """Base class for all errors raised by this package."""


class InvariantViolation(TomobenchError):
    """An input broke a structural invariant (bad shapes, non-PSD matrices, ...).

    ``invariant`` names the violated invariant so callers can report it.
    """

    def __init__(self, invariant: str, detail: str = ""):
        self.invariant = invariant
        self.detail = detail
        msg = invariant if not detail else f"{invariant}: {detail}"
        super().__init__(msg)


class BoundaryStateError(TomobenchError):
    """The state sits on (or too close to) the boundary of the state set.

    Rate formulas assume an interior true state: all outcome probabilities
    strictly positive and the density operator full rank.
    """


class SupportViolationError(TomobenchError):
    """The loss penalizes a direction the measurement cannot identify.

    Raised when the Hessian's support is not contained in the Fisher
    matrix's support; the error-probability rate bound is then infinite.
    """


class DegenerateExperimentError(TomobenchError):
    """An experiment produced no usable data (all runs censored, empty
    constraint set, ...)."""
