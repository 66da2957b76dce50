"""Exception types shared across the package."""


class RegimeError(ValueError):
    """Raised when a (m, N, p) combination is outside the admissible regime."""


class FieldDomainError(ValueError):
    """Raised for nodal-field inputs outside a function's domain
    (negative entries under fractional powers, times past extinction, ...)."""


class StepRejected(RuntimeError):
    """Implicit step could not be completed at the requested dt.

    Callers are expected to halve dt and retry.
    """


class ExtinctionNotReached(RuntimeError):
    """An operation needed a finite extinction time but the trajectory has none."""


class NoSolutionError(RuntimeError):
    """Stationary problem has no positive solution (Pohozaev obstruction)."""


class BlowUpError(RuntimeError):
    """Rescaled flow exceeded the blow-up guard."""


class PreconditionError(ValueError):
    """An operation's stated precondition does not hold for the given input."""
