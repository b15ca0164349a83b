"""Exception hierarchy shared by all modules."""


class QnetError(Exception):
    """Base class for every error raised by the toolkit."""


class LayoutError(QnetError, ValueError):
    """Malformed system layout, unknown label or mismatched dimension."""


class NotHermitianError(QnetError, ValueError):
    """Operator deviates from Hermiticity beyond the symmetrization tolerance."""


class NotPSDError(QnetError, ValueError):
    """Operator has a negative eigenvalue beyond tolerance."""


class DegenerateSetError(QnetError, ValueError):
    """Constraint set without a strictly positive feasible point."""


class SolverError(QnetError, RuntimeError):
    """The SDP kernel failed to produce a usable iterate."""
