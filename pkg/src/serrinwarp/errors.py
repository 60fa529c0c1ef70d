"""Exception types raised across the package."""


class DomainError(ValueError):
    """A radius lies outside the interval on which the warping function lives."""


class ConstructionError(ValueError):
    """Catalog parameters violate a hard constraint (e.g. sigma > 0 on I)."""


class InadmissibleRadiusError(ValueError):
    """Ball radius too large for the k > 0 closed form (cos(sqrt(k) R) <= 0)."""


class NoSolutionError(RuntimeError):
    """Shooting could not bracket the boundary condition."""


class DegenerateRecoveryError(ValueError):
    """u' vanishes away from the pole, so sigma'/sigma cannot be recovered."""


class ChartOverflowError(ValueError):
    """A domain or path touches the edge of the (r, theta) chart."""


class SolverError(RuntimeError):
    """Linear solve failed or produced an unusable field."""


class InsufficientResolutionError(ValueError):
    """Too few boundary samples to estimate boundary-gradient statistics."""


class NotFoundError(RuntimeError):
    """No connecting geodesic found during the angle sweep."""


class ReducedAccuracyWarning(UserWarning):
    """Emitted when a derivative had to be approximated by finite differences."""
