"""Exception types raised by the numerical kernels."""


class FinslerError(Exception):
    """Base class for all package errors."""


class RandersIllPosed(FinslerError):
    """Drift term dominates the base norm somewhere; F is not a norm there."""


class DegenerateTensor(FinslerError):
    """Fundamental tensor failed the positive-definiteness floor."""


class WindTooStrong(FinslerError):
    """Zermelo wind reaches or exceeds unit h-speed on the sampled domain."""


class LeftDomain(FinslerError):
    """Integrated path exited an open plane window (torus mode never raises)."""

    def __init__(self, point, t):
        super().__init__(f"path left domain at t={t:.6g}, point={tuple(point)}")
        self.point = point
        self.t = t


class StepUnderflow(FinslerError):
    """Adaptive integrator step size collapsed below the floor."""


class NoConvergence(FinslerError):
    """Newton shooting failed; target likely outside local invertibility."""


class NotFound(FinslerError):
    """Shooting fan produced no bracket for a minimal geodesic."""


class GridTooCoarse(FinslerError):
    """Grid spacing exceeds the metric's variation scale (heuristic test)."""


class SequenceTooShort(FinslerError):
    """Approach sequence has too few points to estimate a limit."""


class NoLimit(FinslerError):
    """Approach directions fail the Cauchy test; no limit direction."""


class AmbiguousJunction(FinslerError):
    """Too many interface crossings in one cell; resolution too coarse."""


class PointNotOnGraph(FinslerError):
    """Query point could not be located on the cut graph."""


class TOutOfRange(FinslerError):
    """Requested level is outside (0, max field value)."""


class ConfigError(FinslerError):
    """Scenario configuration is malformed; message names the offending key."""
