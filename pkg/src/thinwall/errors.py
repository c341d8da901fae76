"""Exception hierarchy shared by all thinwall modules."""


class ThinwallError(Exception):
    """Base class for every error raised by the toolkit."""


class DegenerateChart(ThinwallError):
    def __init__(self, u, v, det_g):
        self.u, self.v, self.det_g = u, v, det_g
        super().__init__(f"chart is degenerate at (u={u!r}, v={v!r}): det g = {det_g!r}")


class SourceOnSurface(ThinwallError):
    """A field evaluated to a non-finite value at a surface or probe point."""


class GridTooCoarse(ThinwallError):
    pass


class ThickSlab(ThinwallError):
    pass


class GridMismatch(ThinwallError):
    pass


class MetadataMismatch(ThinwallError):
    pass


class ShapeMismatch(ThinwallError):
    pass


class SingularShift(ThinwallError):
    """The shifted operator could not be factorized; perturb the shift."""


class NotConverged(ThinwallError):
    """Iterative eigensolver stopped early. ``result`` holds the partial spectrum."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class StabilityViolation(ThinwallError):
    pass


class DegenerateTracking(ThinwallError):
    pass


class ConfigError(ThinwallError):
    pass
