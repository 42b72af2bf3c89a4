"""Exception types shared across the package.

Every domain error derives from CritScatError so service handlers can map
them uniformly onto HTTP 422 responses.
"""


class CritScatError(Exception):
    """Base class for all domain errors."""


class ConfigError(CritScatError):
    """Invalid or inconsistent experiment configuration."""


class AnnulusEmpty(CritScatError):
    """Packet annulus is empty: 2*eps >= R."""


class AnnulusTooWide(CritScatError):
    """Packet annulus exceeds the grid's Nyquist margin."""


class ZeroTime(CritScatError):
    """Gauge phase requested at t = 0."""


class ScaleOverflow(CritScatError):
    """Dilated support would leave the grid."""


class DegenerateTime(CritScatError):
    """Truncated MDFM map requested at t = 1 (dilation by log 1 = 0)."""


class StepUnderflow(CritScatError):
    """Step-halving control reduced the step below its floor."""


class AliasingDetected(CritScatError):
    """Momentum mass too close to the grid Nyquist frequency."""


class DomainEscape(CritScatError):
    """Propagated state spread beyond the safe fraction of the box."""


class ToleranceNotMet(CritScatError):
    """Adaptive ODE integration could not reach the requested tolerance."""


class WindowTooNarrow(CritScatError):
    """Asymptotics fit window violates its minimum-span preconditions."""


class DivergentIntegral(CritScatError):
    """Closed-form tail integral requested in the divergent regime."""


class ShortRangeInput(CritScatError):
    """Divergence witness requested for a short-range potential."""
