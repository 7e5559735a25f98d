"""Exception hierarchy shared by every module of the package."""


class BisectionError(Exception):
    """Base class for all errors raised by globalbisect."""


class ParameterError(BisectionError, ValueError):
    """Invalid numeric parameter (radii, steps, sample counts, ...)."""


class TubeRadiusError(BisectionError):
    """The tube radius exceeds the reach of the curve."""


class NonInjectiveCurveError(BisectionError):
    """A curve meets itself."""


class PathPlanningError(BisectionError):
    """No admissible path could be found within the retry budget."""


class DimensionError(BisectionError):
    """Operation needs a base manifold of dimension >= 2."""


class FamilyMismatchError(BisectionError):
    """Elements or words from different groupoid families were combined."""


class NotComposableError(BisectionError):
    """beta(g) != alpha(h) for a requested product gh."""


class IllConditionedError(BisectionError):
    """A fiber map is singular or too badly conditioned to invert."""


class GaugeFitError(BisectionError):
    """The gauge ball around the target point does not fit in the region."""


class ConstructionError(BisectionError):
    """A constructed word failed its own through-point check."""


class NotConcordantError(BisectionError):
    """Base pairs violate the concordance condition (distinct sources, distinct targets)."""

    def __init__(self, message, pair=None):
        super().__init__(message)
        self.pair = pair


class NotIndependentError(BisectionError):
    """Pairs contain a chain, so no well-ordering exists."""


class DegenerateSpacingError(BisectionError):
    """Two named points are distinct but closer than the minimum spacing."""


class SamplingError(BisectionError):
    """Seeded sampling could not find an admissible point within budget."""


class SceneError(BisectionError):
    """Malformed scene or word file."""

    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class OrientationError(BisectionError):
    """Fiber maps of both determinant signs cannot lie on one bisection over a connected base."""
