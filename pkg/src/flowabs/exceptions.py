"""Exception types raised by the abstraction toolkit."""


class AbstractionError(Exception):
    """Base class for all toolkit errors."""


class CoverageGap(AbstractionError):
    def __init__(self, point):
        self.point = point
        super().__init__(f"sampled point {list(point)} lies in no region")


class NotCovered(AbstractionError):
    def __init__(self, point):
        self.point = point
        super().__init__(f"point {list(point)} is not contained in any cell")


class EmptyRegion(AbstractionError):
    pass


class Divergence(AbstractionError):
    """Trajectory left a box state space that was asserted forward invariant."""


class NotContractive(AbstractionError):
    pass


class NotOverApproximation(AbstractionError):
    pass


class TooManyUnresolved(AbstractionError):
    def __init__(self, fraction, threshold):
        self.fraction = fraction
        super().__init__(
            f"unresolved fraction {fraction:.4f} exceeds threshold {threshold:.4f}")


class OrderViolation(AbstractionError):
    def __init__(self, i, j):
        self.pair = (i, j)
        super().__init__(f"both ({i}, {j}) and ({j}, {i}) were witnessed")


class LevelSetEmpty(AbstractionError):
    pass


class NoAdmissibleChain(AbstractionError):
    pass


class ConfigError(AbstractionError):
    """Configuration document failed validation."""

    def __init__(self, messages):
        self.messages = list(messages)
        super().__init__("\n".join(self.messages))


class DescentViolation(AbstractionError):
    """A level function increases along the flow somewhere on the sample."""


class UnsupportedDimension(AbstractionError):
    """The requested output is not available in this state-space dimension."""
