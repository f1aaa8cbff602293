"""Exception and warning types raised across peacocklab."""


class PeacockError(Exception):
    """Base class for all library errors."""


class DimensionMismatch(PeacockError, ValueError):
    pass


class NonSymmetric(PeacockError, ValueError):
    pass


class NotPSD(PeacockError, ValueError):
    pass


class OutOfRange(PeacockError, ValueError):
    pass


class InsufficientData(PeacockError, ValueError):
    pass


class InvalidStart(PeacockError, ValueError):
    pass


class FlatSource(PeacockError, ValueError):
    """The source peacock has an interval with no second-moment growth."""


class MissingSummary(PeacockError, FileNotFoundError):
    pass


class NonFinite(PeacockError, ArithmeticError):
    """A simulated state became non-finite.

    Simulations do not raise this by default; they abort the offending path
    and record it.  It is raised when a caller asks for strict behaviour.
    """

    def __init__(self, path, step):
        super().__init__(f"non-finite state on path {path} at step {step}")
        self.path = path
        self.step = step


class OriginHit(NonFinite):
    def __init__(self, path, step):
        PeacockError.__init__(self, f"path {path} entered the origin guard at step {step}")
        self.path = path
        self.step = step


class DegenerateWeightsWarning(RuntimeWarning):
    """Kernel weights underflowed; a nearest-sample fallback was used."""


class AbortedPathsWarning(RuntimeWarning):
    """Statistics were computed on an ensemble containing aborted paths."""
