"""Exception hierarchy shared by every module of the package."""


class PuschPoolError(Exception):
    """Base class for all errors raised by puschpool."""


# numerics
class LengthNotPowerOfFour(PuschPoolError, ValueError):
    pass


class DimensionMismatch(PuschPoolError, ValueError):
    pass


class NotPositiveDefinite(PuschPoolError, ValueError):
    pass


class SingularDiagonal(PuschPoolError, ValueError):
    pass


class PilotZero(PuschPoolError, ValueError):
    pass


# cluster model
class OutOfRange(PuschPoolError, IndexError):
    pass


# execution engine
class Deadlock(PuschPoolError, RuntimeError):
    def __init__(self, cycle, sleeping, blocked):
        self.cycle = cycle
        self.sleeping = sorted(sleeping)
        self.blocked = sorted(blocked)
        super().__init__(
            f"no core can make progress at cycle {cycle}: "
            f"{len(self.sleeping)} sleeping {self.sleeping[:16]}, "
            f"{len(self.blocked)} blocked {self.blocked[:16]}"
        )


class MismatchedParticipants(PuschPoolError, RuntimeError):
    pass


# layouts
class TooFewCores(PuschPoolError, ValueError):
    pass


NotPowerOfFour = LengthNotPowerOfFour


class TooLarge(PuschPoolError, ValueError):
    pass


class DimensionTooSmall(PuschPoolError, ValueError):
    pass


class SizeMismatch(PuschPoolError, ValueError):
    pass


class CapacityExceeded(PuschPoolError, ValueError):
    """A layout does not fit in the banks available to it."""


# pipeline / cli
class GoldenMismatch(PuschPoolError, AssertionError):
    pass


class ConfigError(PuschPoolError, ValueError):
    pass
