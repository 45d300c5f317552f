"""Exception hierarchy.

``PreconditionError`` subclasses mean the inputs fall outside the region where a
bound or routine is defined; the CLI maps them to exit code 2. Everything else
derived from ``RoqError`` is a runtime failure (exit code 1).
"""


class RoqError(Exception):
    pass


class PreconditionError(RoqError):
    pass


class RatioViolation(PreconditionError):
    """b/a is below e^(2e)."""


class OffsetTooLarge(PreconditionError):
    """(c/b)^2 >= e^e, so the negativity threshold does not apply."""


class CapTooSmall(RoqError):
    pass


class GammaTooSmall(PreconditionError):
    """The budget of uncertainty is below the gamma-large floor."""


class UnstableInstance(PreconditionError):
    pass


# short alias used by the multiclass module
Unstable = UnstableInstance


class TimeTooSmall(PreconditionError):
    pass


class NotNilpotent(PreconditionError):
    pass


class DimensionMismatch(RoqError):
    pass


class LengthMismatch(RoqError):
    pass


class EmptySequence(RoqError):
    pass


class PolicyUnknown(RoqError):
    pass


class HorizonExceeded(RoqError):
    """Sample path sequences ran out before the simulation horizon."""


class InsufficientData(RoqError):
    pass


class UnstableWarning(UserWarning):
    pass
