"""Exception types shared across the package."""


class CapabilityError(RuntimeError):
    """Raised when an input exceeds a documented size limit of an exhaustive routine."""


class NotDefinedError(ValueError):
    """Raised when a quantity is undefined for the given input (e.g. zero advantage)."""


class MissingPairError(KeyError):
    """Raised when a dispatch distinguisher is evaluated on a prefix it does not cover."""
